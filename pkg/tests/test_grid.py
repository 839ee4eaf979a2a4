import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gluebench.errors import DomainMismatch, EmptyRegion, InputError, SurfaceOutsideDomain
from gluebench.grid import (
    Annulus,
    Box,
    ConeShell,
    ScalarField,
    Sphere,
    SymTensorField,
    VectorField,
    build_domain,
    discrete_curl,
    discrete_divergence,
    discrete_gradient,
    div_array,
    flux_integral,
    grad_array,
    interpolate,
    rotated_gradient,
    sample_edges,
    sample_faces,
    sample_nodes,
    sphere_quadrature,
    weighted_inner,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_annulus_mask_and_distance(annulus2d):
    d = annulus2d
    x = d.cell_coords()
    r = np.hypot(x[0], x[1])
    assert np.array_equal(d.interior, (r > 1.0) & (r < 3.0))
    assert d.shape == (64, 64)
    assert np.all(d.dist[~d.interior] == 0)
    assert np.all(d.dist[d.boundary_adjacent()] == 0)
    assert d.dist.max() <= 1.0


def test_box_region_fills_grid():
    d = build_domain(Box(), 0.5, ((0.0, 0.0), (2.0, 3.0)))
    assert d.shape == (4, 6)
    assert d.interior.all()


def test_region_outside_box_is_rejected():
    with pytest.raises(EmptyRegion):
        build_domain(Annulus(1.0, 3.0), 0.1, ((-2.0, -2.0), (2.0, 2.0)))


def test_box_must_be_multiple_of_h():
    with pytest.raises(InputError):
        build_domain(Annulus(1.0, 3.0), 0.3, ((-3.2, -3.2), (3.2, 3.2)))


def test_bad_annulus_and_cone():
    with pytest.raises(InputError):
        Annulus(3.0, 1.0)
    with pytest.raises(InputError):
        ConeShell(0.6, 0.3, 4.0)


def test_largest_component_drops_cone_tip_slivers():
    R = 4.0
    box = ((-0.6 * R, -0.6 * R, 0.0), (0.6 * R, 0.6 * R, R))
    full = build_domain(ConeShell(0.3, 0.6, R), R / 20, box)
    kept = build_domain(ConeShell(0.3, 0.6, R), R / 20, box, largest_component=True)
    assert kept.n_interior <= full.n_interior
    assert np.all(full.interior[kept.interior])


@given(st.integers(3, 9), st.integers(3, 9), st.integers(0, 2**32 - 1))
def test_divergence_is_minus_gradient_transpose(nx, ny, seed):
    rng = np.random.default_rng(seed)
    h = 0.37
    u = rng.standard_normal((nx, ny))
    F = (rng.standard_normal((nx + 1, ny)), rng.standard_normal((nx, ny + 1)))
    lhs = sum(float(np.sum(g * f)) for g, f in zip(grad_array(u, h), F))
    rhs = -float(np.sum(u * div_array(F, h)))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@given(arrays(np.float64, (6, 7), elements=finite))
def test_rotated_gradient_is_solenoidal(s):
    d = build_domain(Box(), 1.0, ((0.0, 0.0), (5.0, 6.0)))
    E = rotated_gradient(d, s)
    div = discrete_divergence(E).values
    assert np.max(np.abs(div)) <= 1e-12 * max(1.0, float(np.max(np.abs(s))))


def test_discrete_curl_is_solenoidal(rng):
    d = build_domain(Box(), 0.25, ((0.0,) * 3, (1.0,) * 3))
    A = sample_edges(d, lambda x: np.array([np.sin(3 * x[1]), x[0] * x[2], np.cos(x[0] + x[1])]))
    assert np.max(np.abs(discrete_divergence(discrete_curl(d, A)).values)) < 1e-12


def test_gradient_of_linear_function_is_exact_inside():
    d = build_domain(Box(), 0.1, ((0.0, 0.0), (1.0, 1.0)))
    x = d.cell_coords()
    g = discrete_gradient(ScalarField(d, 2 * x[0] - 3 * x[1]))
    assert np.allclose(g.comps[0][1:-1, :], 2.0)
    assert np.allclose(g.comps[1][:, 1:-1], -3.0)


def test_field_shape_checks(annulus2d):
    d = annulus2d
    with pytest.raises(DomainMismatch):
        ScalarField(d, np.zeros((3, 3)))
    with pytest.raises(DomainMismatch):
        VectorField(d, (np.zeros(d.shape), np.zeros(d.shape)))


def test_symtensor_roundtrip(rng):
    d = build_domain(Box(), 1.0, ((0.0, 0.0), (3.0, 3.0)))
    a = rng.standard_normal((2, 2, 3, 3))
    a = a + a.swapaxes(0, 1)
    assert np.array_equal(SymTensorField.from_full(d, a).full(), a)


@pytest.mark.parametrize("dim,R", [(2, 1.5), (3, 2.0)])
def test_sphere_quadrature_area(dim, R):
    _, normals, w = sphere_quadrature(dim, R, h=0.05)
    area = 2 * math.pi * R if dim == 2 else 4 * math.pi * R**2
    assert np.sum(w) == pytest.approx(area, rel=1e-3)
    assert np.allclose(np.sum(normals**2, axis=0), 1.0)


def test_interpolation_reproduces_linear_functions():
    d = build_domain(Box(), 0.1, ((0.0, 0.0), (1.0, 1.0)))
    nodes = sample_nodes(d, lambda x: 1 + 2 * x[0] - x[1])
    pts = np.array([[0.13, 0.5, 0.77], [0.21, 0.33, 0.9]])
    assert np.allclose(interpolate(nodes, d, (True, True), pts), 1 + 2 * pts[0] - pts[1])
    with pytest.raises(SurfaceOutsideDomain):
        interpolate(nodes, d, (True, True), np.array([[2.0], [0.5]]))


def test_flux_of_uniform_field_vanishes_and_coulomb_flux_is_2pi(annulus2d):
    d = annulus2d
    E = sample_faces(d, lambda x: np.array([np.ones(x.shape[1:]), np.zeros(x.shape[1:])]))
    assert abs(flux_integral(E, Sphere(2.0))) < 1e-10
    C = sample_faces(d, lambda x: x / np.sum(x * x, axis=0))
    assert flux_integral(C, Sphere(2.0)) == pytest.approx(2 * math.pi, rel=1e-3)
    assert abs(flux_integral(C)) < 5e-3
    with pytest.raises(SurfaceOutsideDomain):
        flux_integral(C, Sphere(3.3))


def test_weighted_inner_counts_interior_cells(annulus2d):
    d = annulus2d
    one = ScalarField(d, np.ones(d.shape))
    assert weighted_inner(one, one) == pytest.approx(d.n_interior * d.h**2)

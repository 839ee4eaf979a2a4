import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from gluebench.elliptic import (
    assemble_by_probing,
    pcg,
    rayleigh_minimize,
    solve_faces,
    solve_weighted_poisson,
    stiffness_faces,
)
from gluebench.errors import DegenerateMass, NetSourceMismatch, NoConvergence
from gluebench.grid import Box, ScalarField, build_domain, div_array, grad_array
from gluebench.weights import WeightSpec, eval_phi, eval_psi


def test_pcg_solves_spd_system(rng):
    A = rng.standard_normal((30, 30))
    A = A @ A.T + 30 * np.eye(30)
    b = rng.standard_normal(30)
    x, info = pcg(lambda v: A @ v, b, 1.0 / np.diag(A), tol=1e-12, maxiter=200)
    assert np.allclose(A @ x, b, atol=1e-9)
    assert info["converged"]
    assert np.all(np.diff(info["energies"]) <= 1e-12)


def test_pcg_zero_rhs():
    x, info = pcg(lambda v: v, np.zeros(4))
    assert np.array_equal(x, np.zeros(4)) and info["iterations"] == 0


def _manufactured(domain, spec):
    x = domain.cell_coords()
    u = np.sin(x[0]) * np.cos(2 * x[1])
    u = np.where(domain.interior, u, 0.0)
    w = stiffness_faces(domain, spec)
    f = div_array(tuple(wa * ga for wa, ga in zip(w, grad_array(u, domain.h))), domain.h)
    return u, f


def test_manufactured_solution_recovered(annulus2d):
    spec = WeightSpec("power", sigma=2)
    u, f = _manufactured(annulus2d, spec)
    sol, rep = solve_weighted_poisson(annulus2d, spec, None, ScalarField(annulus2d, f), tol=1e-12)
    m = annulus2d.interior
    psi2 = eval_psi(spec, annulus2d).values ** 2
    diff = (sol.values - u)[m]
    diff -= np.sum(diff * psi2[m]) / np.sum(psi2[m])
    assert np.max(np.abs(diff)) < 1e-8
    assert rep.converged and rep.energy_monotone()
    # psi^2-mean zero
    assert abs(float(np.sum((sol.values * psi2)[m]))) < 1e-10


def test_cell_field_weights_match_spec_interface(annulus2d):
    spec = WeightSpec("power", sigma=2)
    _, f = _manufactured(annulus2d, spec)
    phi, psi = eval_phi(spec, annulus2d), eval_psi(spec, annulus2d)
    sol, rep = solve_weighted_poisson(annulus2d, phi, psi, f, tol=1e-10)
    assert rep.converged
    assert np.all(sol.values[~annulus2d.interior] == 0)


def test_net_source_strict_and_relaxed(annulus2d):
    f = np.where(annulus2d.interior, 1.0, 0.0)
    with pytest.raises(NetSourceMismatch) as exc:
        solve_weighted_poisson(annulus2d, WeightSpec("power", sigma=2), None, f)
    assert exc.value.defect == pytest.approx(annulus2d.n_interior * annulus2d.h**2)
    _, rep = solve_weighted_poisson(annulus2d, WeightSpec("power", sigma=2), None, f, strict=False)
    assert rep.projection_defect > 0


def test_iteration_cap_raises(annulus2d):
    spec = WeightSpec("power", sigma=2)
    _, f = _manufactured(annulus2d, spec)
    with pytest.raises(NoConvergence):
        solve_weighted_poisson(annulus2d, spec, None, f, max_iter=3)


def test_zero_source_gives_zero(annulus2d):
    sol, rep = solve_weighted_poisson(annulus2d, WeightSpec("exponential"), None, np.zeros(annulus2d.shape))
    assert np.all(sol.values == 0) and rep.iterations == 0


def test_neumann_eigenvalue_1d():
    n = 512
    d = build_domain(Box(), 1.0 / n, ((0.0,), (1.0,)))
    w = stiffness_faces(d, WeightSpec("unit"))
    w[0][0] = w[0][-1] = 0.0

    def A(x):
        return -div_array((w[0] * grad_array(x, d.h)[0],), d.h)

    res = rayleigh_minimize(A, lambda x: x, [np.ones(n)], n, tol=1e-10, seed=2)
    exact = (2 / d.h) ** 2 * math.sin(math.pi * d.h / 2) ** 2  # discrete Neumann eigenvalue
    assert res.lam == pytest.approx(exact, rel=1e-8)
    assert res.lam == pytest.approx(math.pi**2, rel=1e-2)
    assert res.kernel_quotients == [0.0]


def test_rayleigh_detects_degenerate_mass():
    with pytest.raises(DegenerateMass):
        rayleigh_minimize(lambda x: x, lambda x: x, [], 3, mass_diag=np.array([1.0, 0.0, 1.0]))


def test_rayleigh_direct_solve_matches_cg(rng):
    A = np.diag(np.arange(1.0, 41.0))
    lu_solve = np.linalg.inv(A + 1e-9 * np.eye(40))
    cg = rayleigh_minimize(lambda x: A @ x, lambda x: x, [np.eye(40)[0]], 40, tol=1e-10)
    direct = rayleigh_minimize(lambda x: A @ x, lambda x: x, [np.eye(40)[0]], 40, tol=1e-10, solve=lambda b: lu_solve @ b)
    assert cg.lam == pytest.approx(2.0, rel=1e-9)
    assert direct.lam == pytest.approx(2.0, rel=1e-9)


@given(st.integers(4, 11), st.integers(4, 11), st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_probing_reproduces_dense_matrix(nx, ny, reach, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((nx, ny)) < 0.8
    m = int(mask.sum())
    idx = np.argwhere(mask)
    dense = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if np.all(np.abs(idx[i] - idx[j]) <= reach):
                dense[i, j] = rng.standard_normal()
    M = assemble_by_probing(lambda v: dense @ v, mask, reach)
    assert isinstance(M, sp.csr_matrix)
    assert np.allclose(M.toarray(), dense)

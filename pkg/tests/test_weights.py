import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gluebench.errors import BandOutsideRegion, ParamOutOfRange
from gluebench.grid import Annulus, ConeShell, build_domain
from gluebench.weights import (
    CutoffSpec,
    WeightSpec,
    eval_cutoff,
    eval_phi,
    eval_psi,
    mass_weight,
    smoothstep,
    stiffness_weight,
)


@pytest.mark.parametrize(
    "spec",
    [WeightSpec("power", sigma=4), WeightSpec("exponential", s=1.0), WeightSpec("exotic", s=1.0, sigma=2.0), WeightSpec("unit")],
)
def test_weights_positive_inside_and_finite(annulus2d, spec):
    spec.validate(annulus2d.region, 2)
    psi = eval_psi(spec, annulus2d).values
    phi = eval_phi(spec, annulus2d).values
    m = annulus2d.interior
    assert np.all(np.isfinite(psi)) and np.all(np.isfinite(phi))
    assert np.all(psi[m] > 0)


def test_power_weight_closed_form(annulus2d):
    spec = WeightSpec("power", sigma=3)
    x = annulus2d.cell_coords()
    r = np.hypot(x[0], x[1])
    m = annulus2d.interior
    ab = (r - 1.0) * (3.0 - r)
    assert np.allclose(eval_psi(spec, annulus2d).values[m], ab[m] ** 3)
    assert np.allclose(stiffness_weight(spec, annulus2d, x)[m], ab[m] ** 4)
    assert np.allclose(mass_weight(spec, annulus2d, x)[m], ab[m] ** 6)


def test_exponential_weight_vanishes_faster_than_any_power(annulus2d):
    spec = WeightSpec("exponential", s=1.0)
    pts = np.array([[1.0 + 1e-2, 1.0 + 1e-3], [0.0, 0.0]])
    w = stiffness_weight(spec, annulus2d, pts)
    assert w[1] < 1e-300 or w[1] < w[0] * 1e-100


@pytest.mark.parametrize(
    "spec",
    [WeightSpec("power", sigma=0.0), WeightSpec("exponential", s=-1.0), WeightSpec("exotic", beta=0.0), WeightSpec("bogus")],
)
def test_invalid_parameters(spec):
    with pytest.raises(ParamOutOfRange):
        spec.validate(Annulus(1.0, 3.0), 2)


def test_cone_weights_need_cone_and_q_range():
    with pytest.raises(ParamOutOfRange):
        WeightSpec("cone", sigma=2, q=0.25).validate(Annulus(1.0, 3.0), 3)
    with pytest.raises(ParamOutOfRange):
        WeightSpec("cone", sigma=2, q=0.7).validate(ConeShell(0.3, 0.6, 4.0), 3)
    WeightSpec("cone", sigma=2, q=0.25).validate(ConeShell(0.3, 0.6, 4.0), 3)


def test_cutoff_is_one_inside_zero_outside(annulus2d):
    chi = eval_cutoff(CutoffSpec(), annulus2d).values
    x = annulus2d.cell_coords()
    r = np.hypot(x[0], x[1])
    assert np.all(chi[r <= 1.0] == 1.0)
    assert np.all(chi[r >= 3.0] == 0.0)
    assert np.all((chi >= 0) & (chi <= 1))
    with pytest.raises(BandOutsideRegion):
        eval_cutoff(CutoffSpec(0.7, 0.2), annulus2d)


@given(st.floats(-2, 3, allow_nan=False), st.floats(-2, 3, allow_nan=False))
def test_smoothstep_monotone_and_clamped(a, b):
    lo, hi = min(a, b), max(a, b)
    s = smoothstep(np.array([lo, hi]))
    assert 0.0 <= s[0] <= s[1] <= 1.0


def test_smoothstep_endpoints_flat():
    eps = 1e-4
    assert smoothstep(np.array(eps)) < 1e-11
    assert 1 - smoothstep(np.array(1 - eps)) < 1e-11
    assert smoothstep(np.array(0.5)) == 0.5


def test_cone_weight_homogeneity():
    spec = WeightSpec("cone", sigma=2, q=0.25)
    region = ConeShell(0.3, 0.6, 8.0)
    d = build_domain(region, 0.5, ((-5.0, -5.0, 0.0), (5.0, 5.0, 8.0)))
    pts = np.array([[0.9], [0.3], [2.0]])
    w1 = stiffness_weight(spec, d, pts)[0]
    w2 = stiffness_weight(spec, d, 2 * pts)[0]
    # phi^2 psi^2 = r^2 r^(n - 2q) (angles) is homogeneous of degree 2 + 3 - 0.5
    assert w2 / w1 == pytest.approx(2 ** (2 + 3 - 0.5), rel=1e-9)
    assert math.isfinite(w1)


def test_exotic_weight_closed_form(annulus2d):
    spec = WeightSpec("exotic", sigma=2.0, s=0.5, beta=-1.5)
    x = annulus2d.cell_coords()
    r = np.hypot(x[0], x[1])
    m = annulus2d.interior
    xd = (r - 1.0) * (3.0 - r) / 2.0
    # all region cells have r > 1, where the regularized radius is r itself
    expected = r ** (-1.0 - spec.beta) * (xd / r) ** spec.sigma * np.exp(-spec.s * r / np.where(m, xd, 1.0))
    assert np.allclose(eval_psi(spec, annulus2d).values[m], expected[m], rtol=1e-10, atol=0)
    assert np.allclose(eval_phi(spec, annulus2d).values[m], (xd**2 / r)[m], rtol=1e-12)

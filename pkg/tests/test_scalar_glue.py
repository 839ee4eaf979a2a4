import numpy as np
import pytest

from gluebench.errors import NetSourceMismatch, NoConvergence
from gluebench.grid import Annulus, build_domain
from gluebench.scalar_glue import (
    CSTEP,
    ScalarGlueProblem,
    _core,
    _metric_array,
    cokernel_basis,
    conformal_bump_metric,
    flat_metric,
    interpolated_target,
    linear_correction,
    picard_glue,
    scalar_curvature,
)
from gluebench.weights import CutoffSpec, WeightSpec


@pytest.fixture(scope="module")
def coarse():
    return build_domain(Annulus(1.0, 3.0), 0.2, ((-3.2, -3.2), (3.2, 3.2)))


@pytest.fixture(scope="module")
def bump_run(coarse):
    return picard_glue(ScalarGlueProblem(flat_metric(2), conformal_bump_metric(1e-3), coarse))


def test_flat_metric_has_zero_curvature(coarse):
    g = _metric_array(coarse, flat_metric(2), 2)
    assert np.all(scalar_curvature(g, coarse.h, 2)[_core(coarse, 2)] == 0)


def test_identical_metrics_need_no_correction(coarse):
    g = conformal_bump_metric(1e-3)
    res = picard_glue(ScalarGlueProblem(g, g, coarse))
    assert res.report.iterations == 0
    assert np.all(res.dg.full() == 0)


def test_target_interpolates(coarse):
    t = interpolated_target(flat_metric(2), conformal_bump_metric(1e-2), CutoffSpec(), coarse)
    x = coarse.cell_coords()
    r = np.hypot(x[0], x[1])
    assert np.all(t.values[r > 3.0] == 0.0)
    gh = _metric_array(coarse, conformal_bump_metric(1e-2), 2)
    Rh = scalar_curvature(gh, coarse.h, 2)[_core(coarse, 2)]
    assert np.array_equal(t.values[r < 1.0], Rh[r < 1.0])


def test_cokernel_basis_orthonormal(coarse):
    Z = cokernel_basis(coarse)
    assert Z.shape == (3, coarse.n_interior)
    assert np.allclose(Z @ Z.T, np.eye(3), atol=1e-12)


@pytest.mark.parametrize("eps", [0.0, 1e-2])
def test_linear_correction_manufactured(coarse, eps, rng):
    """A residual in the range of the weighted operator is matched exactly."""
    base = _metric_array(coarse, conformal_bump_metric(eps), 2)
    w = WeightSpec("power", sigma=8)
    probe = np.where(coarse.interior, rng.standard_normal(coarse.shape), 0.0)
    dg0 = linear_correction(base, probe, coarse, w)
    core = _core(coarse, 2)
    m = coarse.interior
    target = (scalar_curvature(base + 1j * CSTEP * dg0, coarse.h, 2).imag / CSTEP)[core]
    dg = linear_correction(base, np.where(m, target, 0.0), coarse, w)
    got = (scalar_curvature(base + 1j * CSTEP * dg, coarse.h, 2).imag / CSTEP)[core]
    assert np.max(np.abs(got[m] - target[m])) <= 1e-9 * np.max(np.abs(target[m]))
    assert np.all(dg[(slice(None), slice(None)) + core][..., ~m] == 0)


def test_strict_flat_solve_rejects_affine_residual(coarse):
    base = _metric_array(coarse, flat_metric(2), 2)
    with pytest.raises(NetSourceMismatch):
        linear_correction(base, np.where(coarse.interior, 1.0, 0.0), coarse, WeightSpec("power", sigma=8), strict=True)


def test_picard_converges_quadratically(bump_run):
    rep = bump_run.report
    assert rep.converged and rep.iterations <= 10
    assert rep.residual <= 1e-8
    h = rep.residual_history
    for k in range(1, len(h) - 1):
        assert h[k + 1] <= 10 * h[k] ** 2 / h[0]


def test_picard_locality_and_sandwich(bump_run, coarse):
    rep = bump_run.report
    assert rep.outside_max == 0.0
    assert rep.boundary_max <= 1e-7
    assert rep.sandwich_violation <= rep.residual
    full = bump_run.dg.full()
    assert np.all(full[..., ~coarse.interior] == 0)


def test_report_rows(bump_run):
    row = bump_run.report.row()
    assert list(row) == list(type(bump_run.report).CSV_FIELDS)
    trace = bump_run.report.trace_rows()
    assert len(trace) == bump_run.report.iterations + 1
    assert trace[0]["linear_iterations"] == 0


def test_large_perturbation_is_refused(coarse):
    with pytest.raises(NoConvergence) as exc:
        picard_glue(ScalarGlueProblem(flat_metric(2), conformal_bump_metric(0.5), coarse))
    assert exc.value.iterations == 0


def test_iteration_cap(coarse):
    with pytest.raises(NoConvergence):
        picard_glue(ScalarGlueProblem(flat_metric(2), conformal_bump_metric(1e-3), coarse, max_iter=1))

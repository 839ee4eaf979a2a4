"""Time-symmetric gluing by scalar-curvature interpolation.

With ``g_chi = chi ghat + (1 - chi) g`` the aim is a correction ``dg``
supported in the region with

    R[g_chi + dg] = chi R(ghat) + (1 - chi) R(g).

Each Picard step solves the weighted linearized problem
``DR(W DR*(N)) = residual`` for ``N`` on region cells and adds
``dg = W DR*(N)``, ``W = phi^2 psi^2``.  ``DR`` is the complex-step
derivative of the discrete scalar curvature, so the linear model and the
nonlinear residual come from the same stencil.  On a flat base the affine
functions, its static KIDs, are deflated from the linear solve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .constraints import PAD, Geometry, _adjoint_arrays, check_positive
from .elliptic import assemble_by_probing
from .errors import DomainMismatch, MetricNotPositive, NetSourceMismatch, NoConvergence
from .grid import ScalarField, SymTensorField
from .weights import CutoffSpec, WeightSpec, smoothstep, cutoff_at, stiffness_weight

log = logging.getLogger(__name__)

__all__ = [
    "ScalarGlueProblem",
    "ScalarGlueReport",
    "scalar_curvature",
    "interpolated_target",
    "linear_correction",
    "picard_glue",
    "cokernel_basis",
    "flat_metric",
    "conformal_bump_metric",
]

CSTEP = 1e-30


def _core(domain, pad):
    return (Ellipsis,) + tuple(slice(pad, pad + s) for s in domain.shape)


def scalar_curvature(g, h, n):
    """Scalar curvature of a padded metric array (complex arrays allowed)."""
    return Geometry(g, h, n).scalar()


def flat_metric(dim):
    """Callable ``x -> delta``."""

    def g_fn(x):
        g = np.zeros((dim, dim) + x.shape[1:])
        for i in range(dim):
            g[i, i] = 1.0
        return g

    return g_fn


def conformal_bump_metric(epsilon, r0=0.2, width=0.7, dim=2, center=None):
    """Callable for ``(1 + epsilon b)^4 delta`` with ``b`` rising from 0 to 1.

    ``b`` is the quintic smoothstep of ``(r - r0) / width``, so the metric is
    flat for ``r < r0`` and the constant rescaling ``(1 + epsilon)^4 delta``
    beyond ``r0 + width``.
    """
    c = np.zeros(dim) if center is None else np.asarray(center, float)

    def g_fn(x):
        y = x - c.reshape((dim,) + (1,) * (x.ndim - 1))
        r = np.sqrt(np.sum(y * y, axis=0))
        u = (1 + epsilon * smoothstep((r - r0) / width)) ** 4
        g = np.zeros((dim, dim) + r.shape)
        for i in range(dim):
            g[i, i] = u
        return g

    return g_fn


def _padded_cutoff(domain, cutoff, pad):
    return cutoff_at(cutoff, domain.region, domain.cell_coords(pad=pad))


def _metric_array(domain, g, pad):
    if callable(g):
        return np.asarray(g(domain.cell_coords(pad=pad)), float)
    g = np.asarray(g, float)
    want = (domain.dim, domain.dim) + tuple(s + 2 * pad for s in domain.shape)
    if g.shape != want:
        raise DomainMismatch(f"metric has shape {g.shape}, expected {want}")
    return g


def interpolated_target(g, ghat, chi, domain, pad=PAD):
    """``chi R(ghat) + (1 - chi) R(g)`` on the domain grid.

    ``g`` and ``ghat`` are padded metric arrays or callables; ``chi`` is a
    ``CutoffSpec`` or a padded array.
    """
    g = _metric_array(domain, g, pad)
    ghat = _metric_array(domain, ghat, pad)
    c = _padded_cutoff(domain, chi, pad) if isinstance(chi, CutoffSpec) else np.asarray(chi)
    core = _core(domain, pad)
    for m in (g, ghat):
        check_positive(m[core], domain.interior)
    n, h = domain.dim, domain.h
    Rg = scalar_curvature(g, h, n)
    Rh = scalar_curvature(ghat, h, n)
    return ScalarField(domain, (c * Rh + (1 - c) * Rg)[core])


def cokernel_basis(domain, mask=None):
    """Orthonormal basis (Euclidean, over mask cells) of ``{1, x^1, ..., x^n}``."""
    mask = domain.interior if mask is None else mask
    x = domain.cell_coords()
    cols = [np.ones(int(mask.sum()))] + [x[a][mask] for a in range(domain.dim)]
    q, _ = np.linalg.qr(np.array(cols).T)
    return q.T


@dataclass
class LinearInfo:
    iterations: int = 0
    residual: float = 0.0
    cokernel_defect: float = 0.0


def _weight_array(domain, weights, pad):
    W = stiffness_weight(weights, domain, domain.cell_coords(pad=pad))
    mask = np.zeros(W.shape, bool)
    mask[_core(domain, pad)] = domain.interior
    return np.where(mask, W, 0.0), mask


def _is_constant(g, atol=1e-14):
    return bool(np.all(np.ptp(g.reshape(g.shape[0], g.shape[1], -1), axis=-1) <= atol))


def linear_correction(g_base, residual, domain, weights, pad=PAD, tol=1e-10, strict=False, info=None):
    """Weighted correction ``dg`` with ``DR(dg) = residual`` modulo affine functions.

    ``g_base`` is a padded metric array and ``residual`` a cell array (or
    ``ScalarField``) on the domain grid; only region cells are matched.
    Returns the padded correction array.  When ``strict`` is set the part of
    the residual along the cokernel must be below ``tol`` relative.

    The operator ``N -> DR(W DR*(N))`` is linear with a stencil reach of four
    cells, so it is assembled exactly by coloured probing and factorized by
    sparse LU, followed by matrix-free refinement.  On a constant (flat)
    base the affine functions are exactly in the cokernel and the system is
    bordered by them; on any other base the affine directions are only
    approximately degenerate and the undeflated system is solved, which lets
    the Picard loop remove their second-order share of the residual.
    """
    n, h = domain.dim, domain.h
    r = residual.values if isinstance(residual, ScalarField) else np.asarray(residual, float)
    mask = domain.interior
    rv = r[mask]
    info = LinearInfo() if info is None else info
    rnorm = float(np.linalg.norm(rv))
    if rnorm == 0.0:
        return np.zeros_like(g_base)
    Z = cokernel_basis(domain)
    along = Z @ rv
    info.cokernel_defect = float(np.linalg.norm(along)) / rnorm
    flat = _is_constant(g_base)
    if strict and flat and info.cokernel_defect > tol:
        raise NetSourceMismatch(
            f"residual has a {info.cokernel_defect:.3e} relative component along the static KIDs",
            defect=info.cokernel_defect,
        )
    rp = rv - Z.T @ along if flat else rv

    W, pmask = _weight_array(domain, weights, pad)
    geo = Geometry(g_base, h, n)
    zeroK = np.zeros_like(g_base)
    zeroY = np.zeros((n,) + g_base.shape[2:])
    core = _core(domain, pad)

    def correction(Nvec):
        N = np.zeros(g_base.shape[2:])
        N[pmask] = Nvec
        A, _ = _adjoint_arrays(geo, zeroK, N, zeroY)
        return W * A

    def DR(dg):
        R = scalar_curvature(g_base + 1j * CSTEP * dg, h, n)
        return R.imag[core][mask] / CSTEP

    def apply(v):
        return DR(correction(v))

    M = assemble_by_probing(apply, mask, reach=2 * PAD)
    p = Z.shape[0] if flat else 0
    if flat:
        M = sp.bmat([[M, sp.csr_matrix(Z.T)], [sp.csr_matrix(Z), None]])
    lu = splu(sp.csc_matrix(M))

    def project(v):
        return v - Z.T @ (Z @ v) if flat else v

    sol = np.zeros(rp.size)
    rhs = np.concatenate([rp, np.zeros(p)])
    res = math.inf
    for it in range(4):
        upd = lu.solve(rhs)
        sol = project(sol + upd[: rp.size])
        lin = project(apply(sol))
        res = float(np.linalg.norm(lin - rp)) / float(np.linalg.norm(rp))
        info.iterations = it + 1
        if res <= tol:
            break
        rhs = np.concatenate([rp - lin, np.zeros(p)])
    info.residual = res
    if res > max(tol, 1e-6):
        raise NoConvergence(f"linearized solve stopped at {res:.3e}", iterations=info.iterations, residual=res)
    return correction(sol)


@dataclass
class ScalarGlueProblem:
    g: object
    ghat: object
    domain: object
    weights: WeightSpec = field(default_factory=lambda: WeightSpec("power", sigma=8.0))
    cutoff: CutoffSpec = field(default_factory=CutoffSpec)
    tol: float = 1e-8
    max_iter: int = 10
    smallness: float = 0.1
    linear_tol: float = 1e-10
    halvings: int = 4
    pad: int = PAD


@dataclass
class ScalarGlueReport:
    iterations: int = 0
    residual: float = 0.0
    residual_history: list = field(default_factory=list)
    contraction: list = field(default_factory=list)
    cokernel_defect: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    halvings: list = field(default_factory=list)
    boundary_max: float = 0.0
    outside_max: float = 0.0
    sandwich_violation: float = 0.0
    exterior_residual: float = 0.0
    converged: bool = False

    CSV_FIELDS = (
        "iterations",
        "residual",
        "boundary_max",
        "outside_max",
        "sandwich_violation",
        "exterior_residual",
        "converged",
    )

    def row(self):
        return {k: getattr(self, k) for k in self.CSV_FIELDS}

    def trace_rows(self):
        rows = []
        for k, r in enumerate(self.residual_history):
            rows.append(
                {
                    "iteration": k,
                    "residual": r,
                    "contraction": self.contraction[k - 1] if k else math.nan,
                    "cokernel_defect": self.cokernel_defect[k - 1] if k else math.nan,
                    "linear_iterations": self.linear_iterations[k - 1] if k else 0,
                    "halvings": self.halvings[k - 1] if k else 0,
                }
            )
        return rows


@dataclass
class ScalarGlueResult:
    dg: SymTensorField
    metric: np.ndarray = field(repr=False)
    target: ScalarField
    curvature: ScalarField
    report: ScalarGlueReport

    def residual_field(self):
        return ScalarField(self.target.domain, self.curvature.values - self.target.values)


def picard_glue(problem):
    """Picard iteration for the interpolated scalar-curvature problem.

    Returns a ``ScalarGlueResult``; raises ``NoConvergence`` when the
    residual stalls, ``max_iter`` is exhausted or the smallness bound is
    violated, and ``MetricNotPositive``
    when a step leaves the cone of metrics even after halving.
    """
    p = problem
    d = p.domain
    n, h, pad = d.dim, d.h, p.pad
    core = _core(d, pad)
    mask = d.interior
    p.weights.validate(d.region, n)
    g = _metric_array(d, p.g, pad)
    ghat = _metric_array(d, p.ghat, pad)
    for m in (g, ghat):
        check_positive(m[core], mask)
    gap = float(np.max(np.abs(ghat - g)[(slice(None), slice(None)) + core][..., mask]))
    if gap > p.smallness:
        raise NoConvergence(
            f"|ghat - g| = {gap:.3g} on the region exceeds the smallness bound {p.smallness}; Picard not started",
            iterations=0,
            residual=math.nan,
        )

    chi = _padded_cutoff(d, p.cutoff, pad)
    Rg = scalar_curvature(g, h, n)[core]
    Rh = scalar_curvature(ghat, h, n)[core]
    c = chi[core]
    target = c * Rh + (1 - c) * Rg
    gchi = chi * ghat + (1 - chi) * g

    def residual_of(metric):
        return target - scalar_curvature(metric, h, n)[core]

    def size(r):
        return float(np.max(np.abs(r[mask])))

    rep = ScalarGlueReport()
    dg = np.zeros_like(g)
    r = residual_of(gchi)
    rep.residual_history.append(size(r))
    k = 0
    while rep.residual_history[-1] > p.tol:
        if k >= p.max_iter:
            raise NoConvergence(
                f"Picard iteration did not reach {p.tol:g} in {p.max_iter} steps "
                f"(residual {rep.residual_history[-1]:.3e})",
                iterations=k,
                residual=rep.residual_history[-1],
            )
        info = LinearInfo()
        step = linear_correction(gchi + dg, np.where(mask, r, 0.0), d, p.weights, pad, tol=p.linear_tol, info=info)
        t, halved = 1.0, 0
        while True:
            trial = dg + t * step
            metric = gchi + trial
            try:
                check_positive(metric[core], mask)
                r_new = residual_of(metric)
                ok = size(r_new) < rep.residual_history[-1]
            except MetricNotPositive:
                if halved >= p.halvings:
                    raise
                ok = False
            if ok:
                break
            if halved >= p.halvings:
                raise NoConvergence(
                    f"residual did not decrease after {halved} step halvings "
                    f"(residual {rep.residual_history[-1]:.3e})",
                    iterations=k,
                    residual=rep.residual_history[-1],
                )
            t *= 0.5
            halved += 1
        dg, r = trial, r_new
        k += 1
        prev = rep.residual_history[-1]
        rep.residual_history.append(size(r))
        rep.contraction.append(rep.residual_history[-1] / prev)
        rep.cokernel_defect.append(info.cokernel_defect)
        rep.linear_iterations.append(info.iterations)
        rep.halvings.append(halved)
        log.info("picard step %d: residual %.3e (factor %.3f)", k, rep.residual_history[-1], rep.contraction[-1])

    rep.iterations = k
    rep.residual = rep.residual_history[-1]
    rep.converged = True
    dgc = dg[(slice(None), slice(None)) + core]
    edge = d.boundary_adjacent()
    rep.boundary_max = float(np.max(np.abs(dgc[..., edge]))) if edge.any() else 0.0
    rep.outside_max = float(np.max(np.abs(dgc[..., ~mask]))) if (~mask).any() else 0.0
    R_final = target - r
    lo = np.minimum(Rg, Rh)
    hi = np.maximum(Rg, Rh)
    rep.sandwich_violation = float(max(np.max((lo - R_final)[mask]), np.max((R_final - hi)[mask]), 0.0))
    rep.exterior_residual = float(np.max(np.abs(r[~mask]))) if (~mask).any() else 0.0
    metric = gchi + dg
    return ScalarGlueResult(
        dg=SymTensorField.from_full(d, dgc),
        metric=metric,
        target=ScalarField(d, target),
        curvature=ScalarField(d, R_final),
        report=rep,
    )

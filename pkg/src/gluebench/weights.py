"""Degenerate weight pairs (phi, psi) and the transition cut-off chi.

All weights are evaluated in log form so that the exponential families
underflow to an exact zero instead of producing ``0 * inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BandOutsideRegion, ParamOutOfRange
from .grid import ConeShell, ScalarField, regularized_radius

__all__ = [
    "WeightSpec",
    "CutoffSpec",
    "smoothstep",
    "eval_psi",
    "eval_phi",
    "eval_cutoff",
    "log_weights",
    "stiffness_weight",
    "mass_weight",
    "cutoff_at",
]

KINDS = ("power", "exponential", "cone", "exotic", "unit")


@dataclass(frozen=True)
class WeightSpec:
    """One member of a weight family.

    ``power``        psi = (a b)^sigma,                        phi = 1/(a b)
    ``exponential``  psi = (a b)^alpha exp(-s/(a b)),          phi = 1/(a b)^2
    ``cone``         psi = r^(n/2-q) (th-th1)^sigma (th2-th)^sigma,  phi = r
    ``exotic``       psi = r^mu x^sigma exp(-s r/x), mu = -n/2-beta-sigma,  phi = x^2/r
    ``unit``         psi = phi = 1

    ``a`` and ``b`` are the distance-like factors of the region: ``r - R1``,
    ``R2 - r`` for an annulus and the angular gaps for a cone shell.  ``x`` is
    a defining function of the boundary and ``r`` the regularized radius.
    """

    kind: str = "power"
    sigma: float = 4.0
    s: float = 1.0
    alpha: float = 0.0
    q: float | None = None
    beta: float = -1.0

    def validate(self, region, dim):
        k = self.kind
        if k not in KINDS:
            raise ParamOutOfRange(f"unknown weight kind {k!r}")
        if k == "power" and not self.sigma > 0:
            raise ParamOutOfRange(f"power weights need sigma > 0, got {self.sigma}")
        if k in ("exponential", "exotic") and not self.s > 0:
            raise ParamOutOfRange(f"{k} weights need s > 0, got {self.s}")
        if k == "exotic" and self.beta == 0:
            raise ParamOutOfRange("exotic weights need beta != 0")
        if k == "cone":
            if not isinstance(region, ConeShell):
                raise ParamOutOfRange("cone weights need a cone-shell region")
            q = self.cone_q(dim)
            if not (0 < q < (dim - 2) / 2):
                raise ParamOutOfRange(f"cone weights need 0 < q < {(dim - 2) / 2}, got q={q}")
            if dim >= 5 and q == (dim - 4) / 2:
                raise ParamOutOfRange("q = (n-4)/2 is excluded")
            if not self.sigma > 0:
                raise ParamOutOfRange(f"cone weights need sigma > 0, got {self.sigma}")

    def cone_q(self, dim):
        return (dim - 2) / 4 if self.q is None else self.q


@dataclass(frozen=True)
class CutoffSpec:
    """Quintic smoothstep in the normalized transverse coordinate.

    ``chi = 1`` for ``t <= t0`` (inner side), ``0`` for ``t >= t1``.
    """

    t0: float = 0.4
    t1: float = 0.6


def _log_pos(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), -np.inf)


def log_weights(spec, region, pts):
    """Return ``(log psi, log phi)`` at points of shape ``(dim, ...)``.

    ``log psi`` is ``-inf`` outside the open region.
    """
    dim = pts.shape[0]
    spec.validate(region, dim)
    inside = region.contains(pts)
    k = spec.kind
    if k == "unit":
        lpsi = np.zeros(pts.shape[1:])
        lphi = np.zeros(pts.shape[1:])
    elif k in ("power", "exponential"):
        a, b = region.factors(pts)
        lp = _log_pos(a) + _log_pos(b)
        if k == "power":
            lpsi = spec.sigma * lp
            lphi = -lp
        else:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                p = np.exp(lp)
                lpsi = spec.alpha * lp - spec.s / np.where(p > 0, p, 1.0)
            lphi = -2.0 * lp
    elif k == "cone":
        a, b = region.factors(pts)
        r = regularized_radius(region.radius(pts))
        q = spec.cone_q(dim)
        lpsi = (dim / 2 - q) * np.log(r) + spec.sigma * (_log_pos(a) + _log_pos(b))
        lphi = np.log(r)
    else:  # exotic
        x = region.defining_function(pts)
        r = regularized_radius(region.radius(pts))
        mu = -dim / 2 - spec.beta - spec.sigma
        lx = _log_pos(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            lpsi = mu * np.log(r) + spec.sigma * lx - spec.s * r / np.where(x > 0, x, 1.0)
        lphi = 2 * lx - np.log(r)
    lpsi = np.where(inside, lpsi, -np.inf)
    lphi = np.where(inside, lphi, -np.inf)
    return lpsi, lphi


def _exp(x):
    with np.errstate(under="ignore", over="ignore", invalid="ignore"):
        return np.where(np.isfinite(x), np.exp(x), 0.0)


def eval_psi(spec, domain):
    lpsi, _ = log_weights(spec, domain.region, domain.cell_coords())
    return ScalarField(domain, np.where(domain.interior, _exp(lpsi), 0.0))


def eval_phi(spec, domain):
    _, lphi = log_weights(spec, domain.region, domain.cell_coords())
    return ScalarField(domain, np.where(domain.interior, _exp(lphi), 0.0))


def stiffness_weight(spec, domain, pts):
    """``phi^2 psi^2`` at arbitrary points (zero outside the region)."""
    lpsi, lphi = log_weights(spec, domain.region, pts)
    return _exp(2 * lpsi + 2 * lphi)


def mass_weight(spec, domain, pts):
    """``psi^2`` at arbitrary points (zero outside the region)."""
    lpsi, _ = log_weights(spec, domain.region, pts)
    return _exp(2 * lpsi)


def smoothstep(x):
    """Quintic 0-to-1 ramp on [0, 1], clamped outside."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10 - 15 * x + 6 * x**2)


def cutoff_at(spec, region, pts):
    """chi at arbitrary points; defined on the whole box, not only the region."""
    if not (0 < spec.t0 < spec.t1 < 1):
        raise BandOutsideRegion(f"band [{spec.t0}, {spec.t1}] must lie inside (0, 1)")
    t = region.transverse(pts)
    return 1.0 - smoothstep((t - spec.t0) / (spec.t1 - spec.t0))


def eval_cutoff(spec, domain):
    return ScalarField(domain, cutoff_at(spec, domain.region, domain.cell_coords()))

"""Tensor calculus for initial data sets ``(g, K, Lambda)``.

Everything is cell-centred.  Arrays carry their tensor indices first and the
grid axes last, so ``g[i, j]`` has shape ``(*batch, *grid)`` where ``grid``
has ``n`` axes; any leading batch axes ride along untouched.  First
derivatives are zero-padded central differences ``D0`` and second
derivatives are ``D0 D0``, so two ghost layers of data on every side are
needed for the stencil to be exact on the core grid.  ``D0`` is skew, which
makes the linearized operators discretely adjoint on flat backgrounds.

Covectors ``Y`` are given by their lower components ``Y_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainMismatch, MetricNotPositive
from .grid import ScalarField, SymTensorField

__all__ = [
    "PAD",
    "InitialData",
    "KidCandidate",
    "ConstraintValues",
    "KidResidual",
    "Geometry",
    "d0",
    "curvature",
    "constraint_map",
    "linearized_constraint",
    "adjoint_constraint",
    "killing_operator",
    "kid_residual",
    "energy_condition",
    "pair_constraint",
    "pair_tensors",
]

PAD = 2


def _es(spec, *ops):
    return np.einsum(spec, *ops, optimize=len(ops) > 2)


def d0(x, a, h, n):
    """Central difference along spatial axis ``a`` with zeros beyond the array."""
    ax = x.ndim - n + a
    pad = [(0, 0)] * x.ndim
    pad[ax] = (1, 1)
    p = np.pad(x, pad)
    hi = [slice(None)] * x.ndim
    lo = [slice(None)] * x.ndim
    hi[ax] = slice(2, None)
    lo[ax] = slice(None, -2)
    return (p[tuple(hi)] - p[tuple(lo)]) / (2 * h)


def _grad(x, h, n):
    """``out[m, ...] = D0_m x``."""
    return np.stack([d0(x, m, h, n) for m in range(n)])


def _inv_det(g, n):
    A = np.moveaxis(np.moveaxis(g, 0, -1), 0, -1)
    inv = np.linalg.inv(A)
    det = np.linalg.det(A)
    return np.moveaxis(np.moveaxis(inv, -1, 0), -1, 0), det


class Geometry:
    """Levi-Civita data of a metric array ``g[i, j, ...]`` on a uniform grid."""

    def __init__(self, g, h, n):
        self.g, self.h, self.n = g, h, n
        self.ginv, self.det = _inv_det(g, n)
        self.dg = _grad(g, h, n)  # [m, i, j]
        # Christoffel symbols of the first kind, Gl[l, i, j] = Gamma_{l, ij}
        dg = self.dg
        self.Gl = 0.5 * (
            _es("ilj...->lij...", dg) + _es("jli...->lij...", dg) - dg
        )
        self.Gamma = _es("kl...,lij...->kij...", self.ginv, self.Gl)
        self._ric = None

    @property
    def sqrt_det(self):
        return np.sqrt(self.det)

    def ricci(self):
        if self._ric is None:
            n, h, gi = self.n, self.h, self.ginv
            ddg = np.stack([_grad(self.dg[m], h, n) for m in range(n)])  # [m, k, i, j] = D_m D_k g_ij
            second = 0.5 * (
                _es("kl...,kilj...->ij...", gi, ddg)
                - _es("kl...,klij...->ij...", gi, ddg)
                - _es("kl...,ijkl...->ij...", gi, ddg)
                + _es("kl...,jlik...->ij...", gi, ddg)
            )
            del ddg
            # d_m g^{kl} = -g^{ka} d_m g_ab g^{bl}
            dgi = -_es("mkb...,bl...->mkl...", _es("ka...,mab...->mkb...", gi, self.dg), gi)
            first = _es("kkl...,lij...->ij...", dgi, self.Gl) - _es(
                "jkl...,lik...->ij...", dgi, self.Gl
            )
            G = self.Gamma
            quad = _es("kkl...,lij...->ij...", G, G) - _es("kjl...,lik...->ij...", G, G)
            self._ric = second + first + quad
        return self._ric

    def scalar(self):
        return _es("ij...,ij...->...", self.ginv, self.ricci())

    def raise2(self, T):
        """``T^{ij}`` from ``T_{ij}``."""
        return _es("ia...,jb...,ab...->ij...", self.ginv, self.ginv, T)

    def mixed(self, T):
        """``T^l_i`` stored as ``[l, i]``."""
        return _es("la...,ai...->li...", self.ginv, T)

    def cov_scalar2(self, N):
        """``nabla_i nabla_j N``."""
        n, h = self.n, self.h
        dN = _grad(N, h, n)
        ddN = np.stack([_grad(dN[m], h, n) for m in range(n)])
        return ddN - _es("kij...,k...->ij...", self.Gamma, dN)

    def cov_covector(self, Y):
        """``nabla_m Y_l`` stored as ``[m, l]``."""
        dY = np.stack([_grad(Y[l], self.h, self.n) for l in range(self.n)], axis=1)
        return dY - _es("kml...,k...->ml...", self.Gamma, Y)

    def cov_sym2(self, K):
        """``nabla_m K_ij`` stored as ``[m, i, j]``."""
        dK = np.stack([_grad(K[i, j], self.h, self.n) for i in range(self.n) for j in range(self.n)], axis=1)
        dK = dK.reshape((self.n, self.n, self.n) + K.shape[2:])
        return dK - _es("lmi...,lj...->mij...", self.Gamma, K) - _es("lmj...,il...->mij...", self.Gamma, K)


# ---------------------------------------------------------------------------
# containers


def _core(domain, pad):
    return (Ellipsis,) + tuple(slice(pad, pad + s) for s in domain.shape)


def _check_padded(domain, arr, lead, pad, what):
    want = tuple(s + 2 * pad for s in domain.shape)
    if arr.shape[lead:] != want:
        raise DomainMismatch(f"{what} has grid shape {arr.shape[lead:]}, expected padded {want}")


@dataclass(eq=False)
class InitialData:
    """Metric ``g``, second fundamental form ``K`` and ``Lambda`` on a padded grid.

    ``g`` and ``K`` have shape ``(n, n, *padded)`` with ``pad`` ghost layers
    on each side of the domain grid.  ``source`` optionally keeps the metric
    callable the data was sampled from, so that diagnostics can evaluate it
    off the grid.
    """

    domain: object
    g: np.ndarray
    K: np.ndarray
    Lambda: float = 0.0
    pad: int = PAD
    source: object = field(default=None, repr=False)

    def __post_init__(self):
        n = self.domain.dim
        self.g = np.asarray(self.g)
        self.K = np.zeros_like(self.g) if self.K is None else np.asarray(self.K)
        for name in ("g", "K"):
            arr = getattr(self, name)
            if arr.shape[:2] != (n, n):
                raise DomainMismatch(f"{name} must have leading shape {(n, n)}")
            _check_padded(self.domain, arr, 2, self.pad, name)
        if not np.iscomplexobj(self.g):
            check_positive(self.g[_core(self.domain, self.pad)], self.domain.interior)

    @classmethod
    def from_functions(cls, domain, g_fn, K_fn=None, Lambda=0.0, pad=PAD):
        x = domain.cell_coords(pad=pad)
        g = np.asarray(g_fn(x), float)
        K = None if K_fn is None else np.asarray(K_fn(x), float)
        return cls(domain, g, K, Lambda, pad, source=g_fn)

    @classmethod
    def flat(cls, domain, pad=PAD):
        n = domain.dim
        shape = tuple(s + 2 * pad for s in domain.shape)
        g = np.zeros((n, n) + shape)
        for i in range(n):
            g[i, i] = 1.0
        return cls(domain, g, None, 0.0, pad)

    @property
    def core(self):
        return _core(self.domain, self.pad)

    def geometry(self):
        return Geometry(self.g, self.domain.h, self.domain.dim)

    def with_(self, g=None, K=None):
        return InitialData(
            self.domain, self.g if g is None else g, self.K if K is None else K, self.Lambda, self.pad
        )  # perturbed data no longer matches ``source``


@dataclass(eq=False)
class KidCandidate:
    """Lapse ``N`` (shape ``padded``) and shift covector ``Y`` (shape ``(n, *padded)``)."""

    domain: object
    N: np.ndarray
    Y: np.ndarray
    pad: int = PAD

    def __post_init__(self):
        n = self.domain.dim
        shape = tuple(s + 2 * self.pad for s in self.domain.shape)
        self.N = np.zeros(shape) if self.N is None else np.asarray(self.N)
        self.Y = np.zeros((n,) + shape) if self.Y is None else np.asarray(self.Y)
        _check_padded(self.domain, self.N, 0, self.pad, "N")
        _check_padded(self.domain, self.Y, 1, self.pad, "Y")

    @classmethod
    def from_functions(cls, domain, N_fn=None, Y_fn=None, pad=PAD):
        x = domain.cell_coords(pad=pad)
        N = None if N_fn is None else np.broadcast_to(np.asarray(N_fn(x), float), x.shape[1:]).copy()
        Y = None if Y_fn is None else np.asarray(Y_fn(x), float)
        return cls(domain, N, Y, pad)


@dataclass(eq=False)
class ConstraintValues:
    scalar_part: ScalarField
    vector_part: np.ndarray  # covector, shape (n, *grid)

    @property
    def mu(self):
        return 0.5 * self.scalar_part.values

    @property
    def J(self):
        return -0.5 * self.vector_part


@dataclass(eq=False)
class KidResidual:
    res_Y: SymTensorField
    res_N: SymTensorField
    norm_Y: float
    norm_N: float

    def norms(self):
        return {"norm_Y": self.norm_Y, "norm_N": self.norm_N}


def check_positive(g, mask=None):
    """Raise ``MetricNotPositive`` unless ``g`` is positive definite on ``mask`` cells."""
    A = np.moveaxis(np.moveaxis(g, 0, -1), 0, -1)
    if mask is not None:
        A = A[np.broadcast_to(mask, A.shape[:-2])]
    A = A.reshape(-1, A.shape[-2], A.shape[-1])
    if not np.all(np.isfinite(A)):
        raise MetricNotPositive("metric has non-finite entries")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        lam = np.linalg.eigvalsh(A).min(axis=-1)
        bad = int(np.argmin(lam))
        raise MetricNotPositive(f"metric not positive definite (smallest eigenvalue {lam[bad]:.3e})") from exc


def _sym_field(domain, arr):
    return SymTensorField.from_full(domain, arr)


# ---------------------------------------------------------------------------
# raw array kernels (padded grids)


def _constraint_arrays(geo, K, Lam):
    Kup = geo.raise2(K)
    trK = _es("ij...,ij...->...", geo.ginv, K)
    K2 = _es("ij...,ij...->...", Kup, K)
    scalar = geo.scalar() - K2 + trK**2 - 2 * Lam
    dK = geo.cov_sym2(K)
    divK = _es("jm...,mij...->i...", geo.ginv, dK)
    vector = 2 * (-divK + _grad(trK, geo.h, geo.n))
    return scalar, vector


def _adjoint_arrays(geo, K, N, Y):
    gi, g = geo.ginv, geo.g
    DY = geo.cov_covector(Y)  # [m, l]
    divY = _es("ml...,ml...->...", gi, DY)
    Kmix = geo.mixed(K)  # K^l_i as [l, i]
    Kup = geo.raise2(K)
    trK = _es("ij...,ij...->...", gi, K)
    Yup = _es("ij...,j...->i...", gi, Y)
    dK = geo.cov_sym2(K)  # [m, i, j]
    divK_l = _es("pm...,mlp...->l...", gi, dK)  # nabla^p K_lp
    ddN = geo.cov_scalar2(N)
    lapN = _es("ij...,ij...->...", gi, ddN)
    Ric = geo.ricci()

    KDY = _es("li...,jl...->ij...", Kmix, DY)  # K^l_i nabla_j Y_l
    KDY_sym = 0.5 * (KDY + np.swapaxes(KDY, 0, 1))
    KqlDY = _es("ql...,ql...->...", Kup, DY)
    KK = _es("li...,jl...->ij...", Kmix, K)
    first = (
        divY * K
        - 2 * KDY_sym
        + KqlDY * g
        - lapN * g
        + ddN
        + _es("l...,l...->...", divK_l, Yup) * g
        - _es("lij...,l...->ij...", dK, Yup)
        - N * Ric
        + 2 * N * KK
        - 2 * N * trK * K
    )
    symDY = 0.5 * (DY + np.swapaxes(DY, 0, 1))
    second = 2 * (symDY - divY * g - K * N + trK * N * g)
    return first, second


# ---------------------------------------------------------------------------
# public operations


def curvature(data):
    """Ricci tensor and scalar curvature on the domain grid."""
    geo = data.geometry()
    core = data.core
    Ric = geo.ricci()[core]
    R = _es("ij...,ij...->...", geo.ginv[core], Ric)
    return _sym_field(data.domain, Ric), ScalarField(data.domain, R)


def constraint_map(data):
    """``(R - |K|^2 + (tr K)^2 - 2 Lambda, 2(-div K + d tr K))``."""
    geo = data.geometry()
    s, v = _constraint_arrays(geo, data.K, data.Lambda)
    core = data.core
    return ConstraintValues(ScalarField(data.domain, s[core]), v[core])


def linearized_constraint(data, dg, dK, eps=None):
    """Central-difference directional derivative of ``constraint_map``.

    ``eps`` defaults to ``macheps^(1/3)`` scaled by the size of the data and
    of the direction.
    """
    if eps is None:
        scale = max(1.0, float(np.max(np.abs(data.g))), float(np.max(np.abs(data.K))))
        dscale = max(float(np.max(np.abs(dg))), float(np.max(np.abs(dK))), 1e-300)
        eps = np.finfo(float).eps ** (1 / 3) * scale / dscale
    plus = constraint_map(data.with_(g=data.g + eps * dg, K=data.K + eps * dK))
    minus = constraint_map(data.with_(g=data.g - eps * dg, K=data.K - eps * dK))
    s = (plus.scalar_part.values - minus.scalar_part.values) / (2 * eps)
    v = (plus.vector_part - minus.vector_part) / (2 * eps)
    return ConstraintValues(ScalarField(data.domain, s), v)


def adjoint_constraint(data, xi):
    """Both blocks of the formal adjoint of the linearized constraint map at ``(N, Y)``."""
    if not data.domain.same_grid(xi.domain) or data.pad != xi.pad:
        raise DomainMismatch("candidate and data live on different grids")
    geo = data.geometry()
    first, second = _adjoint_arrays(geo, data.K, xi.N, xi.Y)
    core = data.core
    return _sym_field(data.domain, first[core]), _sym_field(data.domain, second[core])


def killing_operator(data, Y):
    """``S(Y)_ij = (nabla_i Y_j + nabla_j Y_i) / 2`` for a padded covector array."""
    geo = data.geometry()
    DY = geo.cov_covector(np.asarray(Y))
    S = 0.5 * (DY + np.swapaxes(DY, 0, 1))
    return _sym_field(data.domain, S[data.core])


def _norm2(geo, T, core, mask, vol):
    """Weighted L2 norm ``(sum |T|_g^2 sqrt(det g) h^n)^(1/2)`` over mask cells."""
    gi = geo.ginv[core]
    Tc = T[core] if T.ndim == geo.g.ndim else T
    sq = _es("ia...,jb...,ij...,ab...->...", gi, gi, Tc, Tc)
    w = np.sqrt(geo.det[core])
    return math.sqrt(float(np.sum((sq * w)[mask])) * vol)


def kid_residual(data, xi, mask=None):
    """Residuals of both KID equations for the candidate ``xi``.

    ``res_Y = nabla_(i Y_j) - N K_ij`` and ``res_N`` is ``nabla_i nabla_j N``
    minus the full right-hand side of the second KID equation.  Norms are
    weighted L2 over ``mask`` (default: region cells).
    """
    if not data.domain.same_grid(xi.domain) or data.pad != xi.pad:
        raise DomainMismatch("candidate and data live on different grids")
    geo = data.geometry()
    n = geo.n
    gi, g, K, N, Y = geo.ginv, geo.g, data.K, xi.N, xi.Y
    DY = geo.cov_covector(Y)
    symDY = 0.5 * (DY + np.swapaxes(DY, 0, 1))
    res_Y = symDY - N * K

    Ric = geo.ricci()
    R = _es("ij...,ij...->...", gi, Ric)
    Kmix = geo.mixed(K)
    trK = _es("ij...,ij...->...", gi, K)
    KK = _es("li...,jl...->ij...", Kmix, K)
    K2 = _es("ql...,ql...->...", geo.raise2(K), K)
    dK = geo.cov_sym2(K)
    divK_l = _es("pm...,mlp...->l...", gi, dK)
    Yup = _es("ij...,j...->i...", gi, Y)
    dtrK = _grad(trK, geo.h, n)
    KDY = _es("li...,jl...->ij...", Kmix, DY)
    rhs = (Ric - 2 * KK + trK * K + (R + trK**2 - K2) / (1 - n) * g) * N
    rhs = rhs + _es("lij...,l...->ij...", dK, Yup)
    rhs = rhs + _es("l...,l...->...", divK_l - dtrK, Yup) / (n - 1) * g
    rhs = rhs + (KDY + np.swapaxes(KDY, 0, 1))
    res_N = geo.cov_scalar2(N) - rhs

    core = data.core
    mask = data.domain.interior if mask is None else mask
    vol = data.domain.cell_volume
    return KidResidual(
        _sym_field(data.domain, res_Y[core]),
        _sym_field(data.domain, res_N[core]),
        _norm2(geo, res_Y, core, mask, vol),
        _norm2(geo, res_N, core, mask, vol),
    )


def energy_condition(cv, data, tol=1e-12):
    """Margin ``mu - |J|_g`` cell-wise and whether it is ``>= -tol`` on region cells."""
    geo_inv = data.geometry().ginv[data.core]
    J = cv.J
    J2 = _es("ij...,i...,j...->...", geo_inv, J, J)
    margin = cv.mu - np.sqrt(np.maximum(J2, 0.0))
    holds = bool(np.all(margin[data.domain.interior] >= -tol))
    return holds, ScalarField(data.domain, margin)


def pair_constraint(data, cv, xi, mask=None):
    """``sum (N rho + Y^i J_i) sqrt(det g) h^n`` over mask cells."""
    geo = data.geometry()
    core = data.core
    mask = np.ones(data.domain.shape, bool) if mask is None else mask
    gi = geo.ginv[core]
    Yup = _es("ij...,j...->i...", gi, xi.Y[core])
    val = xi.N[core] * cv.scalar_part.values + _es("i...,i...->...", Yup, cv.vector_part)
    return float(np.sum((val * np.sqrt(geo.det[core]))[mask])) * data.domain.cell_volume


def pair_tensors(data, hk, AB, mask=None):
    """``sum (h_ij A^ij + k_ij B^ij) sqrt(det g) h^n`` for padded ``(h, k)`` and core ``(A, B)``."""
    geo = data.geometry()
    core = data.core
    mask = np.ones(data.domain.shape, bool) if mask is None else mask
    gi = geo.ginv[core]
    total = 0.0
    for t, s in zip(hk, AB):
        S = s.full() if isinstance(s, SymTensorField) else s
        val = _es("ia...,jb...,ij...,ab...->...", gi, gi, t[core], S)
        total += float(np.sum((val * np.sqrt(geo.det[core]))[mask]))
    return total * data.domain.cell_volume

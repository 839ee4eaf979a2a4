"""Weighted elliptic solves in the quotient by constants.

The scalar problem ``div(phi^2 psi^2 grad u) = f`` is the Euler-Lagrange
equation of

    I(u) = sum( 1/2 w |grad u|^2 + f u ) h^n,      w = phi^2 psi^2,

which is minimized by Jacobi-preconditioned conjugate gradients on the
symmetric operator ``A = -div(w grad .)``.  Face weights are zero on every
face that does not join two interior cells, so the operator acts on the
region alone with natural (no-flux) conditions at its boundary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DegenerateMass, DomainMismatch, NetSourceMismatch, NoConvergence
from .grid import ScalarField, grad_array
from .kernels import weighted_laplacian
from .weights import mass_weight, stiffness_weight

log = logging.getLogger(__name__)

__all__ = [
    "SolveReport",
    "RayleighResult",
    "pcg",
    "stiffness_faces",
    "faces_from_cells",
    "solve_weighted_poisson",
    "solve_faces",
    "rayleigh_minimize",
    "probe_diagonal",
    "assemble_by_probing",
]


@dataclass
class SolveReport:
    iterations: int = 0
    final_residual: float = 0.0
    projection_defect: float = 0.0
    boundary_decay: float = 0.0
    converged: bool = True
    residual_history: list = field(default_factory=list, repr=False)
    energy_history: list = field(default_factory=list, repr=False)

    CSV_FIELDS = ("iterations", "final_residual", "projection_defect", "boundary_decay", "converged")

    def row(self):
        d = asdict(self)
        return {k: d[k] for k in self.CSV_FIELDS}

    def energy_monotone(self, rtol=1e-10):
        e = np.asarray(self.energy_history)
        if e.size < 2:
            return True
        scale = max(1.0, float(np.max(np.abs(e))))
        return bool(np.all(np.diff(e) <= rtol * scale))


def _dot(a, b):
    return float(np.sum(a * b))


def pcg(apply, b, inv_diag=None, x0=None, tol=1e-10, maxiter=1000, project=None):
    """Preconditioned CG for a symmetric positive semidefinite ``apply``.

    ``b`` must be consistent (orthogonal to the kernel).  ``project`` is
    applied to every iterate and may only move it along the kernel.  Returns
    ``(x, info)``; ``info`` carries the relative residual history and the
    energy ``1/2 x.Ax - b.x`` after every step, tracked without extra
    operator applications.
    """
    bnorm = math.sqrt(_dot(b, b))
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=b.dtype)
    info = {"iterations": 0, "residual": 0.0, "history": [], "energies": [], "converged": True}
    if bnorm == 0.0:
        return np.zeros_like(b), info
    r = b - apply(x) if x0 is not None else b.copy()
    if inv_diag is None:
        inv_diag = 1.0
    z = r * inv_diag
    p = z.copy()
    rz = _dot(r, z)
    res = math.sqrt(_dot(r, r)) / bnorm
    info["history"].append(res)
    info["energies"].append(-0.5 * _dot(x, b + r))
    k = 0
    while res > tol and k < maxiter:
        Ap = apply(p)
        pAp = _dot(p, Ap)
        if not pAp > 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if project is not None:
            x = project(x)
        z = r * inv_diag
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        k += 1
        res = math.sqrt(_dot(r, r)) / bnorm
        info["history"].append(res)
        info["energies"].append(-0.5 * _dot(x, b + r))
    info["iterations"] = k
    info["residual"] = res
    info["converged"] = res <= tol
    return x, info


def stiffness_faces(domain, spec):
    """``phi^2 psi^2`` at face centres, zero on faces leaving the region."""
    out = []
    for a in range(domain.dim):
        w = stiffness_weight(spec, domain, domain.face_coords(a))
        out.append(np.where(domain.face_interior(a), w, 0.0))
    return tuple(out)


def mass_cells(domain, spec):
    return np.where(domain.interior, mass_weight(spec, domain, domain.cell_coords()), 0.0)


def faces_from_cells(domain, c):
    """Arithmetic face average of a cell field, restricted to interior faces."""
    out = []
    for a in range(domain.dim):
        pad = [(1, 1) if k == a else (0, 0) for k in range(domain.dim)]
        p = np.pad(c, pad)
        sl0 = [slice(None)] * domain.dim
        sl1 = [slice(None)] * domain.dim
        sl0[a] = slice(None, -1)
        sl1[a] = slice(1, None)
        avg = 0.5 * (p[tuple(sl0)] + p[tuple(sl1)])
        out.append(np.where(domain.face_interior(a), avg, 0.0))
    return tuple(out)


def _cell_diag(domain, w):
    h2 = domain.h**2
    d = np.zeros(domain.shape)
    for a, wa in enumerate(w):
        sl0 = [slice(None)] * domain.dim
        sl1 = [slice(None)] * domain.dim
        sl0[a] = slice(None, -1)
        sl1[a] = slice(1, None)
        d += wa[tuple(sl0)] + wa[tuple(sl1)]
    return d / h2


def _boundary_decay(domain, w, u):
    near = domain.interior & (domain.dist <= 2 * domain.h)
    g = grad_array(u, domain.h)
    best = 0.0
    for a in range(domain.dim):
        pad = [(1, 1) if k == a else (0, 0) for k in range(domain.dim)]
        p = np.pad(near, pad)
        sl0 = [slice(None)] * domain.dim
        sl1 = [slice(None)] * domain.dim
        sl0[a] = slice(None, -1)
        sl1[a] = slice(1, None)
        touch = p[tuple(sl0)] | p[tuple(sl1)]
        flux = np.abs(w[a] * g[a])[touch]
        if flux.size:
            best = max(best, float(flux.max()))
    return best


def default_max_iter(domain):
    return int(50 * max(domain.n_interior, 1) ** (1.0 / domain.dim))


def solve_faces(domain, w, mass, f, tol=1e-10, strict=True, max_iter=None, raise_on_fail=True):
    """Solve ``div(w grad u) = f`` given face weights ``w`` and cell mass weights.

    Returns ``(u, SolveReport)`` with ``u`` mean-zero against ``mass``.
    """
    f = np.where(domain.interior, np.asarray(f, float), 0.0)
    vol = domain.cell_volume
    mask = domain.interior
    ncell = np.count_nonzero(mask)
    total = float(np.sum(f[mask]))
    defect = abs(total) * vol
    scale = float(np.sum(np.abs(f[mask]))) * vol
    report = SolveReport(projection_defect=defect)
    if strict and scale > 0 and defect > tol * scale:
        raise NetSourceMismatch(
            f"source has net content {total * vol:.6g} against constants", defect=total * vol
        )
    fp = np.where(mask, f - total / ncell, 0.0)

    msum = float(np.sum(mass[mask]))

    def project(u):
        c = float(np.sum((u * mass)[mask])) / msum
        return np.where(mask, u - c, 0.0)

    def apply(u):
        return np.where(mask, weighted_laplacian(u, w, domain.h), 0.0)

    diag = _cell_diag(domain, w)
    inv = np.where((diag > 0) & mask, 1.0 / np.where(diag > 0, diag, 1.0), 0.0)
    if max_iter is None:
        max_iter = default_max_iter(domain)
    u, info = pcg(apply, -fp, inv, tol=tol, maxiter=max_iter, project=project)
    u = project(u)
    report.iterations = info["iterations"]
    report.final_residual = info["residual"]
    report.residual_history = info["history"]
    report.energy_history = [e * vol for e in info["energies"]]
    report.converged = info["converged"]
    report.boundary_decay = _boundary_decay(domain, w, u)
    if not report.energy_monotone():
        log.warning("CG energy increased during the solve")
    if not info["converged"] and raise_on_fail:
        raise NoConvergence(
            f"CG stopped at relative residual {info['residual']:.3e} after {info['iterations']} iterations",
            iterations=info["iterations"],
            residual=info["residual"],
        )
    return u, report


def solve_weighted_poisson(domain, phi, psi, f, tol=1e-10, strict=True, max_iter=None):
    """Solve ``div(phi^2 psi^2 grad u) = f`` modulo constants.

    ``phi`` and ``psi`` are either cell fields (face weights are then
    arithmetic averages of ``phi^2 psi^2``) or a ``WeightSpec``, in which case
    ``psi`` is ignored and the weights are evaluated at face centres.
    In strict mode a source with a component along the constants raises
    ``NetSourceMismatch``; otherwise that component is dropped and reported.
    """
    fv = f.values if isinstance(f, ScalarField) else np.asarray(f, float)
    if isinstance(f, ScalarField) and not f.domain.same_grid(domain):
        raise DomainMismatch("source lives on a different grid")
    if hasattr(phi, "kind"):
        w = stiffness_faces(domain, phi)
        mass = mass_cells(domain, phi)
    else:
        for fld in (phi, psi):
            if not fld.domain.same_grid(domain):
                raise DomainMismatch("weights live on a different grid")
        w = faces_from_cells(domain, (phi.values * psi.values) ** 2)
        mass = np.where(domain.interior, psi.values**2, 0.0)
    u, report = solve_faces(domain, w, mass, fv, tol=tol, strict=strict, max_iter=max_iter)
    return ScalarField(domain, u), report


# ---------------------------------------------------------------------------
# generalized eigenvalues


@dataclass
class RayleighResult:
    lam: float
    vector: np.ndarray = field(repr=False)
    iterations: int
    residual: float
    kernel_quotients: list


def probe_diagonal(apply, template, period):
    """Diagonal of a banded operator by coloured probing.

    ``template`` is a tuple of arrays (one per unknown component); unknowns
    sharing a colour must be at least ``period`` cells apart along some axis
    and never coupled.
    """
    diag = tuple(np.zeros_like(t, dtype=float) for t in template)
    for c, t in enumerate(template):
        for off in np.ndindex(*(period,) * t.ndim):
            e = tuple(np.zeros_like(s, dtype=float) for s in template)
            sl = tuple(slice(o, None, period) for o in off)
            e[c][sl] = 1.0
            y = apply(e)
            diag[c][sl] = y[c][sl]
    return diag


def _b_orthonormalize(Z, B):
    """Gram-Schmidt (twice) in the B inner product; drops dependent columns."""
    out = []
    for z in Z:
        v = np.array(z, float)
        for _ in range(2):
            for q in out:
                v = v - _dot(q, B(v)) * q
        nrm = _dot(v, B(v))
        if nrm > 1e-28 * max(1.0, _dot(z, B(z))):
            out.append(v / math.sqrt(nrm))
    return out


def rayleigh_minimize(
    A,
    B,
    excluded_kernel,
    n,
    inv_diag=None,
    mass_diag=None,
    tol=1e-8,
    block=4,
    max_outer=300,
    inner_tol=1e-12,
    inner_maxiter=20000,
    seed=0,
    solve=None,
):
    """Smallest value of ``<u,Au>/<u,Bu>`` on the B-complement of a kernel.

    ``A`` and ``B`` act on vectors of length ``n``.  Block inverse iteration
    with CG inner solves and Rayleigh-Ritz extraction; the excluded
    directions are deflated in the B inner product.  ``mass_diag`` (the
    diagonal of B) is checked for positivity when given.  ``solve``, when
    given, replaces the CG inner solves: it should apply the inverse of a
    positive definite operator such as ``A + s B`` with a small shift ``s``.
    """
    if mass_diag is not None and np.any(np.asarray(mass_diag) <= 0):
        raise DegenerateMass(f"mass form vanishes on {int(np.sum(np.asarray(mass_diag) <= 0))} unknowns")

    quotients = []
    for z in excluded_kernel:
        num, den = _dot(z, A(z)), _dot(z, B(z))
        quotients.append(0.0 if num == 0.0 and den == 0.0 else num / den)
    Z = _b_orthonormalize(excluded_kernel, B)

    def deflate(v):
        for q in Z:
            v = v - _dot(q, B(v)) * q
        return v

    rng = np.random.default_rng(seed)
    X = [deflate(rng.standard_normal(n)) for _ in range(block)]
    lam, resid, it, x0 = math.nan, math.inf, 0, None
    guesses = [None] * block
    for it in range(1, max_outer + 1):
        Y = []
        for j, x in enumerate(X):
            if solve is not None:
                y = solve(B(x))
            else:
                y, _ = pcg(A, B(x), inv_diag, x0=guesses[j], tol=inner_tol, maxiter=inner_maxiter, project=deflate)
            Y.append(deflate(y))
        Yb = _b_orthonormalize(Y, B)
        if not Yb:
            raise DegenerateMass("iteration collapsed onto the excluded kernel")
        AY = [A(y) for y in Yb]
        BY = [B(y) for y in Yb]
        Ar = np.array([[_dot(y, ay) for ay in AY] for y in Yb])
        Br = np.array([[_dot(y, by) for by in BY] for y in Yb])
        Ar = 0.5 * (Ar + Ar.T)
        Br = 0.5 * (Br + Br.T)
        try:
            vals, vecs = scipy.linalg.eigh(Ar, Br)
        except np.linalg.LinAlgError as exc:
            raise DegenerateMass(f"mass form is singular on the search space: {exc}") from exc
        X = [sum(vecs[i, j] * Yb[i] for i in range(len(Yb))) for j in range(len(Yb))]
        AX = [sum(vecs[i, j] * AY[i] for i in range(len(Yb))) for j in range(len(Yb))]
        BX = [sum(vecs[i, j] * BY[i] for i in range(len(Yb))) for j in range(len(Yb))]
        lam = float(vals[0])
        x0 = X[0]
        rv = AX[0] - lam * BX[0]
        resid = math.sqrt(_dot(rv, rv)) / max(abs(lam) * math.sqrt(_dot(BX[0], BX[0])), 1e-300)
        guesses = [x * (1.0 / v) if v > 0 else None for x, v in zip(X, vals)]
        if lam <= 0:
            raise DegenerateMass(f"non-positive Rayleigh quotient {lam:.3e} off the excluded kernel")
        if resid <= tol:
            break
    else:
        raise NoConvergence(f"eigen-iteration stalled at residual {resid:.3e}", iterations=it, residual=resid)
    return RayleighResult(lam, x0, it, resid, quotients)


def assemble_by_probing(apply, mask, reach):
    """Sparse matrix of a linear operator on the ``mask`` cells.

    ``apply`` maps a vector over the mask cells to another such vector and
    couples cells at most ``reach`` apart along every axis.  Cells sharing a
    colour are ``2 reach + 1`` apart, so each probe recovers whole columns.
    """
    idx = np.argwhere(mask)
    m = idx.shape[0]
    number = -np.ones(mask.shape, dtype=np.int64)
    number[mask] = np.arange(m)
    period = 2 * reach + 1
    shape = np.array(mask.shape)
    offsets = np.array(list(np.ndindex(*(period,) * mask.ndim))) - reach
    rows, cols, vals = [], [], []
    for colour in np.ndindex(*(period,) * mask.ndim):
        sel = np.all(idx % period == np.array(colour), axis=1)
        if not sel.any():
            continue
        e = np.zeros(m)
        e[sel] = 1.0
        y = apply(e)
        src = idx[sel]
        for off in offsets:
            tgt = src + off
            ok = np.all((tgt >= 0) & (tgt < shape), axis=1)
            rnum = number[tuple(tgt[ok].T)]
            keep = rnum >= 0
            r = rnum[keep]
            v = y[r]
            nz = v != 0
            rows.append(r[nz])
            cols.append(number[tuple(src[ok][keep][nz].T)])
            vals.append(v[nz])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))

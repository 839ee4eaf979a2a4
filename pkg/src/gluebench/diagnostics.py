"""Mass integrals, Schwarzschild data and coercivity constants."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import splu

from .constraints import PAD, Geometry, InitialData
from .elliptic import mass_cells, rayleigh_minimize, stiffness_faces
from .errors import DegenerateMass, DomainContainsSingularity, InputError, SurfaceOutsideDomain
from .grid import interpolate, pad_diff, sphere_quadrature
from .kernels import weighted_laplacian
from .weights import stiffness_weight

__all__ = [
    "schwarzschild_metric",
    "schwarzschild_data",
    "beig_mass",
    "MassReport",
    "mass_sweep",
    "richardson",
    "EigenReport",
    "poincare_constant",
    "korn_constant",
    "KornOperator",
    "rigid_motions",
]


# ---------------------------------------------------------------------------
# Schwarzschild


def horizon_radius(m, n):
    """Coordinate radius where the conformal factor degenerates, ``(m/2)^(1/(n-2))``."""
    return (abs(m) / 2) ** (1.0 / (n - 2))


def schwarzschild_metric(m, n, center=None):
    """Callable ``x -> g[i, j]`` for ``(1 + m / (2 r^(n-2)))^(4/(n-2)) delta``.

    Points inside the coordinate sphere ``r <= (m/2)^(1/(n-2))`` get the flat
    metric; callers are expected to stay away from them.
    """
    if n < 3:
        raise InputError("Schwarzschild data needs n >= 3")
    c = np.zeros(n) if center is None else np.asarray(center, float)
    rs = horizon_radius(m, n)

    def g_fn(x):
        y = x - c.reshape((n,) + (1,) * (x.ndim - 1))
        r = np.sqrt(np.sum(y * y, axis=0))
        safe = r > rs
        rr = np.where(safe, r, 1.0)
        u = np.where(safe, (1 + m / (2 * rr ** (n - 2))) ** (4.0 / (n - 2)), 1.0)
        g = np.zeros((n, n) + r.shape)
        for i in range(n):
            g[i, i] = u
        return g

    return g_fn


def schwarzschild_data(m, n, domain, center=None, pad=PAD):
    """Time-symmetric Schwarzschild slice in isotropic coordinates on ``domain``."""
    if domain.dim != n:
        raise InputError(f"dimension {n} does not match a {domain.dim}-D grid")
    c = np.zeros(n) if center is None else np.asarray(center, float)
    if m != 0:
        x = domain.cell_coords()
        r = np.sqrt(np.sum((x - c.reshape((n,) + (1,) * n)) ** 2, axis=0))
        reach = (pad + 1) * domain.h * math.sqrt(n)
        rmin = float(r[domain.interior].min())
        if rmin - reach <= horizon_radius(m, n):
            raise DomainContainsSingularity(
                f"region reaches r={rmin - reach:.4g}, inside r={horizon_radius(m, n):.4g}"
            )
    return InitialData.from_functions(domain, schwarzschild_metric(m, n, c), pad=pad)


# ---------------------------------------------------------------------------
# mass


def _einstein_at(g_fn, pts, h, n, chunk=256):
    """Einstein tensor at points ``(n, Q)`` from local ``(2 PAD + 1)^n`` patches."""
    k = 2 * PAD + 1
    offs = (np.arange(k) - PAD) * h
    grids = np.meshgrid(*([offs] * n), indexing="ij")
    stencil = np.array(grids)  # (n, k, ..., k)
    centre = (Ellipsis,) + (PAD,) * n
    out = np.empty((n, n, pts.shape[1]))
    for s in range(0, pts.shape[1], chunk):
        p = pts[:, s : s + chunk]
        x = p.reshape((n, -1) + (1,) * n) + stencil[:, None]
        geo = Geometry(g_fn(x), h, n)
        Ric = geo.ricci()[centre]
        g = geo.g[centre]
        R = np.einsum("ij...,ij...->...", geo.ginv[centre], Ric)
        out[:, :, s : s + chunk] = Ric - 0.5 * R * g
    return out


def _sphere_area(n):
    """Area of the unit sphere in R^n."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def beig_mass(data, R, h=None, n_theta=48, center=None):
    """Mass from the flux of the Einstein tensor through the coordinate sphere ``r = R``.

    ``m = -1/((n-1)(n-2) |S^(n-1)|) * integral G_ij x^i n^j dS``, which in three
    dimensions is ``-1/(8 pi)`` times the flux.  When ``data`` carries the
    analytic metric it was sampled from (``data.source``), curvature is
    evaluated on small stencils centred at the quadrature nodes; otherwise the
    sphere must fit inside the grid.  ``data`` may also be a metric callable.
    """
    if callable(data):
        g_fn, n = data, None
    else:
        g_fn, n = getattr(data, "source", None), data.domain.dim
        if h is None:
            h = data.domain.h
    if n is None:
        n = int(np.asarray(g_fn(np.zeros((_probe_dim(g_fn), 1)))).shape[0])
    if h is None:
        raise InputError("spacing h is required for a metric callable")
    c = np.zeros(n) if center is None else np.asarray(center, float)
    if n == 2:
        raise InputError("the mass integral needs n >= 3")
    pts, normals, w = sphere_quadrature(n, R, c, n=n_theta)
    if g_fn is None:
        G = _einstein_on_grid(data, pts)
    else:
        G = _einstein_at(g_fn, pts, h, n)
    xs = pts - c[:, None]
    flux = float(np.sum(np.einsum("ijq,iq,jq->q", G, xs, normals) * w))
    return -flux / ((n - 1) * (n - 2) * _sphere_area(n))


def _probe_dim(g_fn):
    for n in (3, 4, 5, 2):
        try:
            out = np.asarray(g_fn(np.ones((n, 1)) * 10.0))
        except Exception:  # noqa: BLE001 - probing shapes only
            continue
        if out.shape[:2] == (n, n):
            return n
    raise InputError("cannot infer the dimension of the metric callable")


def _einstein_on_grid(data, pts):
    d = data.domain
    margin = (data.pad + 1) * d.h
    if np.any(pts.min(axis=1) < d.lo + margin) or np.any(pts.max(axis=1) > d.hi - margin):
        raise SurfaceOutsideDomain("mass sphere does not fit inside the grid")
    geo = data.geometry()
    core = data.core
    Ric = geo.ricci()[core]
    g = geo.g[core]
    R = np.einsum("ij...,ij...->...", geo.ginv[core], Ric)
    G = Ric - 0.5 * R * g
    n = d.dim
    out = np.empty((n, n, pts.shape[1]))
    for i in range(n):
        for j in range(n):
            out[i, j] = interpolate(G[i, j], d, (False,) * n, pts)
    return out


def richardson(radii, values):
    """Intercept of the polynomial in ``1/R`` through the given points."""
    x = 1.0 / np.asarray(radii, float)
    V = np.vander(x, len(x))
    coef = np.linalg.solve(V, np.asarray(values, float))
    return float(coef[-1])


@dataclass
class MassReport:
    radii: list
    values: list
    extrapolated: float

    def rows(self):
        return [{"R": r, "mass": v} for r, v in zip(self.radii, self.values)]

    def decay_slope(self):
        """Log-log slope of ``|value - extrapolated|`` against ``R``."""
        err = np.abs(np.asarray(self.values) - self.extrapolated)
        return float(np.polyfit(np.log(self.radii), np.log(err), 1)[0])


def mass_sweep(data, radii=(8.0, 16.0, 32.0), h=None, n_theta=48, center=None):
    radii = sorted(float(r) for r in radii)
    if len(radii) < 3:
        raise InputError("at least three radii are needed for extrapolation")
    values = [beig_mass(data, R, h=h, n_theta=n_theta, center=center) for R in radii]
    return MassReport(radii, values, richardson(radii[-3:], values[-3:]))


# ---------------------------------------------------------------------------
# coercivity constants


@dataclass
class EigenReport:
    lam: float
    iterations: int
    residual: float
    kernel_quotients: list
    gradient_ratio: float = math.nan
    vector: np.ndarray = field(default=None, repr=False)

    def row(self):
        return {
            "lambda_min": self.lam,
            "constant": 1.0 / self.lam,
            "iterations": self.iterations,
            "residual": self.residual,
            "max_kernel_quotient": max((abs(q) for q in self.kernel_quotients), default=0.0),
            "gradient_ratio": self.gradient_ratio,
        }


def poincare_constant(domain, weights, tol=1e-8, seed=0, **kw):
    """Smallest ``sum w |grad u|^2 / sum psi^2 u^2`` over ``u`` psi^2-orthogonal to constants.

    ``w = phi^2 psi^2`` on faces joining two region cells.
    """
    mask = domain.interior
    w = stiffness_faces(domain, weights)
    mass = mass_cells(domain, weights)
    mvec = mass[mask]
    if np.any(mvec <= 0):
        raise DegenerateMass(f"psi^2 vanishes on {int(np.sum(mvec <= 0))} region cells")
    vol = domain.cell_volume
    full = np.zeros(domain.shape)

    def A(x):
        full[mask] = x
        return weighted_laplacian(full, w, domain.h)[mask] * vol

    def B(x):
        return mvec * x * vol

    diag = _laplacian_diag(domain, w)[mask] * vol
    inv = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 0.0)
    ones = np.ones(int(mask.sum()))
    res = rayleigh_minimize(A, B, [ones], ones.size, inv_diag=inv, mass_diag=mvec, tol=tol, seed=seed, **kw)
    return EigenReport(res.lam, res.iterations, res.residual, res.kernel_quotients, vector=res.vector)


def _laplacian_diag(domain, w):
    d = np.zeros(domain.shape)
    for a, wa in enumerate(w):
        d += np.take(wa, range(domain.shape[a]), axis=a) + np.take(wa, range(1, domain.shape[a] + 1), axis=a)
    return d / domain.h**2


class KornOperator:
    """Weighted symmetric-gradient form on face-staggered vector fields.

    Unknowns are the components on faces touching at least one region cell.
    ``S_aa = D_a Y_a`` lives on cells and ``S_ab`` (``a != b``) on edges whose
    four neighbouring cells are all in the region; both are weighted by
    ``phi^2 psi^2`` at their own positions.  The mass form uses ``psi^2``
    averaged from the neighbouring region cells.
    """

    def __init__(self, domain, weights):
        self.domain = domain
        dim, h = domain.dim, domain.h
        self.vol = domain.cell_volume
        psi2 = mass_cells(domain, weights)
        self.cell_w = np.where(domain.interior, stiffness_weight(weights, domain, domain.cell_coords()), 0.0)
        self.edge_w = {}
        for a in range(dim):
            for b in range(a + 1, dim):
                nodal = tuple(k in (a, b) for k in range(dim))
                we = stiffness_weight(weights, domain, domain.coords(nodal))
                self.edge_w[a, b] = np.where(domain.edge_interior(a, b), we, 0.0)
        self.face_mask = []
        self.face_mass = []
        for a in range(dim):
            touch = pad_diff(domain.interior.astype(float), a, 1.0) != 0
            touch |= domain.face_interior(a)
            cnt = np.where(domain.face_interior(a), 2.0, np.where(touch, 1.0, 0.0))
            p2 = np.pad(psi2, [(1, 1) if k == a else (0, 0) for k in range(dim)])
            s = np.take(p2, range(p2.shape[a] - 1), axis=a) + np.take(p2, range(1, p2.shape[a]), axis=a)
            self.face_mask.append(touch)
            self.face_mass.append(np.where(touch, s / np.where(cnt > 0, cnt, 1.0), 0.0))
        self.sizes = [int(m.sum()) for m in self.face_mask]
        self.n = sum(self.sizes)
        self.h = h

    def unpack(self, x):
        out, k = [], 0
        for m, s in zip(self.face_mask, self.sizes):
            c = np.zeros(m.shape, dtype=x.dtype)
            c[m] = x[k : k + s]
            out.append(c)
            k += s
        return out

    def pack(self, comps):
        return np.concatenate([c[m] for c, m in zip(comps, self.face_mask)])

    def strain(self, Y):
        """``(diag, offdiag)``: cell arrays ``S_aa`` and edge arrays ``S_ab``."""
        h, dim = self.h, self.domain.dim
        diag = [np.diff(Y[a], axis=a) / h for a in range(dim)]
        off = {}
        for a in range(dim):
            for b in range(a + 1, dim):
                off[a, b] = 0.5 * (pad_diff(Y[a], b, h) + pad_diff(Y[b], a, h))
        return diag, off

    def gradient_parts(self, Y):
        h, dim = self.h, self.domain.dim
        return {(a, b): pad_diff(Y[a], b, h) for a in range(dim) for b in range(dim) if a != b}

    def A(self, x):
        Y = self.unpack(x)
        h, dim = self.h, self.domain.dim
        diag, off = self.strain(Y)
        out = [np.zeros_like(c) for c in Y]
        for a in range(dim):
            out[a] -= pad_diff(self.cell_w * diag[a], a, h)
        for (a, b), s in off.items():
            t = 2.0 * self.edge_w[a, b] * s
            out[a] -= 0.5 * np.diff(t, axis=b) / h
            out[b] -= 0.5 * np.diff(t, axis=a) / h
        return self.pack(out) * self.vol

    def B(self, x):
        return self.pack([c * m for c, m in zip(self.unpack(x), self.face_mass)]) * self.vol

    def mass_diag(self):
        return self.pack(self.face_mass) * self.vol

    def forms(self, x):
        """``(sum w |S|^2, sum w |grad Y|^2, sum psi^2 |Y|^2)`` times the cell volume."""
        Y = self.unpack(x)
        diag, off = self.strain(Y)
        grads = self.gradient_parts(Y)
        s2 = sum(float(np.sum(self.cell_w * d**2)) for d in diag)
        g2 = s2
        for (a, b), s in off.items():
            w = self.edge_w[a, b]
            s2 += 2 * float(np.sum(w * s**2))
            g2 += float(np.sum(w * (grads[a, b] ** 2 + grads[b, a] ** 2)))
        m2 = float(np.dot(x, self.B(x)))
        return s2 * self.vol, g2 * self.vol, m2

    def matrix(self):
        """``A`` as a sparse matrix, assembled by coloured probing.

        Face unknowns couple only to faces at most one index away along every
        axis, so sources of one colour (indices equal modulo 3) never share a
        target and every target entry has a unique source.
        """
        dim = self.domain.dim
        offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        number = []
        for m, o in zip(self.face_mask, offsets):
            num = -np.ones(m.shape, dtype=np.int64)
            num[m] = o + np.arange(int(m.sum()))
            number.append(num)
        rows, cols, vals = [], [], []
        for a in range(dim):
            idx = np.argwhere(self.face_mask[a])
            for colour in np.ndindex(*(3,) * dim):
                sel = np.all(idx % 3 == np.array(colour), axis=1)
                if not sel.any():
                    continue
                e = np.zeros(self.n)
                e[number[a][tuple(idx[sel].T)]] = 1.0
                out = self.unpack(self.A(e))
                for c in range(dim):
                    tgt = np.argwhere(out[c] != 0)
                    if not tgt.size:
                        continue
                    src = tgt + (np.array(colour) - tgt + 1) % 3 - 1
                    rows.append(number[c][tuple(tgt.T)])
                    cols.append(number[a][tuple(src.T)])
                    vals.append(out[c][tuple(tgt.T)])
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n, self.n))

    def probe_inverse_diag(self):
        """Jacobi diagonal of ``A`` by coloured probing (stencil reach is one face)."""
        dim = self.domain.dim
        diag = np.zeros(self.n)
        period = 3
        offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        for a in range(dim):
            idx = np.argwhere(self.face_mask[a])
            for colour in np.ndindex(*(period,) * dim):
                sel = np.all(idx % period == np.array(colour), axis=1)
                if not sel.any():
                    continue
                e = np.zeros(self.n)
                pos = offsets[a] + np.nonzero(sel)[0]
                e[pos] = 1.0
                diag[pos] = self.A(e)[pos]
        return np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 0.0)


def rigid_motions(op):
    """Translations and infinitesimal rotations sampled at face centres."""
    d = op.domain
    dim = d.dim
    fc = [d.face_coords(a) for a in range(dim)]
    out = []
    for a in range(dim):
        comps = [np.zeros(m.shape) for m in op.face_mask]
        comps[a] = np.ones(op.face_mask[a].shape)
        out.append(op.pack(comps))
    for a in range(dim):
        for b in range(a + 1, dim):
            comps = [np.zeros(m.shape) for m in op.face_mask]
            comps[a] = -fc[a][b]
            comps[b] = fc[b][a]
            out.append(op.pack(comps))
    return out


def _shifted_solver(A, mass, rel_shift=1e-9):
    """Sparse LU of ``A + s B`` for inverse iteration; ``s`` is tiny relative to ``A``."""
    s = rel_shift * float(np.max(A.diagonal() / mass))
    lu = splu(sp.csc_matrix(A + sp.diags(s * mass)))
    return lu.solve


def korn_core(domain):
    """Region cells lying in a full ``2^n`` block of region cells, largest component.

    Cells outside every such block see no fully interior edge in some
    coordinate plane, so their off-diagonal strain is unconstrained and thin
    chains of them carry spurious zero modes.
    """
    opened = ndimage.binary_opening(domain.interior, structure=np.ones((2,) * domain.dim))
    labels, count = ndimage.label(opened)
    if count > 1:
        opened = labels == 1 + int(np.argmax(np.bincount(labels.ravel())[1:]))
    if not opened.any():
        raise DegenerateMass("region has no full 2^n block of cells at this resolution")
    return dataclasses.replace(domain, interior=opened)


def korn_constant(domain, weights, tol=1e-8, seed=0, direct=True, prune=True, **kw):
    """Smallest ``sum w |S(Y)|^2 / sum psi^2 |Y|^2`` off the rigid motions.

    Also reports ``sum w |grad Y|^2 / sum w |S(Y)|^2`` at the minimizer.
    With ``direct`` the inner solves use a sparse LU factorization of the
    assembled operator instead of preconditioned CG.  With ``prune`` the
    region is first reduced to ``korn_core``.
    """
    if prune:
        domain = korn_core(domain)
    op = KornOperator(domain, weights)
    md = op.mass_diag()
    if np.any(md <= 0):
        raise DegenerateMass(f"psi^2 vanishes on {int(np.sum(md <= 0))} face unknowns")
    kernel = rigid_motions(op)
    if direct:
        kw.setdefault("solve", _shifted_solver(op.matrix(), md))
    res = rayleigh_minimize(
        op.A, op.B, kernel, op.n, inv_diag=op.probe_inverse_diag(), mass_diag=md, tol=tol, seed=seed, **kw
    )
    s2, g2, _ = op.forms(res.vector)
    return EigenReport(res.lam, res.iterations, res.residual, res.kernel_quotients, g2 / s2, res.vector)


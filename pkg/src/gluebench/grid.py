"""Uniform staggered grids with analytic region masks.

Scalars live at cell centres, vector components on the faces normal to
their own axis (MAC layout).  Outside the box every field is taken to be
zero, which makes the two-point gradient and divergence exact negative
transposes of each other:

    <div F, u> + <F, grad u> = 0      for all F, u.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DomainMismatch, EmptyRegion, InputError, SurfaceOutsideDomain

__all__ = [
    "Annulus",
    "ConeShell",
    "Box",
    "GridDomain",
    "ScalarField",
    "VectorField",
    "SymTensorField",
    "Sphere",
    "build_domain",
    "discrete_gradient",
    "discrete_divergence",
    "flux_integral",
    "weighted_inner",
    "sample_cells",
    "sample_faces",
    "rotated_gradient",
    "discrete_curl",
    "grad_array",
    "div_array",
]


# ---------------------------------------------------------------------------
# regions


def regularized_radius(r):
    """Smooth positive radius equal to ``r`` for ``r >= 1``.

    Below one the cubic ``r + (1 - r)**3 / 2`` is used; it matches value,
    slope and curvature at ``r = 1`` and stays above 0.45.
    """
    r = np.asarray(r, dtype=float)
    s = np.clip(1.0 - r, 0.0, None)
    return r + 0.5 * s**3


@dataclass(frozen=True)
class Annulus:
    """Spherical shell ``R1 < |x - center| < R2`` (a ring in 2D)."""

    R1: float
    R2: float
    center: tuple | None = None

    def __post_init__(self):
        if not (0 <= self.R1 < self.R2):
            raise InputError(f"annulus needs 0 <= R1 < R2, got R1={self.R1}, R2={self.R2}")

    def _rel(self, pts):
        c = np.zeros(pts.shape[0]) if self.center is None else np.asarray(self.center, float)
        return pts - c.reshape((-1,) + (1,) * (pts.ndim - 1))

    def radius(self, pts):
        return np.sqrt(np.sum(self._rel(pts) ** 2, axis=0))

    def contains(self, pts):
        r = self.radius(pts)
        return (r > self.R1) & (r < self.R2)

    def distance(self, pts):
        r = self.radius(pts)
        return np.minimum(np.abs(r - self.R1), np.abs(self.R2 - r))

    def factors(self, pts):
        """Signed distance-like factors to the inner and outer boundary."""
        r = self.radius(pts)
        return r - self.R1, self.R2 - r

    def transverse(self, pts):
        return (self.radius(pts) - self.R1) / (self.R2 - self.R1)

    def defining_function(self, pts):
        a, b = self.factors(pts)
        return a * b / (self.R2 - self.R1)

    def bounds(self, dim):
        c = np.zeros(dim) if self.center is None else np.asarray(self.center, float)
        return c - self.R2, c + self.R2


@dataclass(frozen=True)
class ConeShell:
    """Region between two coaxial cones, truncated at ``|x - apex| < Rmax``.

    ``axis`` defaults to the last coordinate axis and ``apex`` to the origin.
    Angles are measured from the axis.
    """

    theta1: float
    theta2: float
    Rmax: float
    axis: tuple | None = None
    apex: tuple | None = None

    def __post_init__(self):
        if not (0 < self.theta1 < self.theta2 < math.pi / 2):
            raise InputError(
                f"cone shell needs 0 < theta1 < theta2 < pi/2, got {self.theta1}, {self.theta2}"
            )
        if not self.Rmax > 0:
            raise InputError(f"Rmax must be positive, got {self.Rmax}")

    def _frame(self, dim):
        apex = np.zeros(dim) if self.apex is None else np.asarray(self.apex, float)
        if self.axis is None:
            axis = np.zeros(dim)
            axis[-1] = 1.0
        else:
            axis = np.asarray(self.axis, float)
            axis = axis / np.linalg.norm(axis)
        return apex, axis

    def _polar(self, pts):
        apex, axis = self._frame(pts.shape[0])
        shape = (-1,) + (1,) * (pts.ndim - 1)
        rel = pts - apex.reshape(shape)
        r = np.sqrt(np.sum(rel**2, axis=0))
        along = np.tensordot(axis, rel, axes=(0, 0))
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = np.where(r > 0, along / np.where(r > 0, r, 1.0), 1.0)
        return r, np.arccos(np.clip(cos, -1.0, 1.0))

    def radius(self, pts):
        return self._polar(pts)[0]

    def angle(self, pts):
        return self._polar(pts)[1]

    def contains(self, pts):
        r, th = self._polar(pts)
        return (th > self.theta1) & (th < self.theta2) & (r < self.Rmax)

    def distance(self, pts):
        r, th = self._polar(pts)

        def to_cone(tk):
            d = np.abs(th - tk)
            return np.where(d < math.pi / 2, r * np.sin(d), r)

        return np.minimum(np.minimum(to_cone(self.theta1), to_cone(self.theta2)), np.abs(self.Rmax - r))

    def factors(self, pts):
        th = self.angle(pts)
        return th - self.theta1, self.theta2 - th

    def transverse(self, pts):
        return (self.angle(pts) - self.theta1) / (self.theta2 - self.theta1)

    def defining_function(self, pts):
        # homogeneous of degree one in |x - apex|
        r, th = self._polar(pts)
        return r * (th - self.theta1) * (self.theta2 - th) / (self.theta2 - self.theta1)

    def bounds(self, dim):
        apex, axis = self._frame(dim)
        # extreme points of the cap lie on the apex, the rim of the outer cone
        # or the spherical cap; sample them densely
        pts = [apex, apex + self.Rmax * axis]
        basis = np.linalg.svd(axis.reshape(1, -1))[2][1:]
        ang = np.linspace(0.0, 2 * math.pi, 721)
        thetas = np.linspace(0.0, self.theta2, 91)
        for th in thetas:
            if dim == 2:
                dirs = [math.cos(th) * axis + s * math.sin(th) * basis[0] for s in (-1, 1)]
            elif dim == 3:
                dirs = [
                    math.cos(th) * axis + math.sin(th) * (math.cos(a) * basis[0] + math.sin(a) * basis[1])
                    for a in ang[::8]
                ]
            else:
                raise InputError("cone shells need dim 2 or 3")
            pts.extend(apex + self.Rmax * d for d in dirs)
        pts = np.array(pts)
        return pts.min(axis=0), pts.max(axis=0)


@dataclass(frozen=True)
class Box:
    """The whole computational box.  Bounds are filled in by ``build_domain``."""

    lo: tuple | None = None
    hi: tuple | None = None

    def _lohi(self, dim):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    def _shaped(self, v, pts):
        return v.reshape((-1,) + (1,) * (pts.ndim - 1))

    def contains(self, pts):
        lo, hi = self._lohi(pts.shape[0])
        lo, hi = self._shaped(lo, pts), self._shaped(hi, pts)
        return np.all((pts > lo) & (pts < hi), axis=0)

    def distance(self, pts):
        lo, hi = self._lohi(pts.shape[0])
        lo, hi = self._shaped(lo, pts), self._shaped(hi, pts)
        return np.min(np.minimum(pts - lo, hi - pts), axis=0)

    def factors(self, pts):
        lo, hi = self._lohi(pts.shape[0])
        return pts[0] - lo[0], hi[0] - pts[0]

    def transverse(self, pts):
        lo, hi = self._lohi(pts.shape[0])
        return (pts[0] - lo[0]) / (hi[0] - lo[0])

    def defining_function(self, pts):
        return self.distance(pts)

    def radius(self, pts):
        return np.sqrt(np.sum(pts**2, axis=0))

    def bounds(self, dim):
        return self._lohi(dim)


RegionSpec = Annulus | ConeShell | Box


# ---------------------------------------------------------------------------
# domain


@dataclass(eq=False)
class GridDomain:
    dim: int
    h: float
    lo: np.ndarray
    shape: tuple
    region: object
    interior: np.ndarray = field(repr=False)
    dist: np.ndarray = field(repr=False)

    @property
    def hi(self):
        return self.lo + self.h * np.asarray(self.shape)

    @property
    def cell_volume(self):
        return self.h**self.dim

    @property
    def n_interior(self):
        return int(np.count_nonzero(self.interior))

    def same_grid(self, other):
        return other is self or (
            self.dim == other.dim
            and self.h == other.h
            and self.shape == other.shape
            and np.array_equal(self.lo, other.lo)
            and self.region == other.region
        )

    def coords(self, nodal=None, pad=0):
        """Point coordinates, shape ``(dim, *grid)``.

        ``nodal[a]`` selects node positions (``lo + i h``) instead of cell
        centres along axis ``a``; ``pad`` adds that many layers on every side.
        """
        if nodal is None:
            nodal = (False,) * self.dim
        axes = []
        for a in range(self.dim):
            n = self.shape[a] + (1 if nodal[a] else 0) + 2 * pad
            off = 0.0 if nodal[a] else 0.5
            axes.append(self.lo[a] + (np.arange(n) - pad + off) * self.h)
        return np.array(np.meshgrid(*axes, indexing="ij"))

    def cell_coords(self, pad=0):
        return self.coords(pad=pad)

    def face_coords(self, a):
        return self.coords(tuple(k == a for k in range(self.dim)))

    def face_interior(self, a):
        """Faces normal to ``a`` with interior cells on both sides."""
        m = self.interior
        pad = [(0, 0)] * self.dim
        pad[a] = (1, 1)
        p = np.pad(m, pad)
        lo = [slice(None)] * self.dim
        hi = [slice(None)] * self.dim
        lo[a] = slice(None, -1)
        hi[a] = slice(1, None)
        return p[tuple(lo)] & p[tuple(hi)]

    def edge_interior(self, a, b):
        """Edges nodal along ``a`` and ``b`` with all four neighbouring cells interior."""
        m = self.interior
        pad = [(0, 0)] * self.dim
        pad[a] = (1, 1)
        pad[b] = (1, 1)
        p = np.pad(m, pad)
        out = np.ones(tuple(s + (1 if k in (a, b) else 0) for k, s in enumerate(self.shape)), bool)
        for sa, sb in itertools.product((0, 1), repeat=2):
            sl = [slice(None)] * self.dim
            sl[a] = slice(sa, sa + self.shape[a] + 1)
            sl[b] = slice(sb, sb + self.shape[b] + 1)
            out &= p[tuple(sl)]
        return out

    def boundary_adjacent(self):
        """Interior cells with at least one face neighbour outside the region."""
        m = self.interior
        out = np.zeros_like(m)
        for a in range(self.dim):
            p = np.pad(m, [(1, 1) if k == a else (0, 0) for k in range(self.dim)])
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[a] = slice(None, -2)
            hi[a] = slice(2, None)
            out |= ~p[tuple(lo)] | ~p[tuple(hi)]
        return out & m


def _box_arrays(box, dim=None):
    lo, hi = box
    lo = np.atleast_1d(np.asarray(lo, float))
    hi = np.atleast_1d(np.asarray(hi, float))
    if dim is not None and lo.size == 1:
        lo = np.full(dim, lo[0])
        hi = np.full(dim, hi[0])
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise InputError(f"empty box {box}")
    return lo, hi


def build_domain(spec, h, box, dim=None, largest_component=False):
    """Rasterize ``spec`` on a uniform grid of spacing ``h`` over ``box``.

    ``box`` is ``(lo, hi)`` with per-axis sequences, or scalars together with
    ``dim``.  A cell is interior when its centre lies strictly inside the
    region.  ``dist`` is the exact geometric distance to the region boundary
    reduced by one spacing and clipped at zero, so it vanishes on every cell
    that touches the boundary and is 1-Lipschitz.  With ``largest_component``
    only the largest face-connected set of interior cells is kept, which
    drops the slivers an under-resolved cone tip leaves behind.
    """
    if not h > 0:
        raise InputError(f"spacing must be positive, got {h}")
    lo, hi = _box_arrays(box, dim)
    dim = lo.size
    n = (hi - lo) / h
    shape = tuple(int(round(v)) for v in n)
    if any(abs(v - s) > 1e-9 * max(1.0, v) for v, s in zip(n, shape)):
        raise InputError(f"box extents {hi - lo} are not a multiple of h={h}")
    if isinstance(spec, Box):
        spec = dataclasses.replace(spec, lo=tuple(lo), hi=tuple(hi))
    rlo, rhi = spec.bounds(dim)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(hi - lo))))
    if np.any(rlo < lo - tol) or np.any(rhi > hi + tol):
        raise EmptyRegion(f"region {spec} is not contained in the box [{lo}, {hi}]")

    dom = GridDomain(dim, float(h), lo, shape, spec, np.zeros(shape, bool), np.zeros(shape))
    pts = dom.cell_coords()
    interior = spec.contains(pts)
    if not interior.any():
        raise EmptyRegion(f"no cell centre of the {shape} grid lies inside {spec}")
    if largest_component:
        labels, count = ndimage.label(interior)
        if count > 1:
            sizes = np.bincount(labels.ravel())[1:]
            interior = labels == 1 + int(np.argmax(sizes))
    dom.interior = interior
    d = np.maximum(spec.distance(pts) - h, 0.0)
    d[~interior] = 0.0
    d[dom.boundary_adjacent()] = 0.0
    dom.dist = d
    return dom


# ---------------------------------------------------------------------------
# fields


@dataclass(eq=False)
class ScalarField:
    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.domain.shape:
            raise DomainMismatch(f"scalar of shape {self.values.shape} on grid {self.domain.shape}")


@dataclass(eq=False)
class VectorField:
    """Face-staggered vector field; ``comps[a]`` has one extra entry along ``a``."""

    domain: GridDomain
    comps: tuple

    def __post_init__(self):
        self.comps = tuple(np.asarray(c) for c in self.comps)
        d = self.domain
        if len(self.comps) != d.dim:
            raise DomainMismatch(f"{len(self.comps)} components on a {d.dim}-D grid")
        for a, c in enumerate(self.comps):
            want = tuple(s + (1 if k == a else 0) for k, s in enumerate(d.shape))
            if c.shape != want:
                raise DomainMismatch(f"component {a} has shape {c.shape}, expected {want}")

    def at_cells(self):
        """Face averages to cell centres, shape ``(dim, *grid)``."""
        out = []
        for a, c in enumerate(self.comps):
            sl0 = [slice(None)] * c.ndim
            sl1 = [slice(None)] * c.ndim
            sl0[a] = slice(None, -1)
            sl1[a] = slice(1, None)
            out.append(0.5 * (c[tuple(sl0)] + c[tuple(sl1)]))
        return np.array(out)


@dataclass(eq=False)
class SymTensorField:
    """Cell-centred symmetric 2-tensor; only ``i <= j`` components are stored."""

    domain: GridDomain
    comps: dict

    @classmethod
    def from_full(cls, domain, arr):
        n = arr.shape[0]
        return cls(domain, {(i, j): np.array(arr[i, j]) for i in range(n) for j in range(i, n)})

    def full(self):
        n = self.domain.dim
        first = self.comps[(0, 0)]
        out = np.empty((n, n) + first.shape, dtype=first.dtype)
        for (i, j), v in self.comps.items():
            out[i, j] = v
            out[j, i] = v
        return out


def _check_same(*fields):
    d0 = fields[0].domain
    for f in fields[1:]:
        if not d0.same_grid(f.domain):
            raise DomainMismatch("fields live on different grids")
    return d0


# ---------------------------------------------------------------------------
# staggered calculus on raw arrays


def _slices(ndim, axis, s):
    sl = [slice(None)] * ndim
    sl[axis] = s
    return tuple(sl)


def pad_diff(x, axis, h):
    """Zero-padded forward difference: ``n`` points -> ``n + 1`` points."""
    pad = [(0, 0)] * x.ndim
    pad[axis] = (1, 1)
    return np.diff(np.pad(x, pad), axis=axis) / h


def grad_array(u, h):
    return tuple(pad_diff(u, a, h) for a in range(u.ndim))


def div_array(F, h):
    return sum(np.diff(c, axis=a) for a, c in enumerate(F)) / h


def discrete_gradient(u):
    """Face-centred two-point gradient of a cell field (zero outside the box)."""
    return VectorField(u.domain, grad_array(u.values, u.domain.h))


def discrete_divergence(F):
    """Cell-centred divergence of a face field; the negative transpose of the gradient."""
    return ScalarField(F.domain, div_array(F.comps, F.domain.h))


def rotated_gradient(domain, s_nodes):
    """2D field ``(ds/dy, -ds/dx)`` from a stream function on nodes.

    The result is discretely divergence-free to rounding.
    """
    if domain.dim != 2:
        raise InputError("rotated_gradient is 2D only")
    s = np.asarray(s_nodes, float)
    h = domain.h
    ex = np.diff(s, axis=1) / h
    ey = -np.diff(s, axis=0) / h
    return VectorField(domain, (ex, ey))


def discrete_curl(domain, A):
    """3D face field ``curl A`` from a potential whose component ``c`` sits on c-edges.

    ``A[c]`` is nodal along the two axes other than ``c``.
    """
    if domain.dim != 3:
        raise InputError("discrete_curl is 3D only")
    h = domain.h
    comps = []
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        comps.append((np.diff(A[c], axis=b) - np.diff(A[b], axis=c)) / h)
    return VectorField(domain, tuple(comps))


def sample_cells(domain, fn, pad=0):
    return fn(domain.cell_coords(pad=pad))


def sample_faces(domain, fn):
    """Sample an analytic vector function ``fn(points) -> (dim, ...)`` on faces."""
    comps = []
    for a in range(domain.dim):
        comps.append(np.asarray(fn(domain.face_coords(a))[a], float))
    return VectorField(domain, tuple(comps))


def sample_nodes(domain, fn):
    return fn(domain.coords((True,) * domain.dim))


def sample_edges(domain, fn):
    """Sample a 3D vector potential on edges (component ``c`` on c-edges)."""
    out = []
    for c in range(domain.dim):
        nodal = tuple(k != c for k in range(domain.dim))
        out.append(np.asarray(fn(domain.coords(nodal))[c], float))
    return tuple(out)


# ---------------------------------------------------------------------------
# surfaces and inner products


@dataclass(frozen=True)
class Sphere:
    R: float
    center: tuple | None = None


def sphere_quadrature(dim, R, center=None, h=None, n=None):
    """Midpoint nodes, outward normals and weights on a coordinate sphere."""
    c = np.zeros(dim) if center is None else np.asarray(center, float)
    if dim == 1:
        normals = np.array([[-1.0, 1.0]])
        w = np.ones(2)
    elif dim == 2:
        if n is None:
            n = max(64, int(math.ceil(2 * math.pi * R / h)) * 2)
        t = (np.arange(n) + 0.5) * 2 * math.pi / n
        normals = np.array([np.cos(t), np.sin(t)])
        w = np.full(n, 2 * math.pi * R / n)
    elif dim == 3:
        if n is None:
            n = max(32, int(math.ceil(math.pi * R / h)) * 2)
        th = (np.arange(n) + 0.5) * math.pi / n
        ph = (np.arange(2 * n) + 0.5) * math.pi / n
        TH, PH = np.meshgrid(th, ph, indexing="ij")
        normals = np.array(
            [np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH), np.cos(TH)]
        ).reshape(3, -1)
        w = (R**2 * np.sin(TH) * (math.pi / n) ** 2).ravel()
    else:
        raise InputError(f"unsupported dimension {dim}")
    pts = c.reshape(-1, 1) + R * normals
    return pts, normals, w


def interpolate(values, domain, nodal, pts):
    """Multilinear interpolation of a staggered array at points ``(dim, m)``."""
    values = np.asarray(values)
    idx0, frac = [], []
    for a in range(domain.dim):
        s = (pts[a] - domain.lo[a]) / domain.h - (0.0 if nodal[a] else 0.5)
        i0 = np.floor(s).astype(int)
        if i0.min() < 0 or i0.max() + 1 > values.shape[a] - 1:
            raise SurfaceOutsideDomain("interpolation stencil leaves the grid")
        idx0.append(i0)
        frac.append(s - i0)
    out = np.zeros(pts.shape[1])
    for corner in itertools.product((0, 1), repeat=domain.dim):
        wgt = np.ones(pts.shape[1])
        for a, c in enumerate(corner):
            wgt = wgt * (frac[a] if c else 1.0 - frac[a])
        out += wgt * values[tuple(idx0[a] + corner[a] for a in range(domain.dim))]
    return out


def _flux_sphere(F, sphere, n_quad):
    d = F.domain
    pts, normals, w = sphere_quadrature(d.dim, sphere.R, sphere.center, d.h, n_quad)
    margin = d.h
    if np.any(pts.min(axis=1) < d.lo + margin) or np.any(pts.max(axis=1) > d.hi - margin):
        raise SurfaceOutsideDomain(f"sphere R={sphere.R} does not fit in the box")
    fn = np.zeros(pts.shape[1])
    for a in range(d.dim):
        nodal = tuple(k == a for k in range(d.dim))
        fn += interpolate(F.comps[a], d, nodal, pts) * normals[a]
    return float(np.sum(fn * w))


def flux_integral(F, surface="boundary", n_quad=None):
    """Outward flux of a face field through a sphere or the region boundary.

    Values are interpolated multilinearly to midpoint nodes on the sphere,
    so a smooth field is integrated with O(h^2) error.  ``"boundary"`` is
    supported for annuli: outer sphere minus inner sphere.
    """
    d = F.domain
    if isinstance(surface, Sphere):
        return _flux_sphere(F, surface, n_quad)
    if surface == "boundary" and isinstance(d.region, Annulus):
        reg = d.region
        return _flux_sphere(F, Sphere(reg.R2, reg.center), n_quad) - _flux_sphere(
            F, Sphere(reg.R1, reg.center), n_quad
        )
    raise InputError(f"unsupported surface {surface!r} for region {d.region}")


def weighted_inner(a, b, w=1.0):
    """``sum a*b*w*h^dim`` over interior cells (scalars) or interior faces (vectors)."""
    d = _check_same(a, b)
    if isinstance(a, ScalarField) != isinstance(b, ScalarField):
        raise DomainMismatch("cannot pair a scalar with a vector field")
    vol = d.cell_volume
    if isinstance(a, ScalarField):
        if isinstance(w, ScalarField):
            _check_same(a, w)
            w = w.values
        prod = a.values * b.values * w
        return float(np.sum(np.broadcast_to(prod, d.shape)[d.interior])) * vol
    total = 0.0
    for k in range(d.dim):
        wk = w.comps[k] if isinstance(w, VectorField) else w
        prod = np.broadcast_to(a.comps[k] * b.comps[k] * wk, a.comps[k].shape)
        total += float(np.sum(prod[d.face_interior(k)]))
    return total * vol

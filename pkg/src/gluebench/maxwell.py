"""Gluing of divergence-free vector fields across a transition region.

Given solenoidal fields ``E1`` (inside) and ``E2`` (outside), the
interpolated field ``E_chi = chi E1 + (1 - chi) E2`` has divergence
``rho_chi`` supported in the cut-off band.  Solving
``div(phi^2 psi^2 grad u) = rho_chi`` on the region and setting
``E = E_chi - phi^2 psi^2 grad u`` removes it.  Since the face weights vanish
on every face not strictly inside the region, ``E`` agrees with ``E1`` and
``E2`` bit for bit away from the region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import SolveReport, mass_cells, solve_faces, stiffness_faces
from .errors import DomainMismatch, InputError, NetSourceMismatch
from .grid import (
    Annulus,
    ConeShell,
    ScalarField,
    Sphere,
    VectorField,
    discrete_curl,
    div_array,
    flux_integral,
    interpolate,
    rotated_gradient,
    sample_edges,
    sample_faces,
    sample_nodes,
    sphere_quadrature,
)
from .weights import CutoffSpec, WeightSpec, cutoff_at

__all__ = [
    "GlueProblem",
    "GlueResult",
    "cutoff_faces",
    "assemble_rho_chi",
    "compatibility_check",
    "glue_fields",
    "make_field",
    "FIELD_KINDS",
]


@dataclass
class GlueProblem:
    E1: VectorField
    E2: VectorField
    domain: object
    weights: WeightSpec = field(default_factory=lambda: WeightSpec("exponential", s=1.0))
    cutoff: CutoffSpec = field(default_factory=CutoffSpec)
    strict: bool = True
    tol: float = 1e-10
    flux_rtol: float = 1e-3
    max_iter: int | None = None


@dataclass
class GlueResult:
    E: VectorField
    u: ScalarField
    rho: ScalarField
    report: SolveReport
    max_div: float
    interface_mismatch: float
    flux_mismatch: float

    CSV_FIELDS = (
        "max_div",
        "interface_mismatch",
        "flux_mismatch",
        "iterations",
        "final_residual",
        "projection_defect",
        "boundary_decay",
    )

    def row(self):
        r = self.report
        return {
            "max_div": self.max_div,
            "interface_mismatch": self.interface_mismatch,
            "flux_mismatch": self.flux_mismatch,
            "iterations": r.iterations,
            "final_residual": r.final_residual,
            "projection_defect": r.projection_defect,
            "boundary_decay": r.boundary_decay,
        }


def cutoff_faces(domain, chi):
    """Cut-off values on faces from a ``CutoffSpec`` or a cell field."""
    if isinstance(chi, CutoffSpec):
        return tuple(cutoff_at(chi, domain.region, domain.face_coords(a)) for a in range(domain.dim))
    if isinstance(chi, ScalarField):
        if not chi.domain.same_grid(domain):
            raise DomainMismatch("cut-off lives on a different grid")
        out = []
        for a in range(domain.dim):
            p = np.pad(chi.values, [(1, 1) if k == a else (0, 0) for k in range(domain.dim)], mode="edge")
            out.append(0.5 * (np.take(p, range(p.shape[a] - 1), axis=a) + np.take(p, range(1, p.shape[a]), axis=a)))
        return tuple(out)
    return tuple(np.asarray(c, float) for c in chi)


def _interpolated(E1, E2, chi_f):
    return tuple(c * a + (1.0 - c) * b for c, a, b in zip(chi_f, E1.comps, E2.comps))


def assemble_rho_chi(E1, E2, chi):
    """Discrete divergence of ``chi E1 + (1 - chi) E2`` on every cell."""
    if not E1.domain.same_grid(E2.domain):
        raise DomainMismatch("E1 and E2 live on different grids")
    d = E1.domain
    Ec = _interpolated(E1, E2, cutoff_faces(d, chi))
    return ScalarField(d, div_array(Ec, d.h))


def _boundary_spheres(domain):
    reg = domain.region
    if isinstance(reg, Annulus):
        return Sphere(reg.R1, reg.center), Sphere(reg.R2, reg.center)
    raise InputError(f"flux compatibility needs an annulus, got {type(reg).__name__}")


def _abs_flux(F, sphere):
    d = F.domain
    pts, normals, w = sphere_quadrature(d.dim, sphere.R, sphere.center, d.h)
    fn = np.zeros(pts.shape[1])
    for a in range(d.dim):
        nodal = tuple(k == a for k in range(d.dim))
        fn += interpolate(F.comps[a], d, nodal, pts) * normals[a]
    return float(np.sum(np.abs(fn) * w))


def compatibility_check(E1, E2, domain=None, relative=False):
    """Flux of ``E1`` through the inner sphere minus flux of ``E2`` through the outer.

    With ``relative`` the ratio to the total absolute flux is returned as well.
    """
    domain = E1.domain if domain is None else domain
    if not (domain.same_grid(E1.domain) and domain.same_grid(E2.domain)):
        raise DomainMismatch("fields live on a different grid")
    inner, outer = _boundary_spheres(domain)
    mismatch = flux_integral(E1, inner) - flux_integral(E2, outer)
    if not relative:
        return mismatch
    scale = _abs_flux(E1, inner) + _abs_flux(E2, outer)
    return mismatch, (abs(mismatch) / scale if scale > 0 else 0.0)


def glue_fields(problem):
    """Screen the transition: returns a ``GlueResult`` with ``div E`` at solver tolerance.

    ``max_div`` is taken over region cells; elsewhere ``div E`` is the input
    divergence, untouched.
    """
    p = problem
    d = p.domain
    for E in (p.E1, p.E2):
        if not d.same_grid(E.domain):
            raise DomainMismatch("input field lives on a different grid")
    p.weights.validate(d.region, d.dim)

    flux = math.nan
    if isinstance(d.region, Annulus):
        flux, rel = compatibility_check(p.E1, p.E2, d, relative=True)
        if p.strict and rel > p.flux_rtol:
            raise NetSourceMismatch(f"flux mismatch {flux:.6g} between the boundary spheres", defect=flux)

    chi_f = cutoff_faces(d, p.cutoff)
    Ec = _interpolated(p.E1, p.E2, chi_f)
    rho = div_array(Ec, d.h)

    w = stiffness_faces(d, p.weights)
    mass = mass_cells(d, p.weights)
    u, report = solve_faces(d, w, mass, rho, tol=p.tol, strict=p.strict, max_iter=p.max_iter)
    g = [np.diff(np.pad(u, [(1, 1) if k == a else (0, 0) for k in range(d.dim)]), axis=a) / d.h for a in range(d.dim)]
    E = tuple(ec - wa * ga for ec, wa, ga in zip(Ec, w, g))

    max_div = float(np.max(np.abs(div_array(E, d.h)[d.interior])))
    mism = 0.0
    for a in range(d.dim):
        outside = ~d.face_interior(a)
        c = chi_f[a]
        for target, sel in ((p.E1.comps[a], c == 1.0), (p.E2.comps[a], c == 0.0)):
            m = outside & sel
            if m.any():
                mism = max(mism, float(np.max(np.abs(E[a][m] - target[m]))))
    return GlueResult(
        E=VectorField(d, E),
        u=ScalarField(d, u),
        rho=ScalarField(d, rho),
        report=report,
        max_div=max_div,
        interface_mismatch=mism,
        flux_mismatch=flux,
    )


# ---------------------------------------------------------------------------
# input fields

FIELD_KINDS = ("zero", "dipole", "monopole", "bump", "uniform")


def _center(domain, params):
    c = params.get("center")
    if c is None:
        reg = domain.region
        c = getattr(reg, "center", None) if isinstance(reg, Annulus) else None
        if c is None and isinstance(reg, ConeShell):
            c = reg.apex
    c = np.zeros(domain.dim) if c is None else np.asarray(c, float)
    return c.reshape((-1,) + (1,) * domain.dim)


def make_field(kind, domain, **params):
    """Standard input fields.

    ``dipole`` and ``bump`` are built from a stream function (2D) or vector
    potential (3D) and are discretely divergence-free.  ``monopole`` is the
    Coulomb field ``q x/|x|^n`` sampled on faces; its divergence is only
    small away from the origin.
    """
    dim = domain.dim
    if kind == "zero":
        return VectorField(domain, tuple(np.zeros(domain.face_coords(a).shape[1:]) for a in range(dim)))
    c = _center(domain, params)
    if kind == "monopole":
        q = float(params.get("charge", 1.0))

        def coulomb(x):
            y = x - c
            r2 = np.sum(y * y, axis=0)
            return q * y / r2 ** (dim / 2)

        return sample_faces(domain, coulomb)
    if kind == "uniform":
        v = np.asarray(params.get("vector", (1.0,) + (0.0,) * (dim - 1)), float)
        if dim == 2:
            return rotated_gradient(domain, sample_nodes(domain, lambda x: v[0] * x[1] - v[1] * x[0]))
        return discrete_curl(domain, sample_edges(domain, lambda x: 0.5 * np.cross(v, x, axis=0)))
    a = float(params.get("core", 0.5))
    amp = float(params.get("amplitude", 1.0))
    if kind == "dipole":
        if dim == 2:

            def stream(x):
                y = x - c
                return -amp * y[1] / (y[0] ** 2 + y[1] ** 2 + a * a)

            return rotated_gradient(domain, sample_nodes(domain, stream))
        m = np.asarray(params.get("moment", (0.0, 0.0, 1.0)), float) * amp

        def potential(x):
            y = x - c
            r2 = np.sum(y * y, axis=0) + a * a
            return np.cross(np.broadcast_to(m.reshape(3, *(1,) * (x.ndim - 1)), y.shape), y, axis=0) / r2**1.5

        return discrete_curl(domain, sample_edges(domain, potential))
    if kind == "bump":
        off = np.asarray(params.get("offset", (0.0,) * dim), float).reshape(c.shape)
        width = float(params.get("width", 0.5))

        def bump(x):
            y = x - c - off
            return amp * np.exp(-np.sum(y * y, axis=0) / (width * width))

        if dim == 2:
            return rotated_gradient(domain, sample_nodes(domain, bump))
        axis = np.asarray(params.get("moment", (0.0, 0.0, 1.0)), float)
        return discrete_curl(
            domain, sample_edges(domain, lambda x: axis.reshape(3, *(1,) * (x.ndim - 1)) * bump(x))
        )
    raise InputError(f"unknown field kind {kind!r}; expected one of {FIELD_KINDS}")

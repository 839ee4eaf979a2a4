"""Command-line front end.

Every subcommand reads a flat INI configuration (sections ``region``,
``grid``, ``weights``, ``cutoff``, ``solver``, ``problem``, ``output``),
applies ``--set section.key=value`` overrides and writes ``summary.csv``,
``manifest.txt`` and, where meaningful, ``*.vtk`` field files into the
output directory.

Exit codes: 0 on success, 2 when the mathematics refuses (net source,
stalled iteration, metric leaving the positive cone, degenerate mass form),
1 on configuration or input errors.  An exit-2 run still writes a one-row
``summary.csv`` naming the error and its measured defect or residual.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DegenerateMass, GlueError, InputError, MetricNotPositive, NetSourceMismatch, Obstruction
from .io import fmt, write_rows, write_vtk

log = logging.getLogger("gluebench")

SCHEMA_VERSION = 1
COMMANDS = ("glue-maxwell", "glue-scalar", "constraints", "kids", "mass", "constants")

_FLOAT, _INT, _BOOL, _STR, _FLOATS = "float", "int", "bool", "str", "floats"

# section -> key -> (type, default); ``None`` defaults mean "command decides"
SCHEMA = {
    "region": {
        "kind": (_STR, "annulus"),
        "R1": (_FLOAT, 1.0),
        "R2": (_FLOAT, 3.0),
        "theta1": (_FLOAT, 0.3),
        "theta2": (_FLOAT, 0.6),
        "Rmax": (_FLOAT, 4.0),
        "center": (_FLOATS, None),
        "largest_component": (_BOOL, False),
    },
    "grid": {
        "dim": (_INT, 2),
        "h": (_FLOAT, None),
        "cells": (_INT, None),
        "lo": (_FLOATS, None),
        "hi": (_FLOATS, None),
        "margin": (_INT, 2),
    },
    "weights": {
        "kind": (_STR, None),
        "sigma": (_FLOAT, None),
        "s": (_FLOAT, None),
        "alpha": (_FLOAT, None),
        "q": (_FLOAT, None),
        "beta": (_FLOAT, None),
    },
    "cutoff": {"t0": (_FLOAT, 0.4), "t1": (_FLOAT, 0.6)},
    "solver": {
        "tol": (_FLOAT, None),
        "max_iter": (_INT, None),
        "strict": (_BOOL, True),
        "flux_rtol": (_FLOAT, 1e-3),
        "smallness": (_FLOAT, 0.1),
        "halvings": (_INT, 4),
        "linear_tol": (_FLOAT, 1e-10),
    },
    "problem": {
        "field1": (_STR, "dipole"),
        "field2": (_STR, "zero"),
        "amplitude": (_FLOAT, 1.0),
        "core": (_FLOAT, 0.5),
        "charge": (_FLOAT, 1.0),
        "width": (_FLOAT, 0.5),
        "metric": (_STR, "flat"),
        "mass": (_FLOAT, 1.0),
        "epsilon": (_FLOAT, 1e-3),
        "bump_r0": (_FLOAT, 0.2),
        "bump_width": (_FLOAT, 0.7),
        "radii": (_FLOATS, (8.0, 16.0, 32.0)),
        "n_theta": (_INT, 48),
        "constant": (_STR, "both"),
        "sweep": (_FLOATS, None),
    },
    "output": {"vtk": (_BOOL, True), "seed": (_INT, 0)},
}


@dataclass
class RunConfig:
    """Typed settings: ``values[section][key]`` for every schema key."""

    values: dict

    def __getitem__(self, section):
        return self.values[section]

    def canonical(self):
        """Deterministic text form used for the manifest hash."""
        lines = []
        for sec in SCHEMA:
            lines.append(f"[{sec}]")
            for key in SCHEMA[sec]:
                lines.append(f"{key} = {_render(self.values[sec][key])}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _render(v):
    if v is None:
        return ""
    if isinstance(v, tuple):
        return ",".join(fmt(float(x)) for x in v)
    return fmt(v)


_BOOLS = {"1": True, "yes": True, "true": True, "on": True, "0": False, "no": False, "false": False, "off": False}


def _convert(kind, raw, where):
    text = raw.strip()
    if text == "" or text.lower() == "none":
        return None
    try:
        if kind == _FLOAT:
            return float(text)
        if kind == _INT:
            return int(text)
        if kind == _BOOL:
            return _BOOLS[text.lower()]
        if kind == _FLOATS:
            return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())
        return text
    except (ValueError, KeyError):
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind}") from None


def preset_names():
    return sorted(p.name[:-4] for p in resources.files("gluebench").joinpath("presets").iterdir() if p.name.endswith(".cfg"))


def preset_command(name):
    """Subcommand a preset is written for, read from its leading comment line."""
    words = _resolve_config(name).splitlines()[0].split()
    if len(words) < 3 or words[1] != "gluebench" or words[2] not in COMMANDS:
        raise ConfigError(f"preset {name!r} does not name its subcommand")
    return words[2]


def _resolve_config(path):
    p = Path(path)
    if p.exists():
        return p.read_text()
    ref = resources.files("gluebench").joinpath("presets", f"{path}.cfg")
    if ref.is_file():
        return ref.read_text()
    raise ConfigError(f"config {path!r} is neither a file nor a preset ({', '.join(preset_names())})")


def load_config(text=None, overrides=()):
    """Parse INI text plus ``section.key=value`` overrides into a ``RunConfig``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    if text:
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        sec, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, name, value)
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            values[sec][key] = _convert(SCHEMA[sec][key][0], raw, f"{sec}.{key}")
    return RunConfig(values)


# ---------------------------------------------------------------------------
# builders


def make_region(cfg, **changes):
    from .grid import Annulus, Box, ConeShell

    r = dict(cfg["region"], **changes)
    kind = r["kind"]
    if kind == "annulus":
        return Annulus(r["R1"], r["R2"], r["center"])
    if kind == "cone":
        return ConeShell(r["theta1"], r["theta2"], r["Rmax"], apex=r["center"])
    if kind == "box":
        return Box()
    raise ConfigError(f"region.kind must be annulus, cone or box, got {kind!r}")


def make_domain(cfg, region=None, h=None):
    from .grid import Box, build_domain

    g = cfg["grid"]
    region = make_region(cfg) if region is None else region
    dim = g["dim"]
    if g["lo"] is not None or g["hi"] is not None:
        if g["lo"] is None or g["hi"] is None:
            raise ConfigError("grid.lo and grid.hi must be given together")
        lo, hi = np.asarray(g["lo"], float), np.asarray(g["hi"], float)
        if lo.size == 1:
            lo, hi = np.full(dim, lo[0]), np.full(dim, hi[0])
        if lo.size != dim or hi.size != dim:
            raise ConfigError(f"grid.lo/hi need {dim} entries")
        if h is None:
            h = g["h"] if g["h"] is not None else _from_cells(g, float(np.max(hi - lo)))
        return build_domain(region, h, (tuple(lo), tuple(hi)), largest_component=cfg["region"]["largest_component"])
    if isinstance(region, Box):
        raise ConfigError("box regions need grid.lo and grid.hi")
    rlo, rhi = region.bounds(dim)
    if h is None:
        h = g["h"] if g["h"] is not None else _from_cells(g, float(np.max(rhi - rlo)))
    if not h > 0:
        raise ConfigError(f"grid.h must be positive, got {h}")
    m = g["margin"] * h
    lo = rlo - m
    count = np.ceil((rhi + m - lo) / h - 1e-9).astype(int)
    hi = lo + count * h
    return build_domain(region, h, (tuple(lo), tuple(hi)), largest_component=cfg["region"]["largest_component"])


def _from_cells(g, extent):
    if g["cells"] is None:
        raise ConfigError("set grid.h or grid.cells")
    if g["cells"] <= 0:
        raise ConfigError(f"grid.cells must be positive, got {g['cells']}")
    return extent / g["cells"]


_WEIGHT_DEFAULTS = {
    "glue-maxwell": {"kind": "exponential", "s": 1.0},
    "glue-scalar": {"kind": "power", "sigma": 8.0},
    "constants": {"kind": "power", "sigma": 4.0},
}


def make_weights(cfg, command):
    from .weights import WeightSpec

    w = {k: v for k, v in cfg["weights"].items() if v is not None}
    base = dict(_WEIGHT_DEFAULTS.get(command, {"kind": "unit"}))
    if "kind" in w and w["kind"] != base.get("kind"):
        base = {}
    base.update(w)
    return WeightSpec(**base)


def make_cutoff(cfg):
    from .weights import CutoffSpec

    return CutoffSpec(cfg["cutoff"]["t0"], cfg["cutoff"]["t1"])


def _field_params(p, which):
    kind = p[which]
    params = {"amplitude": p["amplitude"], "core": p["core"]}
    if kind == "monopole":
        params = {"charge": p["charge"]}
    elif kind == "bump":
        params["width"] = p["width"]
    return kind, params


def _metric(cfg, dim):
    from .diagnostics import schwarzschild_metric
    from .scalar_glue import conformal_bump_metric, flat_metric

    p = cfg["problem"]
    kind = p["metric"]
    if kind == "flat":
        return flat_metric(dim)
    if kind == "schwarzschild":
        return schwarzschild_metric(p["mass"], dim, cfg["region"]["center"])
    if kind == "conformal-bump":
        return conformal_bump_metric(p["epsilon"], p["bump_r0"], p["bump_width"], dim, cfg["region"]["center"])
    raise ConfigError(f"problem.metric must be flat, schwarzschild or conformal-bump, got {kind!r}")


# ---------------------------------------------------------------------------
# commands; each returns (summary rows, fieldnames, manifest extras, files)


def _grid_info(domain):
    return {"grid_shape": "x".join(str(s) for s in domain.shape), "grid_h": fmt(domain.h), "region_cells": domain.n_interior}


def cmd_glue_maxwell(cfg, out):
    from .maxwell import GlueProblem, glue_fields, make_field

    d = make_domain(cfg)
    p = cfg["problem"]
    k1, p1 = _field_params(p, "field1")
    k2, p2 = _field_params(p, "field2")
    E1, E2 = make_field(k1, d, **p1), make_field(k2, d, **p2)
    s = cfg["solver"]
    prob = GlueProblem(
        E1,
        E2,
        d,
        weights=make_weights(cfg, "glue-maxwell"),
        cutoff=make_cutoff(cfg),
        strict=s["strict"],
        tol=1e-10 if s["tol"] is None else s["tol"],
        flux_rtol=s["flux_rtol"],
        max_iter=s["max_iter"],
    )
    res = glue_fields(prob)
    row = dict(res.row(), region_cells=d.n_interior)
    files = []
    if cfg["output"]["vtk"]:
        write_vtk(out / "E.vtk", d, {"E": res.E, "E1": E1, "E2": E2})
        write_vtk(out / "potential.vtk", d, {"u": res.u, "rho": res.rho})
        files += ["E.vtk", "potential.vtk"]
    fields = list(res.CSV_FIELDS) + ["region_cells"]
    return [row], fields, _grid_info(d), files


def cmd_glue_scalar(cfg, out):
    from .scalar_glue import ScalarGlueProblem, flat_metric, picard_glue

    d = make_domain(cfg)
    s = cfg["solver"]
    ghat = _metric(cfg, d.dim)
    if cfg["problem"]["metric"] == "flat":
        raise ConfigError("glue-scalar glues flat space to problem.metric; choose a non-flat metric")
    prob = ScalarGlueProblem(
        flat_metric(d.dim),
        ghat,
        d,
        weights=make_weights(cfg, "glue-scalar"),
        cutoff=make_cutoff(cfg),
        tol=1e-8 if s["tol"] is None else s["tol"],
        max_iter=10 if s["max_iter"] is None else s["max_iter"],
        smallness=s["smallness"],
        linear_tol=s["linear_tol"],
        halvings=s["halvings"],
    )
    res = picard_glue(prob)
    rep = res.report
    write_rows(out / "trace.csv", rep.trace_rows(), ["iteration", "residual", "contraction", "cokernel_defect", "linear_iterations", "halvings"])
    files = ["trace.csv"]
    if cfg["output"]["vtk"]:
        write_vtk(out / "scalar_glue.vtk", d, {"dg": res.dg, "residual": res.residual_field(), "target": res.target})
        files.append("scalar_glue.vtk")
    return [rep.row()], list(rep.CSV_FIELDS), _grid_info(d), files


def cmd_constraints(cfg, out):
    from .constraints import InitialData, constraint_map, curvature, energy_condition

    d = make_domain(cfg)
    data = InitialData.from_functions(d, _metric(cfg, d.dim))
    cv = constraint_map(data)
    _, R = curvature(data)
    holds, margin = energy_condition(cv, data)
    m = d.interior
    vol = d.cell_volume
    sc = cv.scalar_part.values[m]
    vec = cv.vector_part[:, m]
    row = {
        "max_scalar": float(np.max(np.abs(sc))),
        "l2_scalar": math.sqrt(float(np.sum(sc**2)) * vol),
        "max_vector": float(np.max(np.abs(vec))),
        "max_R": float(np.max(np.abs(R.values[m]))),
        "energy_condition": holds,
        "min_margin": float(np.min(margin.values[m])),
    }
    files = []
    if cfg["output"]["vtk"]:
        comps = {f"J_{i}": cv.J[i] for i in range(d.dim)}
        write_vtk(out / "constraints.vtk", d, dict({"rho": cv.mu, "R": R, "margin": margin}, **comps))
        files.append("constraints.vtk")
    return [row], list(row), _grid_info(d), files


def kid_candidates(metric, dim, mass=0.0, center=None):
    """Named ``(N_fn, Y_fn)`` pairs: the flat-space KIDs or the static Schwarzschild lapse."""
    c = np.zeros(dim) if center is None else np.asarray(center, float)

    def rel(x):
        return x - c.reshape((dim,) + (1,) * (x.ndim - 1))

    if metric == "schwarzschild":

        def lapse(x):
            r = np.sqrt(np.sum(rel(x) ** 2, axis=0))
            a = mass / (2 * r ** (dim - 2))
            return (1 - a) / (1 + a)

        return [("static_lapse", lapse, None)]
    if metric != "flat":
        raise ConfigError(f"kids knows candidates for flat and schwarzschild metrics, not {metric!r}")
    out = [("lapse_1", lambda x: np.ones(x.shape[1:]), None)]
    for i in range(dim):
        out.append((f"lapse_x{i}", lambda x, i=i: rel(x)[i], None))
    for i in range(dim):

        def trans(x, i=i):
            Y = np.zeros(x.shape)
            Y[i] = 1.0
            return Y

        out.append((f"translation_{i}", None, trans))
    for i in range(dim):
        for j in range(i + 1, dim):

            def rot(x, i=i, j=j):
                y = rel(x)
                Y = np.zeros(x.shape)
                Y[i], Y[j] = -y[j], y[i]
                return Y

            out.append((f"rotation_{i}{j}", None, rot))
    return out


def cmd_kids(cfg, out):
    from .constraints import InitialData, KidCandidate, kid_residual

    d = make_domain(cfg)
    p = cfg["problem"]
    data = InitialData.from_functions(d, _metric(cfg, d.dim))
    rows = []
    for name, N_fn, Y_fn in kid_candidates(p["metric"], d.dim, p["mass"], cfg["region"]["center"]):
        res = kid_residual(data, KidCandidate.from_functions(d, N_fn, Y_fn))
        rows.append({"candidate": name, "norm_Y": res.norm_Y, "norm_N": res.norm_N})
    return rows, ["candidate", "norm_Y", "norm_N"], _grid_info(d), []


def cmd_mass(cfg, out):
    from .diagnostics import mass_sweep

    p = cfg["problem"]
    dim = cfg["grid"]["dim"]
    if p["metric"] not in ("schwarzschild", "flat"):
        raise ConfigError("mass needs problem.metric = schwarzschild or flat")
    h = 0.25 if cfg["grid"]["h"] is None else cfg["grid"]["h"]
    rep = mass_sweep(_metric(cfg, dim), radii=p["radii"], h=h, n_theta=p["n_theta"], center=cfg["region"]["center"])
    rows = [{"quantity": "beig", "R": R, "value": v} for R, v in zip(rep.radii, rep.values)]
    rows.append({"quantity": "extrapolated", "R": math.inf, "value": rep.extrapolated})
    slope = rep.decay_slope() if p["metric"] == "schwarzschild" else math.nan
    rows.append({"quantity": "decay_slope", "R": math.nan, "value": slope})
    info = {"grid_shape": f"patches of 5^{dim}", "grid_h": fmt(h), "region_cells": 0}
    return rows, ["quantity", "R", "value"], info, []


def cmd_constants(cfg, out):
    from .diagnostics import korn_constant, poincare_constant

    p = cfg["problem"]
    which = p["constant"]
    if which not in ("poincare", "korn", "both"):
        raise ConfigError(f"problem.constant must be poincare, korn or both, got {which!r}")
    kind = cfg["region"]["kind"]
    outer = {"annulus": "R2", "cone": "Rmax"}.get(kind)
    base = cfg["region"][outer] if outer else None
    sweep = p["sweep"] or ((base,) if base is not None else (None,))
    if p["sweep"] and outer is None:
        raise ConfigError("problem.sweep needs an annulus or cone region")
    h0 = cfg["grid"]["h"]
    rows, info = [], {}
    seed = cfg["output"]["seed"]
    for R in sweep:
        region = make_region(cfg, **({outer: R} if outer else {}))
        h = None if h0 is None or R is None else h0 * (R / base)
        d = make_domain(cfg, region=region, h=h)
        w = make_weights(cfg, "constants")
        info = _grid_info(d)
        for name, fn in (("poincare", poincare_constant), ("korn", korn_constant)):
            if which not in (name, "both"):
                continue
            rep = fn(d, w, seed=seed)
            log.info("%s constant at R=%s: lambda_min %.6g", name, R, rep.lam)
            row = rep.row()
            row.pop("constant")
            rows.append(dict({"kind": name, "R": math.nan if R is None else R, "h": d.h}, **row))
    fields = ["kind", "R", "h", "lambda_min", "iterations", "residual", "max_kernel_quotient", "gradient_ratio"]
    return rows, fields, info, []


HANDLERS = {
    "glue-maxwell": cmd_glue_maxwell,
    "glue-scalar": cmd_glue_scalar,
    "constraints": cmd_constraints,
    "kids": cmd_kids,
    "mass": cmd_mass,
    "constants": cmd_constants,
}


# ---------------------------------------------------------------------------
# driver


def _manifest(out, command, cfg, info, status, fields, files):
    from .kernels import BACKEND

    lines = [
        f"command = {command}",
        f"version = {__version__}",
        f"schema_version = {SCHEMA_VERSION}",
        f"config_sha256 = {cfg.digest()}",
        f"status = {status}",
        f"summary_fields = {','.join(fields)}",
        f"backend = {BACKEND}",
    ]
    lines += [f"{k} = {v}" for k, v in info.items()]
    lines.append(f"files = {','.join(['summary.csv'] + list(files)) if fields else ''}")
    lines.append("")
    lines.append(cfg.canonical())
    (out / "manifest.txt").write_text("\n".join(lines))


def _safe_grid_info(cfg, command):
    if command == "mass":
        return {}
    try:
        return _grid_info(make_domain(cfg))
    except GlueError:
        return {}


def _exit_code(exc):
    if isinstance(exc, (Obstruction, DegenerateMass, MetricNotPositive)):
        return 2
    return 1


OBSTRUCTION_FIELDS = ("status", "error", "defect", "iterations", "residual")


def _obstruction_row(exc):
    return {
        "status": "obstructed",
        "error": type(exc).__name__,
        "defect": float(getattr(exc, "defect", math.nan)),
        "iterations": int(getattr(exc, "iterations", 0)),
        "residual": float(getattr(exc, "residual", math.nan)),
    }


def _reason(exc):
    name = type(exc).__name__
    detail = ""
    if isinstance(exc, NetSourceMismatch):
        detail = f" defect={fmt(float(exc.defect))}"
    elif hasattr(exc, "residual"):
        detail = f" iterations={exc.iterations} residual={fmt(float(exc.residual))}"
    return f"reason: {name}{detail}"


def build_parser():
    ap = argparse.ArgumentParser(prog="gluebench", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"gluebench {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} pipeline")
        sp.add_argument("--config", help="INI file or preset name (" + ", ".join(preset_names()) + ")")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one setting")
        sp.add_argument("--out", default="out", help="output directory (default: %(default)s)")
        sp.add_argument("--quiet", action="store_true", help="only warnings and the result line")
    return ap


def run(command, cfg, out):
    """Run one pipeline; returns the exit code and writes all artifacts."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows, fields, info, files = HANDLERS[command](cfg, out)
    except GlueError as exc:
        code = _exit_code(exc)
        if code == 2:
            write_rows(out / "summary.csv", [_obstruction_row(exc)], OBSTRUCTION_FIELDS)
            _manifest(out, command, cfg, _safe_grid_info(cfg, command), type(exc).__name__, OBSTRUCTION_FIELDS, [])
            print(_reason(exc))
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    write_rows(out / "summary.csv", rows, fields)
    _manifest(out, command, cfg, info, "ok", fields, files)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        text = _resolve_config(args.config) if args.config else None
        cfg = load_config(text, args.set)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    code = run(args.command, cfg, args.out)
    if code == 0 and not args.quiet:
        print(f"wrote {Path(args.out) / 'summary.csv'}")
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Legacy-ASCII VTK and CSV serialization of grid fields.

Cell quantities are written as point data located at cell centres, so a VTK
reader sees a structured-points lattice with origin ``lo + h/2``.  Face
fields are averaged to cell centres first.  Floats carry 17 significant
digits.
"""

from __future__ import annotations

import csv
import itertools
from pathlib import Path

import numpy as np

from .grid import ScalarField, SymTensorField, VectorField

__all__ = ["FLOAT_FMT", "fmt", "write_vtk", "read_vtk", "write_field_csv", "read_field_csv", "write_rows", "read_rows"]

FLOAT_FMT = "%.17g"


def fmt(v):
    """Deterministic text form of a scalar value."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def _pad3(seq, fill):
    seq = list(seq)
    return seq + [fill] * (3 - len(seq))


def _columns(fields):
    """``(name, array)`` pairs of cell arrays (vectors keep a leading component axis)."""
    out = []
    for name, f in fields.items():
        if isinstance(f, ScalarField):
            out.append((name, np.asarray(f.values, float), "scalar"))
        elif isinstance(f, VectorField):
            out.append((name, np.asarray(f.at_cells(), float), "vector"))
        elif isinstance(f, SymTensorField):
            for (i, j), v in sorted(f.comps.items()):
                out.append((f"{name}_{i}{j}", np.asarray(v, float), "scalar"))
        else:
            out.append((name, np.asarray(f, float), "scalar"))
    return out


def _vtk_order(a):
    # VTK runs x fastest
    return np.asarray(a).ravel(order="F")


def write_vtk(path, domain, fields, title="gluebench"):
    """Write cell-centred fields to a legacy ASCII structured-points file."""
    dim = domain.dim
    dims = _pad3(domain.shape, 1)
    origin = _pad3(domain.lo + 0.5 * domain.h, 0.0)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(int(v)) for v in dims),
        "ORIGIN " + " ".join(fmt(float(v)) for v in origin),
        "SPACING " + " ".join(fmt(float(domain.h)) for _ in range(3)),
        f"POINT_DATA {int(np.prod(domain.shape))}",
    ]
    for name, arr, kind in _columns(fields):
        if kind == "vector":
            comps = [_vtk_order(arr[a]) for a in range(dim)]
            comps += [np.zeros_like(comps[0])] * (3 - dim)
            lines.append(f"VECTORS {name} double")
            lines.extend(" ".join(fmt(float(c[k])) for c in comps) for k in range(comps[0].size))
        else:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(fmt(float(v)) for v in _vtk_order(arr))
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk(path):
    """Read a file written by ``write_vtk``.

    Returns ``(meta, arrays)`` where arrays are reshaped to the grid (vectors
    get a leading axis of length 3).
    """
    tokens = Path(path).read_text().split("\n")
    meta = {"title": tokens[1]}
    it = iter(tokens[2:])
    arrays = {}
    shape = None
    for line in it:
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        if key == "DIMENSIONS":
            meta["dimensions"] = tuple(int(v) for v in parts[1:])
            shape = tuple(v for v in meta["dimensions"])
        elif key in ("ORIGIN", "SPACING"):
            meta[key.lower()] = tuple(float(v) for v in parts[1:])
        elif key == "POINT_DATA":
            meta["count"] = int(parts[1])
        elif key == "SCALARS":
            next(it)  # lookup table
            vals = np.array([float(next(it)) for _ in range(meta["count"])])
            arrays[parts[1]] = vals.reshape(shape, order="F")
        elif key == "VECTORS":
            rows = [next(it).split() for _ in range(meta["count"])]
            vals = np.array(rows, float).T
            arrays[parts[1]] = np.stack([v.reshape(shape, order="F") for v in vals])
    return meta, arrays


def write_field_csv(path, domain, fields, mask=None):
    """One row per cell: ``i,j,k,x,y,z`` followed by one column per field value."""
    cols = _columns(fields)
    header = ["i", "j", "k", "x", "y", "z"]
    flat = []
    for name, arr, kind in cols:
        if kind == "vector":
            for a in range(domain.dim):
                header.append(f"{name}_{a}")
                flat.append(arr[a])
        else:
            header.append(name)
            flat.append(arr)
    x = domain.cell_coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for idx in itertools.product(*(range(s) for s in domain.shape)):
            if mask is not None and not mask[idx]:
                continue
            ijk = _pad3(idx, 0)
            xyz = _pad3([x[a][idx] for a in range(domain.dim)], 0.0)
            w.writerow([str(v) for v in ijk] + [fmt(float(v)) for v in xyz] + [fmt(float(a[idx])) for a in flat])


def read_field_csv(path):
    """Columns of a field CSV as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [list(map(float, row)) for row in r]
    data = np.array(rows, float).reshape(-1, len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def write_rows(path, rows, fieldnames=None):
    """Write dict rows with deterministic number formatting."""
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for row in rows:
            w.writerow([fmt(row.get(k, "")) for k in fieldnames])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

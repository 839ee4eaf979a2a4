"""Backend selection for the hot matrix-free kernels.

The compiled extension ``_ckernels`` is used when it imports; otherwise, or
when ``GLUEBENCH_BACKEND=python`` is set, the numpy implementation below is
used.  Both compute ``-div(w grad u)`` with zero data outside the box.
"""

import os

import numpy as np

from .grid import div_array, grad_array

__all__ = ["BACKEND", "weighted_laplacian", "weighted_laplacian_python", "thread_count"]


def thread_count():
    """Worker cap from ``GLUE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("GLUE_THREADS", "1")))
    except ValueError:
        return 1


def weighted_laplacian_python(u, w, h):
    g = grad_array(u, h)
    return -div_array(tuple(wa * ga for wa, ga in zip(w, g)), h)


_compiled = None
if os.environ.get("GLUEBENCH_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def weighted_laplacian(u, w, h):
    if _compiled is not None and u.ndim in (2, 3) and u.dtype == np.float64:
        u = np.ascontiguousarray(u)
        w = tuple(np.ascontiguousarray(wa, dtype=np.float64) for wa in w)
        if u.ndim == 2:
            return _compiled.weighted_laplacian_2d(u, w[0], w[1], h, thread_count())
        return _compiled.weighted_laplacian_3d(u, w[0], w[1], w[2], h, thread_count())
    return weighted_laplacian_python(u, w, h)

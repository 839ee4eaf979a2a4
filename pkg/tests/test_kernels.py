import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gluebench import kernels

needs_ext = pytest.mark.skipif(kernels._compiled is None, reason="compiled extension not built")


def _case(shape, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(shape)
    w = []
    for a in range(len(shape)):
        s = list(shape)
        s[a] += 1
        w.append(rng.uniform(0, 2, s))
    return u, tuple(w)


@needs_ext
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_compiled_matches_python_2d(nx, ny, seed):
    u, w = _case((nx, ny), seed)
    a = kernels._compiled.weighted_laplacian_2d(u, w[0], w[1], 0.3, 1)
    b = kernels.weighted_laplacian_python(u, w, 0.3)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-12)


@needs_ext
@given(st.integers(1, 7), st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_compiled_matches_python_3d(nx, ny, nz, seed):
    u, w = _case((nx, ny, nz), seed)
    a = kernels._compiled.weighted_laplacian_3d(u, w[0], w[1], w[2], 0.7, 1)
    b = kernels.weighted_laplacian_python(u, w, 0.7)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-12)


@needs_ext
def test_thread_count_does_not_change_result():
    u, w = _case((40, 30), 3)
    a = kernels._compiled.weighted_laplacian_2d(u, w[0], w[1], 0.1, 1)
    b = kernels._compiled.weighted_laplacian_2d(u, w[0], w[1], 0.1, 3)
    assert np.array_equal(a, b)


@given(st.integers(0, 2**32 - 1))
def test_operator_is_symmetric_positive_semidefinite(seed):
    u, w = _case((6, 5), seed)
    v, _ = _case((6, 5), seed + 1)
    Au = kernels.weighted_laplacian(u, w, 0.5)
    Av = kernels.weighted_laplacian(v, w, 0.5)
    assert float(np.sum(v * Au)) == pytest.approx(float(np.sum(u * Av)), rel=1e-10, abs=1e-10)
    assert float(np.sum(u * Au)) >= -1e-12


def test_one_dimensional_input_uses_fallback():
    u = np.arange(5.0)
    w = (np.ones(6),)
    assert np.allclose(kernels.weighted_laplacian(u, w, 1.0), kernels.weighted_laplacian_python(u, w, 1.0))


def test_backend_env_selects_python():
    env = dict(os.environ, GLUEBENCH_BACKEND="python")
    out = subprocess.run(
        [sys.executable, "-c", "from gluebench import kernels; print(kernels.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"


def test_thread_count_reads_environment(monkeypatch):
    monkeypatch.setenv("GLUE_THREADS", "3")
    assert kernels.thread_count() == 3
    monkeypatch.setenv("GLUE_THREADS", "junk")
    assert kernels.thread_count() == 1

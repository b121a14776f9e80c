import os
import subprocess
import sys

import numpy as np
import pytest

from perftx import _kernels, _kernels_py

needs_ext = pytest.mark.skipif(_kernels.BACKEND != "cython", reason="compiled core not built")


@needs_ext
@pytest.mark.parametrize("n,m,d", [(1, 1, 1), (7, 5, 3), (40, 33, 2)])
def test_compiled_core_matches_numpy(rng, n, m, d):
    ext = _kernels.get_backend("cython")
    X1, X2 = rng.uniform(size=(n, d)), rng.uniform(size=(m, d))
    inv = rng.uniform(0.5, 5, d)
    M = rng.normal(size=(n, n))
    M = M + M.T
    np.testing.assert_allclose(ext.se_cross(X1, X2, inv), _kernels_py.se_cross(X1, X2, inv), atol=1e-14)
    np.testing.assert_allclose(ext.se_gram(X1, inv), _kernels_py.se_gram(X1, inv), atol=1e-14)
    np.testing.assert_allclose(
        ext.weighted_sqdist_sums(M, X1), _kernels_py.weighted_sqdist_sums(M, X1), atol=1e-10
    )


def test_gram_is_symmetric_with_unit_diagonal(backend, rng):
    X = rng.uniform(size=(25, 3))
    K = _kernels.se_gram(X, np.array([2.0, 1.0, 0.5]))
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)


def test_weighted_sqdist_sums_brute_force(backend, rng):
    X = rng.uniform(size=(6, 2))
    M = rng.normal(size=(6, 6))
    M = M + M.T
    expect = np.array([
        sum(M[i, j] * (X[i, k] - X[j, k]) ** 2 for i in range(6) for j in range(6))
        for k in range(2)
    ])
    np.testing.assert_allclose(_kernels.weighted_sqdist_sums(M, X), expect, atol=1e-12)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


def test_pure_env_var_selects_numpy_core():
    env = dict(os.environ, PERFTX_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c", "import perftx._kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"

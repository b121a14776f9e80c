"""Pure-numpy kernel core. Reference for, and fallback of, the compiled core."""
import numpy as np


def se_cross(X1, X2, inv_ls):
    """Unit-amplitude squared-exponential matrix ``exp(-0.5 * |(x - x') / l|^2)``."""
    A = X1 * inv_ls
    B = X2 * inv_ls
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-0.5 * sq)


def se_gram(X, inv_ls):
    K = se_cross(X, X, inv_ls)
    # exact unit diagonal and symmetry despite cancellation in the expansion
    np.fill_diagonal(K, 1.0)
    return 0.5 * (K + K.T)


def weighted_sqdist_sums(M, X):
    """``out[d] = sum_ij M[i, j] * (X[i, d] - X[j, d]) ** 2`` for symmetric ``M``."""
    r = M.sum(1)
    return 2.0 * (r @ (X * X)) - 2.0 * np.einsum("id,id->d", X, M @ X)

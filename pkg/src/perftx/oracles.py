"""Slow, obviously-correct reference computations.

These deliberately avoid the production code paths: GP posteriors use an
explicit dense inverse, gradients use central differences, and Pareto and
allocation sets come from brute-force enumeration. Tests and reproduction
recipes compare the library against them.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def se_kernel(X1, X2, lengthscales, signal_variance):
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    ls = np.asarray(lengthscales, dtype=float)
    K = np.empty((len(X1), len(X2)))
    for i, a in enumerate(X1):
        for j, b in enumerate(X2):
            K[i, j] = signal_variance * math.exp(-0.5 * float(np.sum(((a - b) / ls) ** 2)))
    return K


def dense_gp_posterior(X, y, Xq, lengthscales, signal_variance, noise, mean=0.0):
    """Posterior mean and noisy predictive variance via ``inv(K + noise I)``."""
    y = np.asarray(y, dtype=float)
    K = se_kernel(X, X, lengthscales, signal_variance) + noise * np.eye(len(y))
    Kinv = np.linalg.inv(K)
    Ks = se_kernel(Xq, X, lengthscales, signal_variance)
    mu = mean + Ks @ Kinv @ (y - mean)
    var = signal_variance + noise - np.einsum("ij,jk,ik->i", Ks, Kinv, Ks)
    return mu, var


def dense_log_marginal_likelihood(X, y, lengthscales, signal_variance, noise, mean=0.0):
    y = np.asarray(y, dtype=float)
    K = se_kernel(X, X, lengthscales, signal_variance) + noise * np.eye(len(y))
    r = y - mean
    sign, logdet = np.linalg.slogdet(K)
    return float(-0.5 * r @ np.linalg.solve(K, r) - 0.5 * logdet - 0.5 * len(y) * math.log(2 * math.pi))


def central_difference(f, v, h=1e-5):
    """Gradient of scalar ``f`` at ``v`` by central differences."""
    v = np.asarray(v, dtype=float)
    g = np.empty_like(v)
    for k in range(len(v)):
        e = np.zeros_like(v)
        e[k] = h
        g[k] = (f(v + e) - f(v - e)) / (2 * h)
    return g


def dominance_front(points):
    """O(n^2) non-dominated subset of ``(cost, error)`` points, deduplicated."""
    pts = {(float(c), float(e)) for c, e in points}
    return sorted(
        p for p in pts
        if not any(q[0] <= p[0] and q[1] <= p[1] and q != p for q in pts)
    )


def brute_force_allocations(c_s, c_t, budget, n_s_grid, n_t_grid, training=lambda n_s, n_t: 0.0):
    """Feasible ``(n_s, n_t, cost)`` triples by cost, then target count descending."""
    out = []
    for n_s, n_t in itertools.product(n_s_grid, n_t_grid):
        cost = c_s * n_s + c_t * n_t + training(n_s, n_t)
        if cost <= budget:
            out.append((n_s, n_t, cost))
    return sorted(out, key=lambda a: (a[2], -a[1]))

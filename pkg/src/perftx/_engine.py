"""Shared GP linear algebra for single-task and two-task models.

Training rows carry a task tag (0 = source, 1 = target); a single-task model
is the all-target special case. Covariance between rows ``i`` and ``j`` is
``B[t_i, t_j] * sf2 * se(x_i, x_j) + delta_ij * noise[t_i]`` with the 2x2
task matrix ``B = [[s**2, rho*s], [rho*s, 1]]``.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotrf, dpotri
from scipy.optimize import minimize

from . import _kernels
from .errors import FactorizationError, FitError, KernelError

LOG_2PI = math.log(2.0 * math.pi)
JITTER_START = 1e-10
JITTER_STOP = 1e-4

SOURCE, TARGET = 0, 1


def task_matrix(rho: float, scale: float) -> np.ndarray:
    return np.array([[scale * scale, rho * scale], [rho * scale, 1.0]])


def factorize(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A``, adding diagonal jitter only when needed.

    Tries jitter 0, then ``1e-10 * trace(A) / n`` growing tenfold up to
    ``1e-4 * trace(A) / n``. Returns ``(L, jitter)``.
    """
    n = A.shape[0]
    L, info = dpotrf(A, lower=1, clean=1, overwrite_a=0)
    if info == 0:
        return L, 0.0
    base = float(np.trace(A)) / n
    if not math.isfinite(base) or base <= 0:
        raise FactorizationError("matrix is not positive definite (non-positive trace)")
    level = JITTER_START
    while level <= JITTER_STOP * (1 + 1e-9):
        jitter = level * base
        L, info = dpotrf(A + jitter * np.eye(n), lower=1, clean=1, overwrite_a=0)
        if info == 0:
            return L, jitter
        level *= 10.0
    raise FactorizationError(
        f"Cholesky failed after jitter up to {JITTER_STOP:g} * trace/n"
    )


def inverse_from_factor(L: np.ndarray) -> np.ndarray:
    inv, info = dpotri(L, lower=1)
    if info != 0:
        raise FactorizationError("inverse from Cholesky factor failed")
    return np.tril(inv) + np.tril(inv, -1).T


def check_inputs(X: np.ndarray, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != d:
        raise KernelError(f"expected inputs of dimension {d}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise KernelError("non-finite input")
    return X


@dataclass(frozen=True)
class Hyper:
    """Full hyperparameter set in the optimiser's natural units."""

    lengthscales: np.ndarray
    signal_variance: float
    noise_target: float
    mean_constant: float
    rho: float = 0.0
    noise_source: float = 0.0
    source_scale: float = 1.0
    mean_source: float = 0.0

    def B(self) -> np.ndarray:
        return task_matrix(self.rho, self.source_scale)

    def means(self, n: int, n_source: int) -> np.ndarray:
        mu = np.full(n, self.mean_constant)
        mu[:n_source] = self.mean_source
        return mu


def signal_cross(X1, tags1, X2, tags2, h: Hyper) -> np.ndarray:
    """Noise-free cross covariance between two tagged input sets."""
    base = h.signal_variance * _kernels.se_cross(X1, X2, 1.0 / h.lengthscales)
    if tags1 is None and tags2 is None:
        return base
    B = h.B()
    t1 = np.full(len(X1), TARGET) if tags1 is None else tags1
    t2 = np.full(len(X2), TARGET) if tags2 is None else tags2
    return base * B[t1[:, None], t2[None, :]]


def joint_cov(X, n_source: int, h: Hyper):
    """``(base, S, K)``: unit-task signal, task-scaled signal and noisy covariance.

    Rows ``[:n_source]`` are source rows, the rest target rows.
    """
    base = h.signal_variance * _kernels.se_gram(X, 1.0 / h.lengthscales)
    ns = n_source
    if ns:
        S = base.copy()
        B = h.B()
        S[:ns, :ns] *= B[0, 0]
        S[:ns, ns:] *= B[0, 1]
        S[ns:, :ns] *= B[1, 0]
    else:
        S = base
    K = S.copy()
    idx = np.arange(len(X))
    K[idx[:ns], idx[:ns]] += h.noise_source
    K[idx[ns:], idx[ns:]] += h.noise_target
    return base, S, K


def lml(X, y, n_source: int, h: Hyper, grad: bool = True):
    """Log marginal likelihood and its gradient.

    The gradient is a dict keyed by hyperparameter name, taken with respect
    to log lengthscales, log signal variance, log noise variances, the raw
    mean constants, ``atanh(rho)`` and ``log(source_scale**2)``.
    """
    n = len(y)
    base, S, K = joint_cov(X, n_source, h)
    L, _ = factorize(K)
    r = y - h.means(n, n_source)
    alpha = cho_solve((L, True), r, check_finite=False)
    value = -0.5 * float(r @ alpha) - float(np.log(np.diag(L)).sum()) - 0.5 * n * LOG_2PI
    if not grad:
        return value, None
    W = np.outer(alpha, alpha) - inverse_from_factor(L)
    M = W * S
    ns = n_source
    dW = np.diag(W)
    g = {
        "lengthscales": 0.5 * _kernels.weighted_sqdist_sums(M, X) / h.lengthscales**2,
        "signal_variance": 0.5 * float(M.sum()),
        "noise_target": 0.5 * h.noise_target * float(dW[ns:].sum()),
        "mean_constant": float(alpha[n_source:].sum()),
        "mean_source": float(alpha[:n_source].sum()),
        "rho": 0.0,
        "noise_source": 0.5 * h.noise_source * float(dW[:ns].sum()),
        "source_scale": 0.0,
    }
    if ns:
        G = W * base
        g_ss = float(G[:ns, :ns].sum())
        g_st = 2.0 * float(G[:ns, ns:].sum())
        s, rho = h.source_scale, h.rho
        g["rho"] = 0.5 * (1.0 - rho * rho) * s * g_st
        g["source_scale"] = 0.5 * (s * s * g_ss + 0.5 * rho * s * g_st)
    return value, g


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class FitOptions:
    """Knobs for marginal-likelihood fitting.

    ``fixed`` names hyperparameters held at their initial value; valid names
    are ``lengthscales``, ``signal_variance``, ``noise_variance`` (alias of
    ``noise_target``), ``noise_target``, ``mean_constant``,
    ``mean_source``, ``rho``, ``noise_source`` and ``source_scale``.
    """

    restarts: int = 5
    max_iter: int = 200
    tol: float = 1e-6
    seed: int = 0
    fixed: frozenset = field(default_factory=frozenset)
    standardize: bool = True

    def __post_init__(self):
        fixed = set(self.fixed)
        if "noise_variance" in fixed:
            fixed.discard("noise_variance")
            fixed.add("noise_target")
        self.fixed = frozenset(fixed)
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


# log-space bounds (natural log) used by the optimiser
BOUNDS = {
    "lengthscales": (math.log(1e-3), math.log(1e3)),
    "signal_variance": (math.log(1e-6), math.log(1e4)),
    "noise_target": (math.log(1e-10), math.log(1e1)),
    "mean_constant": (None, None),
    "mean_source": (None, None),
    "rho": (-4.0, 4.0),
    "noise_source": (math.log(1e-6), math.log(1e1)),
    "source_scale": (math.log(1e-14), math.log(1e4)),
}

# restart sampling box (natural units)
RESTART_BOX = {
    "lengthscales": (1e-2, 1e1),
    "signal_variance": (1e-2, 1e2),
    "noise_target": (1e-6, 1.0),
    "noise_source": (1e-6, 1.0),
    "source_scale": (0.1, 10.0),
}


class _Codec:
    """Maps a :class:`Hyper` to and from the free optimisation vector."""

    def __init__(self, d: int, names: list[str], fixed: frozenset, template: Hyper):
        self.d = d
        self.names = [n for n in names if n not in fixed]
        self.template = template

    def size(self, name):
        return self.d if name == "lengthscales" else 1

    def encode(self, h: Hyper) -> np.ndarray:
        out = []
        for n in self.names:
            if n == "lengthscales":
                out.extend(np.log(h.lengthscales))
            elif n in ("mean_constant", "mean_source"):
                out.append(getattr(h, n))
            elif n == "rho":
                out.append(math.atanh(h.rho))
            elif n == "source_scale":
                out.append(math.log(h.source_scale**2))
            else:
                out.append(math.log(max(getattr(h, n), 1e-300)))
        return np.asarray(out, dtype=float)

    def decode(self, v: np.ndarray) -> Hyper:
        kw = {}
        i = 0
        for n in self.names:
            if n == "lengthscales":
                kw[n] = np.exp(v[i : i + self.d])
                i += self.d
                continue
            x = float(v[i])
            i += 1
            if n in ("mean_constant", "mean_source"):
                kw[n] = x
            elif n == "rho":
                kw[n] = math.tanh(x)
            elif n == "source_scale":
                kw[n] = math.exp(0.5 * x)
            else:
                kw[n] = math.exp(x)
        return dataclasses.replace(self.template, **kw)

    def gradient(self, g: dict) -> np.ndarray:
        out = []
        for n in self.names:
            if n == "lengthscales":
                out.extend(g[n])
            else:
                out.append(g[n])
        return np.asarray(out, dtype=float)

    def bounds(self):
        out = []
        for n in self.names:
            out.extend([BOUNDS[n]] * self.size(n))
        return out

    def clip(self, v: np.ndarray) -> np.ndarray:
        v = v.copy()
        for k, (lo, hi) in enumerate(self.bounds()):
            if lo is not None:
                v[k] = max(v[k], lo)
            if hi is not None:
                v[k] = min(v[k], hi)
        return v

    def random_start(self, rng: np.random.Generator) -> np.ndarray:
        h = {}
        for n in self.names:
            if n in ("mean_constant", "mean_source"):
                h[n] = 0.0
            elif n == "lengthscales":
                lo, hi = RESTART_BOX[n]
                h[n] = np.exp(rng.uniform(math.log(lo), math.log(hi), self.d))
            elif n == "rho":
                # rho is unidentified once the source decouples; start it neutral
                h[n] = 0.0
            else:
                lo, hi = RESTART_BOX[n]
                h[n] = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        return self.clip(self.encode(dataclasses.replace(self.template, **h)))


@dataclass(frozen=True)
class FitReport:
    iterations: int
    log_marginal_likelihood: float
    initial_log_marginal_likelihood: float
    train_seconds: float
    restarts: int

    def to_json(self) -> dict:
        return dict(
            iterations=self.iterations,
            log_marginal_likelihood=self.log_marginal_likelihood,
            initial_log_marginal_likelihood=self.initial_log_marginal_likelihood,
            train_seconds=self.train_seconds,
            restarts=self.restarts,
        )

    @classmethod
    def from_json(cls, d: dict) -> "FitReport":
        return cls(**d)


_PENALTY = 1e25


def optimize(X, y, n_source: int, init: Hyper, names: list[str], opts: FitOptions):
    """Maximise the log marginal likelihood from ``init`` plus seeded restarts.

    Returns ``(best Hyper, FitReport)``. The first start is ``init`` itself,
    and ``init`` is returned unchanged if no start improves on it.
    """
    t0 = time.perf_counter()
    codec = _Codec(X.shape[1], names, opts.fixed, init)
    try:
        init_value, _ = lml(X, y, n_source, init, grad=False)
    except FactorizationError:
        init_value = -math.inf

    def objective(v):
        h = codec.decode(v)
        try:
            val, g = lml(X, y, n_source, h)
        except FactorizationError:
            return _PENALTY, np.zeros_like(v)
        if not math.isfinite(val):
            return _PENALTY, np.zeros_like(v)
        return -val, -codec.gradient(g)

    best_h, best_val = init, init_value
    iterations = 0
    if codec.names:
        rng = np.random.Generator(np.random.PCG64(opts.seed))
        starts = [codec.clip(codec.encode(init))]
        starts += [codec.random_start(rng) for _ in range(opts.restarts - 1)]
        for v0 in starts:
            f0, _ = objective(v0)
            # L-BFGS-B's ftol is relative; scale it so the stop rule is |delta| < tol
            ftol = opts.tol / max(1.0, abs(f0)) if f0 < _PENALTY else opts.tol
            res = minimize(
                objective,
                v0,
                jac=True,
                method="L-BFGS-B",
                bounds=codec.bounds(),
                options={"maxiter": opts.max_iter, "ftol": ftol, "gtol": 1e-8},
            )
            iterations += int(res.nit)
            if res.fun >= _PENALTY or not math.isfinite(res.fun):
                continue
            h = codec.decode(res.x)
            # re-evaluate at the returned point; L-BFGS-B may report a stale value
            try:
                val, _ = lml(X, y, n_source, h, grad=False)
            except FactorizationError:
                continue
            if math.isfinite(val) and val > best_val:
                best_h, best_val = h, val
    if not math.isfinite(best_val):
        raise FitError("every restart failed to factorize the covariance matrix")
    if n_source and "rho" in codec.names and best_h.rho != 0.0:
        # once the source decouples the likelihood is flat in rho; report 0 there
        flat = dataclasses.replace(best_h, rho=0.0)
        try:
            val0, _ = lml(X, y, n_source, flat, grad=False)
        except FactorizationError:
            val0 = -math.inf
        if val0 >= best_val - 1e-8 * max(1.0, abs(best_val)) and val0 >= init_value:
            best_h, best_val = flat, val0
    report = FitReport(
        iterations=iterations,
        log_marginal_likelihood=float(best_val),
        initial_log_marginal_likelihood=float(init_value),
        train_seconds=time.perf_counter() - t0,
        restarts=opts.restarts,
    )
    return best_h, report


@dataclass
class Posterior:
    """Factorised training state for prediction in standardised units."""

    X: np.ndarray
    r: np.ndarray  # standardised targets minus mean constant
    n_source: int
    h: Hyper
    L: np.ndarray
    alpha: np.ndarray
    jitter: float

    @classmethod
    def build(cls, X, y_std, n_source, h: Hyper) -> "Posterior":
        _, _, K = joint_cov(X, n_source, h)
        L, jitter = factorize(K)
        r = y_std - h.means(len(y_std), n_source)
        alpha = cho_solve((L, True), r, check_finite=False)
        return cls(X=X, r=r, n_source=n_source, h=h, L=L, alpha=alpha, jitter=jitter)

    def tags(self) -> np.ndarray | None:
        if not self.n_source:
            return None
        t = np.full(len(self.X), TARGET)
        t[: self.n_source] = SOURCE
        return t

    def predict_target(self, Xq: np.ndarray):
        """Standardised target-task mean and variance (noise included)."""
        kq = signal_cross(Xq, None, self.X, self.tags(), self.h)
        mean = self.h.mean_constant + kq @ self.alpha
        v = solve_triangular(self.L, kq.T, lower=True, check_finite=False)
        prior = self.h.signal_variance + self.h.noise_target
        var = prior - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)


def standardization(y: np.ndarray, fallback_scale: float | None = None):
    """``(center, scale)`` mapping ``y`` to zero mean and unit variance."""
    center = float(np.mean(y))
    scale = float(np.std(y)) if len(y) >= 2 else 0.0
    if not math.isfinite(scale) or scale <= 1e-12 * max(1.0, abs(center)):
        scale = fallback_scale if fallback_scale else 1.0
    return center, scale

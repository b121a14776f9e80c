"""Single-task Gaussian process regression with a squared-exponential ARD kernel.

Fitted models standardise targets internally (zero mean, unit variance);
:class:`KernelParams` stored on a fitted model are in those standardised
units and :func:`predict` maps results back to the data's units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _engine, _kernels
from ._engine import FitOptions, FitReport, Hyper, Posterior, factorize
from .errors import FitError, KernelError

__all__ = [
    "KernelParams",
    "FitOptions",
    "GPModel",
    "kernel_eval",
    "gram",
    "log_marginal_likelihood",
    "fit",
    "condition",
    "predict",
    "predict_many",
    "factorize",
]

_PARAM_NAMES = ["lengthscales", "signal_variance", "noise_target", "mean_constant"]


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters of the single-task GP."""

    lengthscales: tuple
    signal_variance: float
    noise_variance: float = 0.0
    mean_constant: float = 0.0

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        if not ls or not all(math.isfinite(v) and v > 0 for v in ls):
            raise KernelError("lengthscales must be positive and finite")
        if not (math.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise KernelError("signal variance must be positive and finite")
        if not (math.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise KernelError("noise variance must be non-negative and finite")
        if not math.isfinite(self.mean_constant):
            raise KernelError("mean constant must be finite")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    @classmethod
    def default(cls, dim: int) -> "KernelParams":
        return cls(lengthscales=(0.5,) * dim, signal_variance=1.0, noise_variance=1e-2)

    def to_hyper(self) -> Hyper:
        return Hyper(
            lengthscales=np.asarray(self.lengthscales),
            signal_variance=self.signal_variance,
            noise_target=self.noise_variance,
            mean_constant=self.mean_constant,
        )

    @classmethod
    def from_hyper(cls, h: Hyper) -> "KernelParams":
        return cls(
            lengthscales=tuple(float(v) for v in h.lengthscales),
            signal_variance=float(h.signal_variance),
            noise_variance=float(h.noise_target),
            mean_constant=float(h.mean_constant),
        )

    def to_json(self) -> dict:
        return {
            "lengthscales": list(self.lengthscales),
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
            "mean_constant": self.mean_constant,
        }

    @classmethod
    def from_json(cls, d: dict) -> "KernelParams":
        return cls(
            lengthscales=tuple(d["lengthscales"]),
            signal_variance=d["signal_variance"],
            noise_variance=d["noise_variance"],
            mean_constant=d["mean_constant"],
        )


def kernel_eval(params: KernelParams, x: Sequence[float], x2: Sequence[float]) -> float:
    """``sf2 * exp(-0.5 * sum_d (x_d - x2_d)**2 / l_d**2)``."""
    a = _engine.check_inputs(x, params.dim)
    b = _engine.check_inputs(x2, params.dim)
    if len(a) != 1 or len(b) != 1:
        raise KernelError("kernel_eval takes single input vectors")
    inv = 1.0 / np.asarray(params.lengthscales)
    return float(params.signal_variance * _kernels.se_cross(a, b, inv)[0, 0])


def gram(params: KernelParams, X) -> np.ndarray:
    """Noise-free Gram matrix ``K[i, j] = k(x_i, x_j)``."""
    X = _engine.check_inputs(X, params.dim)
    if len(X) < 1:
        raise KernelError("gram needs at least one input")
    K = params.signal_variance * _kernels.se_gram(X, 1.0 / np.asarray(params.lengthscales))
    if not np.all(np.isfinite(K)):
        raise KernelError("non-finite Gram matrix entries")
    return K


def cross_covariance(params: KernelParams, X1, X2) -> np.ndarray:
    X1 = _engine.check_inputs(X1, params.dim)
    X2 = _engine.check_inputs(X2, params.dim)
    return params.signal_variance * _kernels.se_cross(X1, X2, 1.0 / np.asarray(params.lengthscales))


def log_marginal_likelihood(params: KernelParams, X, y):
    """Gaussian log evidence and its gradient.

    Returns
    -------
    value : float
    gradient : ndarray
        Entries for ``log l_1 .. log l_d``, ``log sf2``, ``log noise`` and
        ``mean_constant``, in that order.
    """
    X = _engine.check_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != len(X) or len(y) < 1:
        raise KernelError("y must have one entry per input row (at least one)")
    value, g = _engine.lml(X, y, 0, params.to_hyper())
    grad = np.concatenate(
        [g["lengthscales"], [g["signal_variance"], g["noise_target"], g["mean_constant"]]]
    )
    return value, grad


@dataclass(frozen=True)
class GPModel:
    """A conditioned single-task GP; immutable and safe to share."""

    params: KernelParams
    train_inputs: np.ndarray
    train_targets: np.ndarray
    y_center: float
    y_scale: float
    posterior: Posterior = field(repr=False)
    fit_report: FitReport | None = None

    @property
    def factorization(self) -> np.ndarray:
        return self.posterior.L

    @property
    def alpha(self) -> np.ndarray:
        return self.posterior.alpha

    @property
    def dim(self) -> int:
        return self.params.dim

    @property
    def n_train(self) -> int:
        return len(self.train_targets)

    def to_json(self) -> dict:
        return {
            "kind": "gp",
            "params": self.params.to_json(),
            "standardization": {"center": self.y_center, "scale": self.y_scale},
            "train_inputs": self.train_inputs.tolist(),
            "train_targets": self.train_targets.tolist(),
            "fit_report": None if self.fit_report is None else self.fit_report.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "GPModel":
        if d.get("kind") != "gp":
            raise FitError(f"not a single-task model document (kind={d.get('kind')!r})")
        st = d["standardization"]
        rep = d.get("fit_report")
        return _build(
            np.asarray(d["train_inputs"], dtype=float),
            np.asarray(d["train_targets"], dtype=float),
            KernelParams.from_json(d["params"]),
            st["center"],
            st["scale"],
            None if rep is None else FitReport.from_json(rep),
        )


def _build(X, y, params, center, scale, report) -> GPModel:
    post = Posterior.build(X, (y - center) / scale, 0, params.to_hyper())
    return GPModel(
        params=params,
        train_inputs=X,
        train_targets=y,
        y_center=float(center),
        y_scale=float(scale),
        posterior=post,
        fit_report=report,
    )


def _prepare(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if len(y) < 1 or len(y) != len(X):
        raise FitError("need at least one training row and one target per row")
    if not np.all(np.isfinite(y)):
        raise FitError("non-finite training target")
    return _engine.check_inputs(X, X.shape[1]), y


def condition(X, y, params: KernelParams, standardize: bool = False) -> GPModel:
    """Condition a GP on data at fixed hyperparameters (no optimisation).

    With ``standardize=False`` the hyperparameters act on ``y`` directly.
    """
    X, y = _prepare(X, y)
    if X.shape[1] != params.dim:
        raise KernelError("lengthscale count does not match input dimension")
    center, scale = _engine.standardization(y) if standardize else (0.0, 1.0)
    return _build(X, y, params, center, scale, None)


def fit(X, y, init: KernelParams | None = None, opts: FitOptions | None = None) -> GPModel:
    """Fit hyperparameters by maximising the log marginal likelihood.

    ``init`` is expressed in standardised units when ``opts.standardize`` is
    set (the default). The first optimiser start is ``init``; further starts
    are drawn from a seeded log-uniform box.
    """
    X, y = _prepare(X, y)
    opts = opts or FitOptions()
    init = init or KernelParams.default(X.shape[1])
    if init.dim != X.shape[1]:
        raise KernelError("lengthscale count does not match input dimension")
    center, scale = _engine.standardization(y) if opts.standardize else (0.0, 1.0)
    ys = (y - center) / scale
    h, report = _engine.optimize(X, ys, 0, init.to_hyper(), _PARAM_NAMES, opts)
    return _build(X, y, KernelParams.from_hyper(h), center, scale, report)


def predict_many(model: GPModel, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance (observation noise included) at many points."""
    Xq = _engine.check_inputs(Xq, model.dim)
    m, v = model.posterior.predict_target(Xq)
    return m * model.y_scale + model.y_center, v * model.y_scale**2


def predict(model: GPModel, x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise KernelError("predict takes a single input vector")
    m, v = predict_many(model, x[None, :])
    return float(m[0]), float(v[0])

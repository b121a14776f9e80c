"""Two-task transfer GP: source and target observations under one joint kernel.

The joint kernel multiplies a 2x2 task covariance with the input kernel::

    k((a, x), (b, x')) = B[a, b] * k_xx(x, x')
    B = [[s**2, rho * s], [rho * s, 1]]

``rho = tanh(theta)`` is the learned inter-task correlation and ``s`` the
source amplitude relative to the target. Each task has its own observation
noise and its own constant prior mean, and is standardised with its own
mean and scale before fitting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _engine, _kernels, gp
from ._engine import SOURCE, TARGET, FitOptions, FitReport, Hyper, Posterior
from .errors import FitError, KernelError
from .gp import KernelParams

__all__ = [
    "TaskTag",
    "TransferKernelParams",
    "TransferGPModel",
    "transfer_kernel_eval",
    "fit_transfer",
    "condition_transfer",
    "predict_target",
    "predict_target_many",
    "task_correlation",
]

_PARAM_NAMES = [
    "lengthscales",
    "signal_variance",
    "noise_target",
    "mean_constant",
    "mean_source",
    "rho",
    "noise_source",
    "source_scale",
]


class TaskTag:
    SOURCE = "source"
    TARGET = "target"

    @staticmethod
    def index(tag) -> int:
        if tag in ("source", SOURCE):
            return SOURCE
        if tag in ("target", TARGET):
            return TARGET
        raise KernelError(f"unknown task tag {tag!r}")


@dataclass(frozen=True)
class TransferKernelParams:
    """Input kernel plus task correlation and per-task noise.

    ``base.noise_variance`` is ignored; the target noise lives in
    ``noise_target``.
    """

    base: KernelParams
    rho: float = 0.0
    noise_source: float = 0.0
    noise_target: float = 0.0
    source_scale: float = 1.0
    mean_source: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.mean_source):
            raise KernelError("mean_source must be finite")
        if not (math.isfinite(self.rho) and abs(self.rho) < 1):
            raise KernelError("rho must lie strictly inside (-1, 1)")
        for name in ("noise_source", "noise_target"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise KernelError(f"{name} must be non-negative and finite")
        if not (math.isfinite(self.source_scale) and self.source_scale > 0):
            raise KernelError("source_scale must be positive and finite")

    @property
    def dim(self) -> int:
        return self.base.dim

    def task_matrix(self) -> np.ndarray:
        return _engine.task_matrix(self.rho, self.source_scale)

    @classmethod
    def default(cls, dim: int) -> "TransferKernelParams":
        return cls(
            base=KernelParams.default(dim), rho=0.0, noise_source=1e-2, noise_target=1e-2
        )

    def to_hyper(self) -> Hyper:
        return Hyper(
            lengthscales=np.asarray(self.base.lengthscales),
            signal_variance=self.base.signal_variance,
            noise_target=self.noise_target,
            mean_constant=self.base.mean_constant,
            rho=self.rho,
            noise_source=self.noise_source,
            source_scale=self.source_scale,
            mean_source=self.mean_source,
        )

    @classmethod
    def from_hyper(cls, h: Hyper) -> "TransferKernelParams":
        return cls(
            base=KernelParams(
                lengthscales=tuple(float(v) for v in h.lengthscales),
                signal_variance=float(h.signal_variance),
                noise_variance=float(h.noise_target),
                mean_constant=float(h.mean_constant),
            ),
            rho=float(h.rho),
            noise_source=float(h.noise_source),
            noise_target=float(h.noise_target),
            source_scale=float(h.source_scale),
            mean_source=float(h.mean_source),
        )


def transfer_kernel_eval(params: TransferKernelParams, tag_a, x_a, tag_b, x_b) -> float:
    """``B[tag_a, tag_b] * k_xx(x_a, x_b)``."""
    B = params.task_matrix()
    return float(B[TaskTag.index(tag_a), TaskTag.index(tag_b)]) * gp.kernel_eval(
        params.base, x_a, x_b
    )


@dataclass(frozen=True)
class TransferGPModel:
    """Conditioned two-task GP. Source rows come first in the stored arrays."""

    params: TransferKernelParams
    train_inputs: np.ndarray
    train_targets: np.ndarray
    tags: np.ndarray
    centers: tuple  # (source, target)
    scales: tuple
    posterior: Posterior = field(repr=False)
    fit_report: FitReport | None = None

    @property
    def n_source(self) -> int:
        return int(np.sum(self.tags == SOURCE))

    @property
    def n_target(self) -> int:
        return int(np.sum(self.tags == TARGET))

    @property
    def dim(self) -> int:
        return self.params.dim

    def to_json(self) -> dict:
        return {
            "kind": "transfer",
            "params": self.params.base.to_json(),
            "rho": self.params.rho,
            "noise_source": self.params.noise_source,
            "noise_target": self.params.noise_target,
            "source_scale": self.params.source_scale,
            "mean_source": self.params.mean_source,
            "standardization": {
                "source": {"center": self.centers[0], "scale": self.scales[0]},
                "target": {"center": self.centers[1], "scale": self.scales[1]},
            },
            "train_inputs": self.train_inputs.tolist(),
            "train_targets": self.train_targets.tolist(),
            "task": ["source" if t == SOURCE else "target" for t in self.tags],
            "fit_report": None if self.fit_report is None else self.fit_report.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "TransferGPModel":
        if d.get("kind") != "transfer":
            raise FitError(f"not a transfer model document (kind={d.get('kind')!r})")
        params = TransferKernelParams(
            base=KernelParams.from_json(d["params"]),
            rho=d["rho"],
            noise_source=d["noise_source"],
            noise_target=d["noise_target"],
            source_scale=d.get("source_scale", 1.0),
            mean_source=d.get("mean_source", 0.0),
        )
        st = d["standardization"]
        tags = np.array([TaskTag.index(t) for t in d["task"]], dtype=int)
        rep = d.get("fit_report")
        return _build(
            np.asarray(d["train_inputs"], dtype=float),
            np.asarray(d["train_targets"], dtype=float),
            tags,
            params,
            (st["source"]["center"], st["target"]["center"]),
            (st["source"]["scale"], st["target"]["scale"]),
            None if rep is None else FitReport.from_json(rep),
        )


def _build(X, y, tags, params, centers, scales, report) -> TransferGPModel:
    ns = int(np.sum(tags == SOURCE))
    if np.any(tags[:ns] != SOURCE):
        raise FitError("source rows must precede target rows")
    ys = np.where(tags == SOURCE, (y - centers[0]) / scales[0], (y - centers[1]) / scales[1])
    post = Posterior.build(X, ys, ns, params.to_hyper())
    return TransferGPModel(
        params=params,
        train_inputs=X,
        train_targets=y,
        tags=tags,
        centers=(float(centers[0]), float(centers[1])),
        scales=(float(scales[0]), float(scales[1])),
        posterior=post,
        fit_report=report,
    )


def _stack(Xs, ys, Xt, yt):
    Xt = np.asarray(Xt, dtype=float)
    yt = np.asarray(yt, dtype=float).ravel()
    if Xt.ndim == 1:
        Xt = Xt[:, None]
    if len(yt) < 1:
        raise FitError("the target set must contain at least one observation")
    if len(yt) != len(Xt):
        raise FitError("target inputs and targets differ in length")
    d = Xt.shape[1]
    Xs = np.empty((0, d)) if Xs is None else np.asarray(Xs, dtype=float).reshape(-1, d)
    ys = np.empty(0) if ys is None else np.asarray(ys, dtype=float).ravel()
    if len(ys) != len(Xs):
        raise FitError("source inputs and targets differ in length")
    if not (np.all(np.isfinite(ys)) and np.all(np.isfinite(yt))):
        raise FitError("non-finite training target")
    X = _engine.check_inputs(np.vstack([Xs, Xt]), d)
    y = np.concatenate([ys, yt])
    tags = np.concatenate([np.full(len(ys), SOURCE), np.full(len(yt), TARGET)])
    return X, y, tags


def _task_standardization(y, tags, standardize):
    if not standardize:
        return (0.0, 0.0), (1.0, 1.0)
    ys, yt = y[tags == SOURCE], y[tags == TARGET]
    ct, st = _engine.standardization(yt)
    if len(yt) < 2 and len(ys) >= 2:
        # a single target point carries no scale; borrow the source's
        ct, st = _engine.standardization(yt, fallback_scale=_engine.standardization(ys)[1])
    if len(ys):
        cs, ss = _engine.standardization(ys, fallback_scale=st)
    else:
        cs, ss = 0.0, 1.0
    return (cs, ct), (ss, st)


def condition_transfer(
    Xs, ys, Xt, yt, params: TransferKernelParams, standardize: bool = False
) -> TransferGPModel:
    """Condition the joint model at fixed hyperparameters."""
    X, y, tags = _stack(Xs, ys, Xt, yt)
    if X.shape[1] != params.dim:
        raise KernelError("lengthscale count does not match input dimension")
    centers, scales = _task_standardization(y, tags, standardize)
    return _build(X, y, tags, params, centers, scales, None)


def fit_transfer(
    Xs,
    ys,
    Xt,
    yt,
    init: TransferKernelParams | None = None,
    opts: FitOptions | None = None,
) -> TransferGPModel:
    """Fit the joint model on source and target data.

    With no source rows this reduces to :func:`perftx.gp.fit` on the target
    data: the same optimiser runs with the same starts, and the returned
    model carries ``rho = 0``.
    """
    X, y, tags = _stack(Xs, ys, Xt, yt)
    opts = opts or FitOptions()
    d = X.shape[1]
    init = init or TransferKernelParams.default(d)
    if init.dim != d:
        raise KernelError("lengthscale count does not match input dimension")
    ns = int(np.sum(tags == SOURCE))
    if ns == 0:
        base = KernelParams(
            lengthscales=init.base.lengthscales,
            signal_variance=init.base.signal_variance,
            noise_variance=init.noise_target,
            mean_constant=init.base.mean_constant,
        )
        single = gp.fit(X, y, base, opts)
        params = TransferKernelParams(
            base=single.params,
            rho=0.0,
            noise_source=init.noise_source,
            noise_target=single.params.noise_variance,
            source_scale=init.source_scale,
        )
        return _build(
            X,
            y,
            tags,
            params,
            (0.0, single.y_center),
            (1.0, single.y_scale),
            single.fit_report,
        )
    centers, scales = _task_standardization(y, tags, opts.standardize)
    ys_std = np.where(tags == SOURCE, (y - centers[0]) / scales[0], (y - centers[1]) / scales[1])
    h, report = _engine.optimize(X, ys_std, ns, init.to_hyper(), _PARAM_NAMES, opts)
    return _build(X, y, tags, TransferKernelParams.from_hyper(h), centers, scales, report)


def predict_target_many(model: TransferGPModel, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Target-task posterior mean and variance (target noise included)."""
    Xq = _engine.check_inputs(Xq, model.dim)
    m, v = model.posterior.predict_target(Xq)
    c, s = model.centers[1], model.scales[1]
    return m * s + c, v * s * s


def predict_target(model: TransferGPModel, x: Sequence[float]) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise KernelError("predict_target takes a single input vector")
    m, v = predict_target_many(model, x[None, :])
    return float(m[0]), float(v[0])


def task_correlation(model: TransferGPModel) -> float:
    """Learned inter-task correlation ``rho``."""
    return float(model.params.rho)


def joint_kernel_matrix(params: TransferKernelParams, X, tags) -> np.ndarray:
    """Noisy joint covariance for arbitrary (unsorted) tagged inputs."""
    X = _engine.check_inputs(X, params.dim)
    tags = np.array([TaskTag.index(t) for t in tags], dtype=int)
    B = params.task_matrix()
    base = params.base.signal_variance * _kernels.se_gram(
        X, 1.0 / np.asarray(params.base.lengthscales)
    )
    K = base * B[tags[:, None], tags[None, :]]
    K[np.diag_indices_from(K)] += np.where(tags == SOURCE, params.noise_source, params.noise_target)
    return K

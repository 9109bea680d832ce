"""Projected minibatch Adam ascent on the empirical dual objective."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .distributions import DistributionPair, make_rng
from .divergences import DivergenceKind, empirical_objective, gamma_prime
from .errors import ConfigError, DomainError
from .network import (
    NetParams,
    NetworkClassSpec,
    ParamBounds,
    Star,
    TruncatedStar,
    as_function,
    checkpoint_to_dict,
    expand_bounds,
    init,
    raw_forward,
    weighted_grad,
)

ADAM_BETA1 = _kernels.ADAM_BETA1
ADAM_BETA2 = _kernels.ADAM_BETA2
ADAM_EPS = _kernels.ADAM_EPS

# Sub-stream indices under one training seed.
_STREAM_X, _STREAM_Y, _STREAM_INIT, _STREAM_SHUFFLE_X, _STREAM_SHUFFLE_Y = range(5)


def default_batch_size(n: int) -> int:
    return max(1, round(n * 1e-3))


def default_class_spec(kind: DivergenceKind) -> NetworkClassSpec:
    return TruncatedStar() if kind is DivergenceKind.HELLINGER else Star()


@dataclass(frozen=True)
class TrainConfig:
    """One training run.

    ``batch_size=None`` applies the ``max(1, round(n / 1000))`` rule.  The
    learning rate is ``lr_initial`` for the first ``lr_switch_epoch`` epochs
    and ``lr_late`` afterwards.
    """

    kind: DivergenceKind
    k: int
    n: int
    class_spec: Optional[NetworkClassSpec] = None
    epochs: int = 200
    batch_size: Optional[int] = None
    lr_initial: float = 1e-2
    lr_late: float = 1e-3
    lr_switch_epoch: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DivergenceKind.parse(self.kind))
        if self.class_spec is None:
            object.__setattr__(self, "class_spec", default_class_spec(self.kind))
        if self.batch_size is None:
            object.__setattr__(self, "batch_size", default_batch_size(self.n))
        if self.k < 1 or self.n < 1:
            raise ConfigError(f"k and n must be >= 1 (k={self.k}, n={self.n})")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 1 <= self.batch_size <= self.n:
            raise ConfigError(f"batch_size must lie in [1, n], got {self.batch_size}")
        if not (self.lr_initial > 0 and self.lr_late > 0):
            raise ConfigError("learning rates must be positive")
        if self.lr_switch_epoch < 0:
            raise ConfigError("lr_switch_epoch must be >= 0")

    @property
    def bounds(self) -> ParamBounds:
        bounds = expand_bounds(self.class_spec, self.k)
        if self.kind is DivergenceKind.HELLINGER and bounds.trunc is None:
            raise ConfigError("squared Hellinger training needs a truncated network class")
        return bounds


def lr_at(config: TrainConfig, epoch: int) -> float:
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    return config.lr_initial if epoch < config.lr_switch_epoch else config.lr_late


def objective_grad(kind: DivergenceKind, params: NetParams, bounds: ParamBounds,
                   batch_x: np.ndarray, batch_y: np.ndarray) -> tuple[float, NetParams]:
    """Batch objective ``mean g(X) - mean gamma(g(Y))`` and its parameter gradient."""
    batch_x = np.atleast_2d(batch_x)
    batch_y = np.atleast_2d(batch_y)
    gy = raw_forward(params, batch_y)
    if bounds.trunc is not None:
        gy = np.minimum(gy, 1.0 - bounds.trunc)
    if kind is DivergenceKind.HELLINGER and np.any(gy >= 1.0):
        raise DomainError("network output reached the Hellinger pole; use a truncated class")
    value = empirical_objective(kind, as_function(params, bounds), batch_x, batch_y)
    wx = np.full(len(batch_x), 1.0 / len(batch_x))
    wy = -gamma_prime(kind, gy) / len(batch_y)
    flat = weighted_grad(params, bounds, batch_x, wx) + weighted_grad(params, bounds, batch_y, wy)
    return value, NetParams.from_flat(flat, params.k, params.d)


@dataclass
class AdamState:
    """Adam moment accumulators, stored flat in :meth:`NetParams.flatten` order."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(state: AdamState, params: NetParams, grad: NetParams, lr: float) -> tuple[AdamState, NetParams]:
    """Bias-corrected Adam step in the ascent direction (no projection)."""
    g = grad.flatten()
    step = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * g * g
    mhat = m / (1.0 - ADAM_BETA1 ** step)
    vhat = v / (1.0 - ADAM_BETA2 ** step)
    theta = params.flatten() + lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
    return AdamState(m, v, step), NetParams.from_flat(theta, params.k, params.d)


@dataclass
class TrainAudit:
    """Per-run instrumentation collected by the training kernel."""

    steps: int = 0
    box_violations: int = 0
    trunc_violations: int = 0
    max_truncated_output: float = -math.inf

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "box_violations": self.box_violations,
            "trunc_violations": self.trunc_violations,
            "max_truncated_output": self.max_truncated_output,
        }


@dataclass
class TrainResult:
    params: NetParams
    bounds: ParamBounds
    estimate: float
    trajectory: np.ndarray
    wall_time: float
    audit: TrainAudit = field(default_factory=TrainAudit)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "wall_time_s": self.wall_time,
            "trajectory": self.trajectory.tolist(),
            "audit": self.audit.to_dict(),
            "checkpoint": checkpoint_to_dict(self.params, self.bounds),
        }


def draw_samples(config: TrainConfig, pair: DistributionPair) -> tuple[np.ndarray, np.ndarray]:
    """The ``(X^n, Y^n)`` samples used by :func:`train` for this config."""
    x = pair.p.sample(config.n, make_rng(config.seed, _STREAM_X))
    y = pair.q.sample(config.n, make_rng(config.seed, _STREAM_Y))
    return x, y


EpochHook = Callable[[int, NetParams, TrainAudit], None]


def train(config: TrainConfig, pair: DistributionPair, on_epoch: Optional[EpochHook] = None) -> TrainResult:
    """Fit the network by projected Adam and return the full-sample estimate.

    Every optimizer step is followed by clipping into the class box.  The
    kernel audits each post-step parameter vector and each truncated output;
    ``on_epoch(epoch, params, audit)`` is called after every epoch.
    """
    bounds = config.bounds
    kind = config.kind
    k, d, n = config.k, pair.dims, config.n
    t0 = time.perf_counter()
    X, Y = draw_samples(config, pair)
    params = init(k, d, bounds, make_rng(config.seed, _STREAM_INIT))
    theta = params.flatten()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    lo, hi = bounds.box(k, d)
    has_trunc = bounds.trunc is not None
    trunc = bounds.trunc if has_trunc else 0.0
    code = _kernels.KIND_CODES[kind.value]
    shuffle_x = make_rng(config.seed, _STREAM_SHUFFLE_X)
    shuffle_y = make_rng(config.seed, _STREAM_SHUFFLE_Y)
    audit_buf = np.array([0.0, 0.0, -np.inf])
    trajectory = np.empty(config.epochs)
    step = 0
    for epoch in range(config.epochs):
        perm_x = shuffle_x.permutation(n)
        perm_y = shuffle_y.permutation(n)
        step, status = _kernels.run_epoch(
            theta, m, v, step, X, Y, perm_x, perm_y, config.batch_size,
            lr_at(config, epoch), code, k, d, lo, hi, has_trunc, trunc, audit_buf,
        )
        if status == _kernels.HELLINGER_POLE:
            raise DomainError("network output reached the Hellinger pole during training")
        trajectory[epoch] = _kernels.full_objective(theta, X, Y, code, k, d, has_trunc, trunc)
        if on_epoch is not None:
            on_epoch(epoch, NetParams.from_flat(theta.copy(), k, d), _audit(step, audit_buf))
    params = NetParams.from_flat(theta, k, d)
    estimate = empirical_objective(kind, as_function(params, bounds), X, Y)
    if not np.all(np.isfinite(trajectory)) or not math.isfinite(estimate):
        raise DomainError("training produced a non-finite objective")
    return TrainResult(params, bounds, estimate, trajectory, time.perf_counter() - t0, _audit(step, audit_buf))


def _audit(step: int, buf: np.ndarray) -> TrainAudit:
    return TrainAudit(step, int(buf[0]), int(buf[1]), float(buf[2]))

"""Shallow sigmoid networks with box-bounded parameters.

A network computes ``g(x) = b0 + sum_i beta_i * sigmoid(w_i . x + b_i)``
with ``|w_ij|, |b_i| <= a1``, ``|beta_i| <= a2`` and ``|b0| <= a3``.
Optionally the output is clipped from above at ``1 - t`` (needed for the
squared Hellinger dual, whose ``gamma`` has a pole at 1).

Flat parameter vectors use the layout ``[W (row-major), b, beta, b0]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import ConfigError, InvalidSpec


@dataclass(frozen=True)
class NetParams:
    W: np.ndarray  # (k, d)
    b: np.ndarray  # (k,)
    beta: np.ndarray  # (k,)
    b0: float

    def __post_init__(self):
        W = np.array(self.W, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float).reshape(-1)
        beta = np.array(self.beta, dtype=float).reshape(-1)
        k = W.shape[0]
        if b.shape != (k,) or beta.shape != (k,):
            raise ValueError(f"inconsistent shapes W{W.shape} b{b.shape} beta{beta.shape}")
        for arr in (W, b, beta):
            arr.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "b0", float(self.b0))

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def size(self) -> int:
        return self.k * (self.d + 2) + 1

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b, self.beta, [self.b0]])

    @classmethod
    def from_flat(cls, theta, k: int, d: int) -> "NetParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (k * (d + 2) + 1,):
            raise ValueError(f"flat vector of length {theta.shape} does not fit k={k}, d={d}")
        kd = k * d
        return cls(theta[:kd].reshape(k, d), theta[kd:kd + k], theta[kd + k:kd + 2 * k], theta[-1])

    @classmethod
    def zeros(cls, k: int, d: int) -> "NetParams":
        return cls(np.zeros((k, d)), np.zeros(k), np.zeros(k), 0.0)

    def __eq__(self, other):
        return isinstance(other, NetParams) and np.array_equal(self.flatten(), other.flatten())

    def __hash__(self):
        return hash(self.flatten().tobytes())


@dataclass(frozen=True)
class ParamBounds:
    a1: float
    a2: float
    a3: float
    trunc: Optional[float] = None

    def __post_init__(self):
        for name in ("a1", "a2", "a3"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.trunc is not None and not (0.0 < self.trunc < 1.0):
            raise ConfigError(f"truncation level must lie in (0, 1), got {self.trunc}")

    def box(self, k: int, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Flat lower/upper bound vectors matching :meth:`NetParams.flatten`."""
        hi = np.concatenate([np.full(k * d + k, self.a1), np.full(k, self.a2), [self.a3]])
        return -hi, hi

    def output_bound(self, k: int) -> float:
        return k * self.a2 + self.a3


# Network class variants -------------------------------------------------------


@dataclass(frozen=True)
class Generic:
    bounds: ParamBounds


@dataclass(frozen=True)
class Star:
    """``G_k*(c) = G_k(sqrt(k) log k, 2c/k, c)``; ``c=None`` means ``c = 0.5 log k``."""

    c: Optional[float] = None


@dataclass(frozen=True)
class TruncatedStar:
    """Star class clipped at ``1 - t``; ``None`` picks ``m = 0.5 log k``, ``t = 1/log k``."""

    m: Optional[float] = None
    t: Optional[float] = None


@dataclass(frozen=True)
class Ones:
    t: Optional[float] = None


NetworkClassSpec = Generic | Star | TruncatedStar | Ones


def expand_bounds(spec: NetworkClassSpec, k: float) -> ParamBounds:
    """Concrete parameter box of a network class at width ``k``."""
    if isinstance(spec, Generic):
        return spec.bounds
    if isinstance(spec, Ones):
        return ParamBounds(1.0, 1.0, 1.0, spec.t)
    if k < 2:
        raise InvalidSpec(f"star classes need k >= 2 (log k > 0), got k={k}")
    log_k = math.log(k)
    if isinstance(spec, Star):
        c = 0.5 * log_k if spec.c is None else spec.c
        return ParamBounds(math.sqrt(k) * log_k, 2.0 * c / k, c)
    if isinstance(spec, TruncatedStar):
        m = 0.5 * log_k if spec.m is None else spec.m
        t = 1.0 / log_k if spec.t is None else spec.t
        if not 0.0 < t < 1.0:
            raise InvalidSpec(f"truncation t={t} outside (0, 1) at k={k}; use k >= 3")
        return ParamBounds(math.sqrt(k) * log_k, 2.0 * m / k, m, t)
    raise InvalidSpec(f"unknown network class {spec!r}")


def class_spec_from_dict(spec: dict) -> NetworkClassSpec:
    spec = dict(spec)
    variant = spec.pop("variant", None)
    fields = {
        "generic": {"a1", "a2", "a3", "t"},
        "star": {"c"},
        "truncated_star": {"m", "t"},
        "ones": {"t"},
    }
    if variant not in fields:
        raise ConfigError(f"unknown network class variant {variant!r}")
    extra = set(spec) - fields[variant]
    if extra:
        raise ConfigError(f"unknown fields for {variant} class: {sorted(extra)}")
    if variant == "generic":
        try:
            return Generic(ParamBounds(float(spec["a1"]), float(spec["a2"]), float(spec["a3"]), spec.get("t")))
        except KeyError as exc:
            raise ConfigError(f"generic class missing {exc.args[0]!r}") from None
    if variant == "star":
        return Star(spec.get("c"))
    if variant == "truncated_star":
        return TruncatedStar(spec.get("m"), spec.get("t"))
    return Ones(spec.get("t"))


def class_spec_to_dict(spec: NetworkClassSpec) -> dict:
    if isinstance(spec, Generic):
        bd = spec.bounds
        return {"variant": "generic", "a1": bd.a1, "a2": bd.a2, "a3": bd.a3, "t": bd.trunc}
    if isinstance(spec, Star):
        return {"variant": "star", "c": spec.c}
    if isinstance(spec, TruncatedStar):
        return {"variant": "truncated_star", "m": spec.m, "t": spec.t}
    return {"variant": "ones", "t": spec.t}


# Evaluation --------------------------------------------------------------------


def _pre_activation(params: NetParams, x: np.ndarray) -> np.ndarray:
    return x @ params.W.T + params.b


def raw_forward(params: NetParams, x) -> np.ndarray | float:
    """Network output before truncation."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    out = expit(_pre_activation(params, x)) @ params.beta + params.b0
    return float(out[0]) if single else out


def forward(params: NetParams, bounds: ParamBounds, x) -> np.ndarray | float:
    """Evaluate the network at one point ``(d,)`` or a batch ``(m, d)``."""
    out = raw_forward(params, x)
    if bounds.trunc is not None:
        out = np.minimum(out, 1.0 - bounds.trunc)
        if np.ndim(out) == 0:
            out = float(out)
    return out


def as_function(params: NetParams, bounds: ParamBounds):
    return lambda x: forward(params, bounds, x)


def weighted_grad(params: NetParams, bounds: ParamBounds, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Flat gradient of ``sum_j weights[j] * g(x_j)`` with respect to the parameters.

    Points where a truncated network saturates contribute nothing.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    weights = np.asarray(weights, dtype=float)
    s = expit(_pre_activation(params, x))
    if bounds.trunc is not None:
        saturated = s @ params.beta + params.b0 > 1.0 - bounds.trunc
        weights = np.where(saturated, 0.0, weights)
    ds = (s * (1.0 - s)) * params.beta * weights[:, None]  # (m, k)
    return np.concatenate([
        (ds.T @ x).ravel(),
        ds.sum(axis=0),
        s.T @ weights,
        [weights.sum()],
    ])


def grad_params(params: NetParams, bounds: ParamBounds, x) -> NetParams:
    """Gradient of ``g(x)`` at a single point, shaped like ``params``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    flat = weighted_grad(params, bounds, x, np.ones(1))
    return NetParams.from_flat(flat, params.k, params.d)


def project(params: NetParams, bounds: ParamBounds) -> NetParams:
    """Clamp every parameter into its box."""
    lo, hi = bounds.box(params.k, params.d)
    return NetParams.from_flat(np.clip(params.flatten(), lo, hi), params.k, params.d)


def in_box(params: NetParams, bounds: ParamBounds) -> bool:
    lo, hi = bounds.box(params.k, params.d)
    theta = params.flatten()
    return bool(np.all((theta >= lo) & (theta <= hi)))


INIT_SCALE = 0.1


def init(k: int, d: int, bounds: ParamBounds, rng: np.random.Generator) -> NetParams:
    """Uniform draw from ``[-min(0.1, a_j), min(0.1, a_j)]`` per parameter group."""
    if k < 1 or d < 1:
        raise ValueError("k and d must be >= 1")
    r1, r2, r3 = (min(INIT_SCALE, a) for a in (bounds.a1, bounds.a2, bounds.a3))
    return NetParams(
        rng.uniform(-r1, r1, size=(k, d)),
        rng.uniform(-r1, r1, size=k),
        rng.uniform(-r2, r2, size=k),
        rng.uniform(-r3, r3),
    )


# Checkpoints -------------------------------------------------------------------


def checkpoint_to_dict(params: NetParams, bounds: ParamBounds) -> dict:
    out = {"k": params.k, "d": params.d, "a1": bounds.a1, "a2": bounds.a2, "a3": bounds.a3}
    if bounds.trunc is not None:
        out["t"] = bounds.trunc
    out.update(W=params.W.ravel().tolist(), b=params.b.tolist(), beta=params.beta.tolist(), b0=params.b0)
    return out


def checkpoint_from_dict(data: dict) -> tuple[NetParams, ParamBounds]:
    k, d = int(data["k"]), int(data["d"])
    params = NetParams(np.reshape(data["W"], (k, d)), data["b"], data["beta"], data["b0"])
    return params, ParamBounds(data["a1"], data["a2"], data["a3"], data.get("t"))


def save_checkpoint(path, params: NetParams, bounds: ParamBounds) -> None:
    with open(path, "w") as fh:
        json.dump(checkpoint_to_dict(params, bounds), fh)


def load_checkpoint(path) -> tuple[NetParams, ParamBounds]:
    with open(path) as fh:
        return checkpoint_from_dict(json.load(fh))

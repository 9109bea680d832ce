"""Product-form distributions on boxes.

Every distribution here factorizes over coordinates into 1-D marginals
(truncated Gaussians or uniforms) sharing one box support.  Samples are
drawn coordinate-wise by inverse CDF, and d-dimensional expectations of
separable integrands reduce to 1-D quadratures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError
from .quadrature import DEFAULT_TOL, quadrature_1d

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for stream ``(seed, *stream)``.

    Philox keyed through a ``SeedSequence`` so that stream ``(s, r)`` is
    independent of how many other streams were created before it.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


@dataclass(frozen=True)
class BoxSupport:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ConfigError("box bounds must be non-empty and of equal length")
        for a, b in zip(self.lo, self.hi):
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise ConfigError(f"invalid box interval [{a}, {b}]")

    @property
    def dims(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)


@dataclass(frozen=True)
class Uniform1D:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ConfigError(f"invalid uniform interval [{self.lo}, {self.hi}]")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, -math.log(self.hi - self.lo), -np.inf)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def ppf(self, u):
        return np.clip(self.lo + np.asarray(u) * (self.hi - self.lo), self.lo, self.hi)

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class TruncGauss1D:
    """N(mu, sigma^2) restricted to ``[lo, hi]`` and renormalized."""

    mu: float
    sigma: float
    lo: float
    hi: float
    _alpha: float = field(init=False, repr=False)
    _beta: float = field(init=False, repr=False)
    _log_z: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma) and math.isfinite(self.mu)):
            raise ConfigError(f"invalid truncated Gaussian scale {self.sigma}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ConfigError(f"invalid truncation interval [{self.lo}, {self.hi}]")
        alpha = (self.lo - self.mu) / self.sigma
        beta = (self.hi - self.mu) / self.sigma
        # Work in whichever tail keeps the CDF difference away from 1 - 1.
        if alpha > 0:
            z = special.ndtr(-alpha) - special.ndtr(-beta)
        else:
            z = special.ndtr(beta) - special.ndtr(alpha)
        if not z > 0:
            raise ConfigError(
                f"truncated Gaussian mass underflows on [{self.lo}, {self.hi}]"
            )
        object.__setattr__(self, "_alpha", alpha)
        object.__setattr__(self, "_beta", beta)
        object.__setattr__(self, "_log_z", math.log(z))

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def normalizer(self) -> float:
        return math.exp(self._log_z)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.mu) / self.sigma
        val = -0.5 * z * z - _LOG_SQRT_2PI - math.log(self.sigma) - self._log_z
        return np.where((x >= self.lo) & (x <= self.hi), val, -np.inf)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        mass = math.exp(self._log_z)
        if self._alpha > 0:
            z = -special.ndtri(special.ndtr(-self._alpha) - u * mass)
        else:
            z = special.ndtri(special.ndtr(self._alpha) + u * mass)
        return np.clip(self.mu + self.sigma * z, self.lo, self.hi)

    def mean(self) -> float:
        phi_a = math.exp(-0.5 * self._alpha**2 - _LOG_SQRT_2PI)
        phi_b = math.exp(-0.5 * self._beta**2 - _LOG_SQRT_2PI)
        return self.mu + self.sigma * (phi_a - phi_b) / self.normalizer


Marginal1D = Uniform1D | TruncGauss1D


class ProductDistribution:
    """Independent coordinates with the given 1-D marginals.

    Parameters
    ----------
    marginals : sequence of Uniform1D or TruncGauss1D
        One marginal per coordinate; the support is the product of their
        intervals.
    """

    def __init__(self, marginals: Sequence[Marginal1D]):
        if not marginals:
            raise ConfigError("a product distribution needs at least one marginal")
        self.marginals: tuple[Marginal1D, ...] = tuple(marginals)
        self.support = BoxSupport(
            tuple(float(m.interval[0]) for m in self.marginals),
            tuple(float(m.interval[1]) for m in self.marginals),
        )

    def __repr__(self):
        return f"ProductDistribution({list(self.marginals)!r})"

    def __eq__(self, other):
        return isinstance(other, ProductDistribution) and self.marginals == other.marginals

    def __hash__(self):
        return hash(self.marginals)

    @property
    def dims(self) -> int:
        return len(self.marginals)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` i.i.d. points, shape ``(n, d)``, by per-coordinate inverse CDF."""
        if n < 1:
            raise ValueError("n must be >= 1")
        u = rng.random((n, self.dims))
        out = np.empty_like(u)
        for j, m in enumerate(self.marginals):
            out[:, j] = m.ppf(u[:, j])
        return out

    def log_density(self, x) -> np.ndarray | float:
        """Log density at ``x`` (shape ``(d,)`` or ``(m, d)``); ``-inf`` off the support."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[-1] != self.dims:
            raise DomainError(f"expected points of dimension {self.dims}, got {x.shape[-1]}")
        total = np.zeros(x.shape[0])
        for j, m in enumerate(self.marginals):
            total = total + m.logpdf(x[:, j])
        return float(total[0]) if single else total

    def expect_product(
        self,
        funcs: Sequence[Callable[[float], float]],
        combine: str = "product",
        tol: float = DEFAULT_TOL,
    ) -> float:
        """Expectation of a separable integrand.

        ``combine="product"`` computes E[prod_i f_i(x_i)] = prod_i E[f_i(x_i)];
        ``combine="sum"`` computes E[sum_i f_i(x_i)] = sum_i E[f_i(x_i)].
        """
        if len(funcs) != self.dims:
            raise ValueError(f"need {self.dims} coordinate functions, got {len(funcs)}")
        parts = []
        for m, f in zip(self.marginals, funcs):
            lo, hi = m.interval
            parts.append(quadrature_1d(lambda t, m=m, f=f: float(m.pdf(t)) * f(t), lo, hi, tol))
        if combine == "product":
            return float(np.prod(parts))
        if combine == "sum":
            return float(np.sum(parts))
        raise ValueError(f"combine must be 'product' or 'sum', not {combine!r}")


@dataclass(frozen=True)
class DistributionPair:
    p: ProductDistribution
    q: ProductDistribution

    def __post_init__(self):
        if self.p.support != self.q.support:
            raise ConfigError("P and Q must share the same box support")

    @property
    def dims(self) -> int:
        return self.p.dims

    @property
    def support(self) -> BoxSupport:
        return self.p.support


# Truncation box of the Gaussian-vs-uniform experiments; d=10 repeats it twice.
GAUSS_BOX_5D = ((0.1, 2.0), (-1.0, 0.0), (2.0, 3.0), (-2.0, -1.5), (-1.0, 1.0))


def gaussian_vs_uniform(box: Sequence[tuple[float, float]]) -> DistributionPair:
    """Standard Gaussian truncated to ``box`` against the uniform law on ``box``."""
    p = ProductDistribution([TruncGauss1D(0.0, 1.0, lo, hi) for lo, hi in box])
    q = ProductDistribution([Uniform1D(lo, hi) for lo, hi in box])
    return DistributionPair(p, q)


PRESETS = {
    "gauss_uniform_2d": GAUSS_BOX_5D[:2],
    "gauss_uniform_5d": GAUSS_BOX_5D,
    "gauss_uniform_10d": GAUSS_BOX_5D * 2,
}


def preset_pair(name: str) -> DistributionPair:
    try:
        return gaussian_vs_uniform(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown pair preset {name!r}; choose from {sorted(PRESETS)}") from None


def marginal_from_dict(spec: dict) -> Marginal1D:
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind in ("truncnorm", "trunc_gauss", "gaussian"):
        allowed = {"mu", "sigma", "lo", "hi"}
        ctor = lambda s: TruncGauss1D(float(s.get("mu", 0.0)), float(s.get("sigma", 1.0)),
                                      float(s["lo"]), float(s["hi"]))
    elif kind == "uniform":
        allowed = {"lo", "hi"}
        ctor = lambda s: Uniform1D(float(s["lo"]), float(s["hi"]))
    else:
        raise ConfigError(f"unknown marginal type {kind!r}")
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"unknown fields for {kind} marginal: {sorted(extra)}")
    try:
        return ctor(spec)
    except KeyError as exc:
        raise ConfigError(f"{kind} marginal missing field {exc.args[0]!r}") from None


def marginal_to_dict(m: Marginal1D) -> dict:
    if isinstance(m, TruncGauss1D):
        return {"type": "truncnorm", "mu": m.mu, "sigma": m.sigma, "lo": m.lo, "hi": m.hi}
    return {"type": "uniform", "lo": m.lo, "hi": m.hi}


def pair_from_dict(spec) -> DistributionPair:
    """Build a pair from ``{"dims", "p": {"marginals": [...]}, "q": {...}}`` or a preset name."""
    if isinstance(spec, str):
        return preset_pair(spec)
    if not isinstance(spec, dict):
        raise ConfigError("pair must be a preset name or an object")
    extra = set(spec) - {"dims", "p", "q", "preset"}
    if extra:
        raise ConfigError(f"unknown pair fields: {sorted(extra)}")
    if "preset" in spec:
        if set(spec) - {"preset", "dims"}:
            raise ConfigError("a preset pair cannot also list marginals")
        pair = preset_pair(spec["preset"])
    else:
        sides = []
        for side in ("p", "q"):
            body = spec.get(side)
            if not isinstance(body, dict) or set(body) != {"marginals"}:
                raise ConfigError(f"pair.{side} must be an object with exactly a 'marginals' list")
            sides.append(ProductDistribution([marginal_from_dict(m) for m in body["marginals"]]))
        pair = DistributionPair(*sides)
    if "dims" in spec and int(spec["dims"]) != pair.dims:
        raise ConfigError(f"pair.dims={spec['dims']} but marginals give d={pair.dims}")
    return pair


def pair_to_dict(pair: DistributionPair) -> dict:
    return {
        "dims": pair.dims,
        "p": {"marginals": [marginal_to_dict(m) for m in pair.p.marginals]},
        "q": {"marginals": [marginal_to_dict(m) for m in pair.q.marginals]},
    }

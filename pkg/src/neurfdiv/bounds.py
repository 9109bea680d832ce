"""Non-asymptotic estimation-error constants and width schedules.

Everything here is a closed-form expression.  The universal constant ``C``
of the subgaussian chaining bound has no known numeric value, so it is a
parameter (default 1) and every tail bound is "up to C".
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from scipy.special import gamma as gamma_fn

from .divergences import DivergenceKind
from .errors import ConfigError, DomainError, MissingTruncation
from .network import ParamBounds, Star, TruncatedStar, expand_bounds
from .quadrature import quadrature_1d


def gamma_prime_sup(kind: DivergenceKind, k: int, bounds: ParamBounds) -> float:
    """Closed-form upper bound on ``sup gamma'(g(x))`` over the network class.

    ``exp(k a2 + a3)`` for KL, ``0.5 (k a2 + a3) + 1`` for chi-squared and
    ``1 / t^2`` for the truncated squared Hellinger class.
    """
    if kind is DivergenceKind.KL:
        return math.exp(k * bounds.a2 + bounds.a3)
    if kind is DivergenceKind.CHISQ:
        return 0.5 * (k * bounds.a2 + bounds.a3) + 1.0
    if bounds.trunc is None:
        raise MissingTruncation("squared Hellinger bounds need a truncation level t")
    return 1.0 / bounds.trunc**2


@dataclass(frozen=True)
class BoundInputs:
    kind: DivergenceKind
    k: int
    bounds: ParamBounds
    n: int
    universal_C: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DivergenceKind.parse(self.kind))
        if self.n < 1 or self.k < 1:
            raise ConfigError(f"need n >= 1 and k >= 1 (got n={self.n}, k={self.k})")
        if not self.universal_C > 0:
            raise ConfigError("the universal constant C must be positive")
        if self.kind is DivergenceKind.HELLINGER and self.bounds.trunc is None:
            raise MissingTruncation("squared Hellinger bounds need a truncation level t")


@dataclass(frozen=True)
class BoundReport:
    inputs: BoundInputs
    gamma_prime_sup: float
    R: float
    V: float
    E: float

    def tail(self, delta: float) -> float:
        """``P(|estimate - NN distance| >= delta + C E) <= 2C exp(-n delta^2 / V)``."""
        C = self.inputs.universal_C
        if self.V == 0:
            return 0.0 if delta > 0 else 2.0 * C
        return 2.0 * C * math.exp(-self.inputs.n * delta * delta / self.V)

    def row(self, delta: Optional[float] = None) -> dict:
        inp = self.inputs
        out = {
            "kind": inp.kind.value, "k": inp.k, "n": inp.n,
            "a1": inp.bounds.a1, "a2": inp.bounds.a2, "a3": inp.bounds.a3,
            "t": inp.bounds.trunc, "C": inp.universal_C,
            "gamma_prime_sup": self.gamma_prime_sup, "R": self.R, "V": self.V, "E": self.E,
        }
        if delta is not None:
            out["delta"] = delta
            out["tail"] = self.tail(delta)
        return out


def estimation_constants(inputs: BoundInputs) -> BoundReport:
    """R, V and E of the estimation-error tail bound.

    ``R = 2 (g' + 1) sqrt(k)``, ``V = 4 C a2^2 k R^2`` and
    ``E = 2 sqrt(2) n^{-1/2} k a2 R``, with ``g'`` from :func:`gamma_prime_sup`.
    """
    gsup = gamma_prime_sup(inputs.kind, inputs.k, inputs.bounds)
    k, a2, n = inputs.k, inputs.bounds.a2, inputs.n
    R = 2.0 * (gsup + 1.0) * math.sqrt(k)
    V = 4.0 * inputs.universal_C * a2 * a2 * k * R * R
    E = 2.0 * math.sqrt(2.0) * k * a2 * R / math.sqrt(n)
    return BoundReport(inputs, gsup, R, V, E)


def covering_bound(k: int, a2: float, R: float, n: int, eps: float) -> float:
    """``(1 + sqrt(k) a2 R / (sqrt(n) eps))^k`` covering-number bound for the output weights."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    return (1.0 + math.sqrt(k) * a2 * R / (math.sqrt(n) * eps)) ** k


def smoothness_order(d: int) -> int:
    return d // 2 + 2


def kappa_d(d: int) -> float:
    """Dimension constant relating Sobolev-type smoothness to the Barron norm.

    ``kappa_d^2 = (d + d^s) * int_{R^d} (1 + |w|^{2(s-1)})^{-1} dw`` with
    ``s = floor(d/2) + 2``; the radial integrand is reduced to a 1-D integral
    over shells.
    """
    if not 1 <= d <= 10:
        raise DomainError(f"kappa_d is supported for 1 <= d <= 10, got {d}")
    s = smoothness_order(d)
    p = 2 * (s - 1)
    surface = 2.0 * math.pi ** (d / 2) / gamma_fn(d / 2)
    # Split at r=1 so the infinite tail is handled separately.
    radial = quadrature_1d(lambda r: r ** (d - 1) / (1.0 + r**p), 0.0, 1.0, 1e-12) + \
        quadrature_1d(lambda r: r ** (d - 1) / (1.0 + r**p), 1.0, math.inf, 1e-12)
    return math.sqrt((d + d**s) * surface * radial)


def barron_bound(b: float, d: int) -> float:
    """Upper bound ``b kappa_d sqrt(d)`` on the Barron coefficient of a smooth function."""
    if b < 0:
        raise DomainError("b must be >= 0")
    return b * kappa_d(d) * math.sqrt(d)


# Schedules -----------------------------------------------------------------------

SCHEDULE_MODES = ("theorem", "oracle_M", "experiment")
THEOREM_ETA = 0.01


@dataclass(frozen=True)
class Schedule:
    k: int
    m: float
    t: Optional[float] = None

    def class_spec(self, kind: DivergenceKind):
        if kind is DivergenceKind.HELLINGER:
            return TruncatedStar(self.m, self.t)
        return Star(self.m)

    def bounds(self, kind: DivergenceKind) -> ParamBounds:
        return expand_bounds(self.class_spec(kind), self.k)


def _largest_k(start: int, ok: Callable[[int], bool]) -> int:
    k = start
    while k > 2 and not ok(k):
        k -= 1
    return k


def schedule(kind: DivergenceKind, n: int, mode: str = "experiment", m: Optional[float] = None) -> Schedule:
    """Network width and class parameters for sample size ``n``.

    ``experiment``: ``k = round(n^{1/5})``.
    ``theorem``: the largest width allowed by the estimation-error
    constraint with unit constants (``k^3 <= n^{1-eta}`` for KL,
    ``sqrt(k) log^2 k`` resp. ``sqrt(k) log^3 k <= n^{(1-eta)/2}`` for chi-squared
    resp. squared Hellinger, starting from ``n^{1/2-eta}``).
    ``oracle_M``: the rate-optimal width when the witness norm bound is known,
    ``k = round(sqrt(n))`` (``n^{1/(2(1+eta))}`` for squared Hellinger).

    ``m`` defaults to ``0.5 log k``; squared Hellinger gets ``t = 1/log k``.
    """
    kind = DivergenceKind.parse(kind)
    if mode not in SCHEDULE_MODES:
        raise ConfigError(f"unknown schedule mode {mode!r}; choose from {SCHEDULE_MODES}")
    if n < 16:
        raise ConfigError(f"schedules need n >= 16, got {n}")
    eta = THEOREM_ETA
    if mode == "experiment":
        k = round(n ** 0.2)
    elif mode == "oracle_M":
        k = round(n ** (1.0 / (2 * (1 + eta)))) if kind is DivergenceKind.HELLINGER else round(math.sqrt(n))
    elif kind is DivergenceKind.KL:
        k = round(n ** (1.0 / 3.0 - eta))
    else:
        power = 2 if kind is DivergenceKind.CHISQ else 3
        limit = n ** ((1.0 - eta) / 2.0)
        k = _largest_k(round(n ** (0.5 - eta)), lambda k: math.sqrt(k) * math.log(k) ** power <= limit)
    min_k = 3 if kind is DivergenceKind.HELLINGER else 2
    if k < min_k:
        raise ConfigError(f"n={n} is too small for a width k >= {min_k} under mode {mode!r}")
    log_k = math.log(k)
    t = 1.0 / log_k if kind is DivergenceKind.HELLINGER else None
    return Schedule(k, 0.5 * log_k if m is None else m, t)


def effective_rate(kind: DivergenceKind, k: float, n: float, mode: str = "theorem") -> float:
    """Shape of the effective-error bound with all hidden constants set to 1.

    ``mode="theorem"`` is the ``m_k = 0.5 log k`` regime; ``mode="oracle_M"``
    the regime where the witness norm bound is known.  A qualitative
    comparison tool only, not a certified bound.
    """
    kind = DivergenceKind.parse(kind)
    if mode not in ("theorem", "oracle_M"):
        raise ConfigError(f"effective_rate mode must be 'theorem' or 'oracle_M', not {mode!r}")
    lk = math.log(k)
    approx = k ** -0.5
    if mode == "theorem":
        if kind is DivergenceKind.KL:
            est = k**1.5
        elif kind is DivergenceKind.CHISQ:
            est = math.sqrt(k) * lk**2
        else:
            approx *= lk
            est = math.sqrt(k) * lk**3
    else:
        est = math.sqrt(k)
        if kind is DivergenceKind.HELLINGER:
            approx *= lk
            est *= lk**2
    return approx + est / math.sqrt(n)

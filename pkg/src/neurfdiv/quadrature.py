"""One-dimensional adaptive quadrature and tensor-grid Clenshaw-Curtis rules."""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import NonConvergence

DEFAULT_TOL = 1e-10


def quadrature_1d(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = DEFAULT_TOL,
    max_subintervals: int = 10_000,
) -> float:
    """Integrate ``f`` over ``[lo, hi]`` to absolute accuracy ``tol``.

    Adaptive Gauss-Kronrod (QUADPACK via :func:`scipy.integrate.quad`).
    Infinite endpoints are allowed.

    Raises
    ------
    NonConvergence
        If the subdivision budget runs out or the reported error estimate
        exceeds ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    out = integrate.quad(
        f, lo, hi, epsabs=tol, epsrel=0.0, limit=max_subintervals, full_output=1
    )
    value, abserr, info = out[0], out[1], out[2]
    if len(out) > 3:
        raise NonConvergence(
            f"quadrature on [{lo}, {hi}] failed: {out[3].splitlines()[0]} "
            f"(estimate {value!r}, error {abserr:.3g}, {info['last']} subintervals)"
        )
    if not np.isfinite(value) or abserr > tol:
        raise NonConvergence(
            f"quadrature on [{lo}, {hi}] reached error {abserr:.3g} > tol {tol:.3g}"
        )
    return float(value)


@lru_cache(maxsize=16)
def _cc_reference(n: int) -> tuple[np.ndarray, np.ndarray]:
    # Clenshaw-Curtis nodes/weights on [-1, 1] with n+1 points (n even).
    theta = np.pi * np.arange(n + 1) / n
    x = np.cos(theta)
    w = np.zeros(n + 1)
    inner = theta[1:-1]
    v = np.ones(n - 1)
    w[0] = w[n] = 1.0 / (n * n - 1)
    for j in range(1, n // 2):
        v -= 2.0 * np.cos(2 * j * inner) / (4 * j * j - 1)
    v -= np.cos(n * inner) / (n * n - 1)
    w[1:-1] = 2.0 * v / n
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def clenshaw_curtis(lo: float, hi: float, points: int = 257) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``points``-point Clenshaw-Curtis rule on ``[lo, hi]``."""
    n = points - 1
    if n < 2 or n % 2:
        raise ValueError("points must be odd and >= 3")
    x, w = _cc_reference(n)
    half = 0.5 * (hi - lo)
    return 0.5 * (lo + hi) + half * x[::-1], half * w[::-1]


def tensor_grid_integral(
    f: Callable[[np.ndarray], np.ndarray],
    lo: Sequence[float],
    hi: Sequence[float],
    points: int = 257,
    chunk: int = 1 << 16,
) -> float:
    """Integrate a vectorized ``f`` (shape ``(m, d) -> (m,)``) over a box.

    Uses the product Clenshaw-Curtis rule with ``points`` nodes per axis;
    evaluation is chunked so that d=3 grids fit in memory.
    """
    rules = [clenshaw_curtis(a, b, points) for a, b in zip(lo, hi)]
    d = len(rules)
    # Leading axes are enumerated in Python, the last axis is vectorized.
    last_x, last_w = rules[-1]
    total = 0.0
    block = []
    block_w = []
    size = 0
    for combo in itertools.product(*(range(points) for _ in range(d - 1))):
        pt = np.empty((points, d))
        wt = last_w.copy()
        for axis, idx in enumerate(combo):
            pt[:, axis] = rules[axis][0][idx]
            wt = wt * rules[axis][1][idx]
        pt[:, -1] = last_x
        block.append(pt)
        block_w.append(wt)
        size += points
        if size >= chunk:
            total += float(np.dot(f(np.concatenate(block)), np.concatenate(block_w)))
            block, block_w, size = [], [], 0
    if block:
        total += float(np.dot(f(np.concatenate(block)), np.concatenate(block_w)))
    return total


def iterated_quadrature(
    f: Callable[[np.ndarray], np.ndarray],
    lo: Sequence[float],
    hi: Sequence[float],
    tol: float = 1e-8,
) -> float:
    """Nested adaptive quadrature of a vectorized ``f`` over a 1-D or 2-D box.

    Slower than :func:`tensor_grid_integral` but robust to kinks (such as a
    clipped network output), because adaptive bisection localizes them.
    The inner integrals are computed ``10 * width`` times more accurately
    than the outer one so that their error does not swamp it.
    """
    d = len(lo)
    if d == 1:
        return quadrature_1d(lambda t: float(f(np.array([[t]]))[0]), lo[0], hi[0], tol)
    if d != 2:
        raise ValueError("iterated_quadrature supports d <= 2")
    inner_tol = 0.5 * tol / (10.0 * (hi[0] - lo[0]))

    def inner(t):
        return quadrature_1d(lambda s: float(f(np.array([[t, s]]))[0]), lo[1], hi[1], inner_tol)

    return quadrature_1d(inner, lo[0], hi[0], 0.5 * tol)

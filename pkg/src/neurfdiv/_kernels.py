"""Compiled inner loops for projected minibatch Adam.

Parameters are handled as one flat vector ``[W (row-major), b, beta, b0]``.
These kernels mirror :func:`neurfdiv.training.objective_grad` and
:func:`neurfdiv.training.adam_step` step for step; the numpy versions are the
reference the tests compare against.
"""

import math

import numpy as np
from numba import njit

KIND_CODES = {"kl": 0, "chisq": 1, "hellinger": 2}

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Kernel status codes.
OK = 0
HELLINGER_POLE = 1


@njit(cache=True)
def _hidden(theta, x, k, d, s):
    # Fills s with sigmoid activations; returns the raw output.
    out = theta[k * d + 2 * k]
    for i in range(k):
        z = theta[k * d + i]
        for j in range(d):
            z += theta[i * d + j] * x[j]
        s[i] = 1.0 / (1.0 + math.exp(-z))
        out += theta[k * d + k + i] * s[i]
    return out


@njit(cache=True)
def _gamma(kind, v):
    if kind == 0:
        return math.expm1(v)
    if kind == 1:
        return v + 0.25 * v * v
    return v / (1.0 - v)


@njit(cache=True)
def _gamma_prime(kind, v):
    if kind == 0:
        return math.exp(v)
    if kind == 1:
        return 1.0 + 0.5 * v
    return 1.0 / ((1.0 - v) * (1.0 - v))


@njit(cache=True)
def _accumulate(theta, grad, x, c, s, k, d):
    # grad += c * d g(x) / d theta, with s holding the activations at x.
    for i in range(k):
        ds = c * theta[k * d + k + i] * s[i] * (1.0 - s[i])
        for j in range(d):
            grad[i * d + j] += ds * x[j]
        grad[k * d + i] += ds
        grad[k * d + k + i] += c * s[i]
    grad[k * d + 2 * k] += c


@njit(cache=True)
def _audit_output(audit, val, cap):
    if val > cap:
        audit[1] += 1.0
    if val > audit[2]:
        audit[2] = val


@njit(cache=True)
def full_objective(theta, X, Y, kind, k, d, has_trunc, trunc):
    """Empirical dual objective on all of X and Y; NaN signals the Hellinger pole."""
    s = np.empty(k)
    cap = 1.0 - trunc
    acc_x = 0.0
    for r in range(X.shape[0]):
        v = _hidden(theta, X[r], k, d, s)
        if has_trunc and v > cap:
            v = cap
        acc_x += v
    acc_y = 0.0
    for r in range(Y.shape[0]):
        v = _hidden(theta, Y[r], k, d, s)
        if has_trunc and v > cap:
            v = cap
        if kind == 2 and v >= 1.0:
            return np.nan
        acc_y += _gamma(kind, v)
    return acc_x / X.shape[0] - acc_y / Y.shape[0]


@njit(cache=True)
def run_epoch(theta, m, v, step, X, Y, perm_x, perm_y, batch, lr, kind, k, d,
              lo, hi, has_trunc, trunc, audit):
    """One epoch of projected Adam ascent, updating ``theta``, ``m``, ``v`` in place.

    ``audit`` accumulates ``[box violations, truncation violations,
    max truncated output]``; every post-step parameter vector and every
    truncated forward value is checked.  Returns ``(step, status)``.
    """
    n = X.shape[0]
    p = theta.shape[0]
    s = np.empty(k)
    grad = np.empty(p)
    cap = 1.0 - trunc
    n_steps = (n + batch - 1) // batch
    for it in range(n_steps):
        start = it * batch
        stop = min(start + batch, n)
        size = stop - start
        for q in range(p):
            grad[q] = 0.0
        cx = 1.0 / size
        for r in range(start, stop):
            xr = X[perm_x[r]]
            out = _hidden(theta, xr, k, d, s)
            if has_trunc:
                val = min(out, cap)
                _audit_output(audit, val, cap)
                if out > cap:
                    continue
            _accumulate(theta, grad, xr, cx, s, k, d)
        for r in range(start, stop):
            yr = Y[perm_y[r]]
            out = _hidden(theta, yr, k, d, s)
            if has_trunc:
                val = min(out, cap)
                _audit_output(audit, val, cap)
                if out > cap:
                    continue
            if kind == 2 and out >= 1.0:
                return step, HELLINGER_POLE
            _accumulate(theta, grad, yr, -_gamma_prime(kind, out) / size, s, k, d)
        step += 1
        bc1 = 1.0 - ADAM_BETA1 ** step
        bc2 = 1.0 - ADAM_BETA2 ** step
        for q in range(p):
            g = grad[q]
            m[q] = ADAM_BETA1 * m[q] + (1.0 - ADAM_BETA1) * g
            v[q] = ADAM_BETA2 * v[q] + (1.0 - ADAM_BETA2) * g * g
            mhat = m[q] / bc1
            vhat = v[q] / bc2
            t = theta[q] + lr * mhat / (math.sqrt(vhat) + ADAM_EPS)
            if t < lo[q]:
                t = lo[q]
            elif t > hi[q]:
                t = hi[q]
            theta[q] = t
        for q in range(p):
            if not (lo[q] <= theta[q] <= hi[q]):
                audit[0] += 1.0
    return step, OK

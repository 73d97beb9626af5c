"""Compensated and double-double accumulation for cancellation-prone sums.

The rate experiments subtract quantities that agree to d^-n; once
n log d > 25 the difference sits below binary64 epsilon relative to the
summands, so dot products switch to error-free transforms (two_sum /
two_prod with Veltkamp splitting, no FMA required).
"""
from __future__ import annotations

import math

import numpy as np

# accumulations switch to double-double above this (n * log d)
DD_SWITCH_NLOGD = 25.0

_SPLIT = 134217729.0  # 2**27 + 1, Veltkamp splitting constant


def two_sum(a, b):
    """Error-free sum: a + b = s + e exactly (s, e binary64)."""
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def two_prod(a, b):
    """Error-free product: a * b = p + e exactly."""
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def neumaier_sum(values) -> float:
    """Compensated fixed-order sum (Kahan-Babuska-Neumaier)."""
    s = 0.0
    c = 0.0
    for v in values:
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def chunked_sum(values: np.ndarray, chunk: int = 8192) -> float:
    """Deterministic compensated sum of a float array.

    Pairwise-sums fixed chunks, then Neumaier-combines the chunk totals, so
    the result does not depend on thread count or BLAS details.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        return 0.0
    parts = [float(np.add.reduce(values[i:i + chunk]))
             for i in range(0, values.size, chunk)]
    return neumaier_sum(parts)


def dd_dot(w: np.ndarray, x: np.ndarray) -> float:
    """Double-double dot product sum(w * x), exact to ~2^-106 relative."""
    w = np.asarray(w, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.float64).ravel()
    hi = 0.0
    lo = 0.0
    for a, b in zip(w, x):
        p, pe = two_prod(float(a), float(b))
        hi, e = two_sum(hi, p)
        lo += e + pe
    return hi + lo


def weighted_sum(w: np.ndarray, x: np.ndarray, use_dd: bool = False) -> float:
    """sum(w * x) with the precision mode used by all pairings."""
    if use_dd:
        return dd_dot(w, x)
    return chunked_sum(np.asarray(w, dtype=np.float64) * np.asarray(x, dtype=np.float64))


def needs_dd(n: int, degree: int) -> bool:
    return n * math.log(degree) > DD_SWITCH_NLOGD

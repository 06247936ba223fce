"""Logarithmic rounding of positive reals onto a (1+beta) grid.

A quantized value is stored and transmitted as the signed integer
exponent k representing (1+beta)**k, never as a float: taking minima
becomes integer comparison, repeated rounding is exactly idempotent, and
message-size accounting is well defined.  The represented value is the
largest power of (1+beta) not exceeding the input, i.e. rounding always
goes downward on the logarithmic scale.
"""
from __future__ import annotations

import math

import numpy as np

# A quantized value is just its integer exponent.
QuantExponent = int


def quantize(x: float, beta: float) -> QuantExponent:
    """Exponent k with (1+beta)**k <= x < (1+beta)**(k+1).

    The float estimate floor(ln x / ln(1+beta)) can land one off at exact
    powers of (1+beta); the correction loops restore the defining
    bracketing, which is what every property of the rounding relies on.
    """
    _check_positive(x, beta)
    base = 1.0 + beta
    k = math.floor(math.log(x) / math.log1p(beta))
    while base ** (k + 1) <= x:
        k += 1
    while base**k > x:
        k -= 1
    return k


def quantize_array(xs: np.ndarray, beta: float) -> np.ndarray:
    """Vectorized quantize; elementwise identical to the scalar version."""
    xs = np.asarray(xs, dtype=np.float64)
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if not np.all(xs > 0) or not np.all(np.isfinite(xs)):
        raise ValueError("all values must be positive and finite")
    base = 1.0 + beta
    ks = np.floor(np.log(xs) / np.log1p(beta)).astype(np.int64)
    # Same correction as the scalar path; converges in one step apart
    # from pathological float noise, hence the loops.
    while True:
        low = np.power(base, (ks + 1).astype(np.float64)) <= xs
        if not low.any():
            break
        ks[low] += 1
    while True:
        high = np.power(base, ks.astype(np.float64)) > xs
        if not high.any():
            break
        ks[high] -= 1
    return ks


def dequantize(k: QuantExponent, beta: float) -> float:
    """The represented value (1+beta)**k."""
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    return (1.0 + beta) ** k


def dequantize_array(ks: np.ndarray, beta: float) -> np.ndarray:
    """Vectorized dequantize, bit-identical to the scalar version."""
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    return np.power(1.0 + beta, np.asarray(ks, dtype=np.float64))


def count_levels(c: float, d: float, beta: float) -> int:
    """Number of distinct exponents taken by values in [c, d].

    This is the exact count floor(log_{1+beta} d) - floor(log_{1+beta} c) + 1,
    not the looser ceil/floor bound, which can undercount by one when an
    interval endpoint is an exact power.
    """
    if not 0 < c <= d:
        raise ValueError(f"need 0 < c <= d, got c={c}, d={d}")
    return quantize(d, beta) - quantize(c, beta) + 1


def admissible_interval(eta: float, ell: int, n: int, a: float, b: float) -> tuple[float, float]:
    """Interval [z, ln(1/z)] that holds all generated samples w.h.p.

    z = eta / (4 (b - a + 2) ell n).  The accounting argument behind the
    interval requires z < 1/16, which is asserted rather than handled.
    """
    if eta <= 0 or ell < 1 or n < 1:
        raise ValueError("eta, ell, n must be positive")
    if b < a:
        raise ValueError(f"need a <= b, got a={a}, b={b}")
    z = eta / (4.0 * (b - a + 2.0) * ell * n)
    if z >= 1.0 / 16.0:
        raise ValueError(f"z={z} >= 1/16; interval derivation does not apply")
    return z, math.log(1.0 / z)


def _check_positive(x: float, beta: float) -> None:
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if not (x > 0 and math.isfinite(x)):
        raise ValueError(f"x must be positive and finite, got {x}")

"""Truncated normal distribution function, accurate deep in the tails."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from .errors import InvalidIntervalError

# Largest |Phi^{-1}(u)| reachable for u representable near 0 in doubles.
QUANTILE_CLAMP = 8.29


def _right_tail_pair(z, a, b):
    # 0 <= a <= z <= b: everything from survival functions Q(t) = Phi(-t)
    lqa = log_ndtr(-a)
    lqz = log_ndtr(-z)
    lqb = log_ndtr(-b) if math.isfinite(b) else -math.inf
    denom = -math.expm1(lqb - lqa)
    lower = -math.expm1(lqz - lqa) / denom
    upper = math.exp(lqz - lqa) * (-math.expm1(lqb - lqz)) / denom
    return lower, upper


def _cdf_pair(z, a, b):
    """``(F, 1 - F)`` for the standard normal truncated to ``[a, b]`` at ``z``."""
    if a >= 0:
        return _right_tail_pair(z, a, b)
    if b <= 0:
        upper, lower = _right_tail_pair(-z, -b, -a)
        return lower, upper
    pa, pb = ndtr(a), ndtr(b)
    denom = pb - pa
    if z <= 0:
        lower = min(max((ndtr(z) - pa) / denom, 0.0), 1.0)
        return lower, 1.0 - lower
    upper = min(max((ndtr(-z) - ndtr(-b)) / denom, 0.0), 1.0)
    return 1.0 - upper, upper


def _standardize(x, mu, sigma, lo, hi):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not lo < hi:
        raise InvalidIntervalError(f"empty truncation interval [{lo}, {hi}]")
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    z = min(max((x - mu) / sigma, a), b)
    return z, a, b


def truncated_normal_cdf(x: float, mu: float, sigma: float, lo: float, hi: float) -> float:
    """CDF at ``x`` of ``N(mu, sigma^2)`` truncated to ``[lo, hi]`` (infinite ends allowed)."""
    return float(_cdf_pair(*_standardize(x, mu, sigma, lo, hi))[0]) + 0.0


def truncated_normal_sf(x: float, mu: float, sigma: float, lo: float, hi: float) -> float:
    return float(_cdf_pair(*_standardize(x, mu, sigma, lo, hi))[1]) + 0.0


def normal_score(x: float, mu: float, sigma: float, lo: float, hi: float) -> float:
    """``Phi^{-1}(F(x))`` for the truncated law, clamped to +-8.29.

    Uses whichever of ``F`` and ``1 - F`` is smaller so that both tails keep
    full relative precision.
    """
    lower, upper = _cdf_pair(*_standardize(x, mu, sigma, lo, hi))
    if lower <= upper:
        s = ndtri(lower) if lower > 0 else -np.inf
    else:
        s = -ndtri(upper) if upper > 0 else np.inf
    return float(min(max(s, -QUANTILE_CLAMP), QUANTILE_CLAMP))

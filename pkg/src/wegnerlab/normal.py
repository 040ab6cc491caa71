"""Standard normal distribution function and interval probabilities.

Built on the C library ``erf``/``erfc`` (absolute error near 1e-16).  The
interval helpers pick the complementary form on each tail so that
probabilities close to 1 and close to 0 both keep full relative accuracy.
"""
import math

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / SQRT2)


def norm_sf(x: float) -> float:
    return 0.5 * math.erfc(x / SQRT2)


def norm_pdf(x: float) -> float:
    return INV_SQRT_2PI * math.exp(-0.5 * x * x)


def interval_probability(lo: float, hi: float, variance: float = 1.0, mean: float = 0.0) -> float:
    """``P(lo <= X <= hi)`` for ``X ~ N(mean, variance)``."""
    if hi < lo:
        return 0.0
    if variance <= 0:
        return 1.0 if lo <= mean <= hi else 0.0
    s = math.sqrt(variance)
    a = (lo - mean) / s
    b = (hi - mean) / s
    if a >= 0:
        return norm_sf(a) - norm_sf(b)
    if b <= 0:
        return norm_cdf(b) - norm_cdf(a)
    # interval straddles the mean
    return 1.0 - norm_cdf(a) - norm_sf(b)


def centered_probability(half_width: float, variance: float) -> float:
    """``P(|X| <= half_width)`` for ``X ~ N(0, variance)``, via ``erf`` to avoid cancellation."""
    if variance <= 0:
        return 1.0
    return math.erf(half_width / math.sqrt(2.0 * variance))

"""Summary statistics with Student-t confidence intervals, boxplot and histogram data."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import TooFewSamplesError

# two-sided 95% critical values t(0.975, df), df = 1..30
T975 = (
    12.706204736432, 4.302652729696, 3.182446305284, 2.776445105198, 2.570581835636,
    2.446911851145, 2.364624251593, 2.306004135204, 2.262157162854, 2.228138851965,
    2.200985160083, 2.178812829663, 2.160368656461, 2.144786687917, 2.131449545559,
    2.119905299221, 2.109815577833, 2.100922040241, 2.093024054408, 2.085963447266,
    2.079613844728, 2.073873067904, 2.068657610419, 2.063898561628, 2.059538552753,
    2.055529438643, 2.051830516480, 2.048407141795, 2.045229642133, 2.042272456301,
)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 1000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    x = df / (df + t * t)
    tail = 0.5 * betainc(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def t_quantile(p: float, df: int) -> float:
    """Quantile of Student's t; table lookup for the 0.975 point at df <= 30, bisection otherwise."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    if df < 1:
        raise ValueError("df must be at least 1")
    if p == 0.975 and df <= len(T975) and df == int(df):
        return T975[int(df) - 1]
    if p < 0.5:
        return -t_quantile(1.0 - p, df)
    if p == 0.5:
        return 0.0
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    sd: float
    median: float
    ci_low: float
    ci_high: float

    def to_json(self) -> dict:
        return asdict(self)


def summarize(values, confidence: float = 0.95) -> SummaryStats:
    x = np.asarray(values, dtype=np.float64).ravel()
    n = len(x)
    if n < 2:
        raise TooFewSamplesError(f"need at least 2 values, got {n}")
    mean = math.fsum(x) / n
    sd = math.sqrt(math.fsum((x - mean) ** 2) / (n - 1))
    half = t_quantile(0.5 + confidence / 2.0, n - 1) * sd / math.sqrt(n)
    return SummaryStats(n, mean, sd, float(np.median(x)), mean - half, mean + half)


def boxplot_data(values) -> dict:
    """Quartiles, 1.5 IQR whiskers clipped to the data, and outliers in input order."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if len(x) == 0:
        raise TooFewSamplesError("boxplot needs at least one value")
    q1, med, q3 = (float(v) for v in np.percentile(x, [25, 50, 75]))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    return {
        "n": int(len(x)),
        "min": float(x.min()),
        "q1": q1,
        "median": med,
        "q3": q3,
        "max": float(x.max()),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(v) for v in x if v < lo_fence or v > hi_fence],
    }


def histogram_data(values, bins: int = 10) -> dict:
    x = np.asarray(values, dtype=np.float64).ravel()
    if len(x) == 0:
        raise TooFewSamplesError("histogram needs at least one value")
    counts, edges = np.histogram(x, bins=bins)
    return {"n": int(len(x)), "edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}

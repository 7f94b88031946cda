"""Descriptive statistics and Pearson correlation with a two-sided t test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import t_sf_two_sided


@dataclass(frozen=True)
class Descriptives:
    n: int
    mean: float
    sd: float | None
    skewness: float | None
    excess_kurtosis: float | None


def descriptives(values: Sequence[float] | np.ndarray) -> Descriptives:
    """Mean, sample SD, adjusted Fisher-Pearson skewness (G1), sample excess kurtosis (G2).

    Statistics needing more observations than available, or a non-zero
    spread, come back as ``None``.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("descriptives of an empty sample")
    mean = float(x.mean())
    if n < 2:
        return Descriptives(n, mean, None, None, None)
    d = x - mean
    m2 = float(np.mean(d**2))
    sd = math.sqrt(m2 * n / (n - 1))
    skew = kurt = None
    if m2 > 0:
        if n >= 3:
            g1 = float(np.mean(d**3)) / m2**1.5
            skew = g1 * math.sqrt(n * (n - 1)) / (n - 2)
        if n >= 4:
            g2 = float(np.mean(d**4)) / m2**2 - 3.0
            kurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
    return Descriptives(n, mean, sd, skew, kurt)


@dataclass(frozen=True)
class Correlation:
    r: float
    p: float
    n: int


def pearson(x: Sequence[float] | np.ndarray, y: Sequence[float] | np.ndarray) -> Correlation | None:
    """Product-moment r with a two-sided p-value; ``None`` if either input is constant."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError(f"pearson needs two equal-length vectors, got {xa.shape} and {ya.shape}")
    n = xa.size
    if n < 3:
        raise ValueError(f"pearson needs n >= 3, got {n}")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        return Correlation(r, 0.0, n)
    t = r * math.sqrt(df / (1.0 - r * r))
    return Correlation(r, t_sf_two_sided(t, df), n)


def stars(p: float | None) -> str:
    if p is None:
        return ""
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""

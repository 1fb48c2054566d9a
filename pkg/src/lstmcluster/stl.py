"""Seasonal-trend decomposition by loess with a periodic seasonal component.

This is the inner loop of Cleveland et al.'s STL with the cycle-subseries
smoother replaced by per-position means, so the seasonal component is exactly
periodic.  Both the feature extractor and the preprocessing layer use it.
"""

from dataclasses import dataclass
import math

import numpy as np


@dataclass(frozen=True)
class StlDecomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    period: int

    def seasonal_at(self, index):
        """Seasonal value at any integer position, including past the end."""
        index = np.asarray(index)
        pattern = self.seasonal[: self.period]
        return pattern[np.mod(index, self.period)]


def nextodd(x):
    x = int(math.ceil(x))
    return x if x % 2 == 1 else x + 1


def trend_span(period, n):
    # R's stl default with s.window = "periodic" (s.window = 10 n + 1)
    swindow = 10 * n + 1
    return max(3, nextodd(1.5 * period / (1.0 - 1.5 / swindow)))


def loess(y, span):
    """Local-linear loess with tricube weights, evaluated at every index.

    Follows the conventions of the STL Fortran ``est`` routine: the window holds
    the ``span`` nearest points, the bandwidth is the distance to the farthest
    of them (widened when ``span`` exceeds the series length).
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if n == 1:
        return y.copy()
    q = min(span, n)
    half = (q - 1) // 2
    idx = np.arange(n)
    left = np.clip(idx - half, 0, n - q)
    offsets = np.arange(q)
    cols = left[:, None] + offsets[None, :]          # (n, q) window indices
    dist = np.abs(cols - idx[:, None]).astype(float)
    h = np.maximum(idx - left, left + q - 1 - idx).astype(float)
    if span > n:
        h += (span - n) // 2
    h = np.maximum(h, 1e-12)
    r = dist / h[:, None]
    w = np.where(r > 0.999, 0.0, (1.0 - r ** 3) ** 3)
    w = np.where(r <= 0.001, 1.0, w)
    w /= w.sum(axis=1, keepdims=True)
    # degree-1 correction
    a = (w * cols).sum(axis=1)
    b = (w * (cols - a[:, None]) ** 2).sum(axis=1)
    lin = np.sqrt(b) > 0.001 * (n - 1)
    adj = np.ones_like(w)
    safe_b = np.where(lin, b, 1.0)
    adj_lin = (cols - a[:, None]) * (idx - a)[:, None] / safe_b[:, None] + 1.0
    adj = np.where(lin[:, None], adj_lin, adj)
    w = w * adj
    return (w * y[cols]).sum(axis=1)


def periodic_means(x, period):
    """Centered per-position means of ``x``, tiled to its length."""
    n = x.size
    pos = np.arange(n) % period
    sums = np.bincount(pos, weights=x, minlength=period)
    counts = np.bincount(pos, minlength=period)
    pattern = sums / counts
    pattern = pattern - pattern.mean()
    return pattern[pos]


def stl_decompose(x, period, inner=None, tol=1e-12, max_inner=200):
    """Additive decomposition with deterministic (periodic) seasonality.

    ``inner`` fixes the number of inner-loop passes; by default the passes are
    repeated until trend and seasonal stop changing (``tol``), which is what
    makes noiseless components recoverable to machine precision.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if period < 2 or n < 2 * period:
        raise ValueError(
            f"STL needs at least two full periods (got {n} points, period {period})")
    span = trend_span(period, n)
    trend = np.zeros(n)
    seasonal = np.zeros(n)
    passes = inner if inner is not None else max_inner
    for _ in range(passes):
        new_seasonal = periodic_means(x - trend, period)
        new_trend = loess(x - new_seasonal, span)
        delta = max(np.max(np.abs(new_trend - trend)),
                    np.max(np.abs(new_seasonal - seasonal)))
        trend, seasonal = new_trend, new_seasonal
        if inner is None and delta <= tol * max(1.0, np.max(np.abs(x))):
            break
    remainder = x - trend - seasonal
    return StlDecomposition(trend, seasonal, remainder, period)


def decompose(x, period):
    """STL when at least two full periods exist, otherwise trend-only.

    The trend-only branch fits the same loess trend without seasonal removal
    and reports a zero seasonal component.
    """
    x = np.asarray(x, dtype=float)
    if period >= 2 and x.size >= 2 * period:
        return stl_decompose(x, period)
    if period >= 2:
        span = trend_span(period, x.size)
    else:
        span = max(7, nextodd(x.size / 10))
    trend = loess(x, span)
    return StlDecomposition(trend, np.zeros(x.size), x - trend, max(period, 1))

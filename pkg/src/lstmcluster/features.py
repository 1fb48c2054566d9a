"""Interpretable per-series features used as the clustering input.

The 18 features follow the ``tsmeasures`` set of the anomalous package. Each
one is defined so that degenerate input (constant or short series) gives a
finite fallback value.
"""

from dataclasses import dataclass, astuple, fields

import numpy as np
from scipy.signal import welch

from .stl import decompose

FEATURE_NAMES = (
    "mean", "var", "acf1", "trend", "linearity", "curvature", "season",
    "peak", "trough", "entropy", "lumpiness", "spikiness", "lshift",
    "vchange", "fspots", "cpoints", "klscore", "change_idx",
)

# relative threshold below which a variance counts as exactly zero
_TINY = 1e-12


@dataclass(frozen=True)
class FeatureVector:
    mean: float
    var: float
    acf1: float
    trend: float
    linearity: float
    curvature: float
    season: float
    peak: float
    trough: float
    entropy: float
    lumpiness: float
    spikiness: float
    lshift: float
    vchange: float
    fspots: float
    cpoints: float
    klscore: float
    change_idx: float

    def as_array(self):
        return np.array(astuple(self), dtype=float)


assert tuple(f.name for f in fields(FeatureVector)) == FEATURE_NAMES


def _var(x):
    x = np.asarray(x, dtype=float)
    return float(np.var(x, ddof=1)) if x.size > 1 else 0.0


def _is_flat(x):
    x = np.asarray(x, dtype=float)
    return np.ptp(x) <= _TINY * max(1.0, np.max(np.abs(x)))


def acf1(x):
    """Lag-1 autocorrelation, mean-centered with a length-n denominator."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("acf1 needs at least 2 observations")
    d = x - x.mean()
    denom = np.dot(d, d)
    if denom <= _TINY * max(1.0, x.size * np.max(np.abs(x)) ** 2):
        return 0.0
    return float(np.clip(np.dot(d[:-1], d[1:]) / denom, -1.0, 1.0))


def _strength(part, remainder, scale):
    denom = np.var(part + remainder)
    if denom <= _TINY * scale:
        return 0.0
    return float(max(0.0, 1.0 - np.var(remainder) / denom))


def _orthopoly_coefs(y):
    """Coefficients of ``y`` on orthonormal degree-1 and degree-2 polynomials."""
    n = y.size
    if n < 3:
        return 0.0, 0.0
    t = np.arange(n, dtype=float)
    basis = np.column_stack([np.ones(n), t - t.mean(), (t - t.mean()) ** 2])
    q, r = np.linalg.qr(basis)
    q = q * np.sign(np.diag(r))          # positive leading coefficient per column
    return float(q[:, 1] @ y), float(q[:, 2] @ y)


def _loo_variances(r):
    n = r.size
    s, ss = r.sum(), np.dot(r, r)
    m = (s - r) / (n - 1)
    return (ss - r ** 2 - (n - 1) * m ** 2) / (n - 2)


def stl_strengths(values, frequency, decomp=None):
    """Trend/season strength, linearity, curvature, spikiness, peak, trough.

    ``decomp`` may be passed in to reuse an existing decomposition. Peak and
    trough are 0-based positions within the first seasonal period.
    """
    x = np.asarray(values, dtype=float)
    if decomp is None:
        decomp = decompose(x, frequency)
    scale = max(np.var(x), np.max(np.abs(x)) ** 2 * 1e-15, 1e-300)
    if _is_flat(x):
        return dict(trend=0.0, season=0.0, linearity=0.0, curvature=0.0,
                    spikiness=0.0, peak=0.0, trough=0.0)
    seasonal_ok = frequency >= 2 and x.size >= 2 * frequency
    out = dict(trend=_strength(decomp.trend, decomp.remainder, scale))
    lin, curv = _orthopoly_coefs(decomp.trend)
    out["linearity"], out["curvature"] = lin, curv
    rem = decomp.remainder
    out["spikiness"] = _var(_loo_variances(rem)) if rem.size > 3 else 0.0
    if seasonal_ok:
        out["season"] = _strength(decomp.seasonal, rem, scale)
        pattern = decomp.seasonal[:frequency]
        if np.ptp(pattern) <= _TINY * max(1.0, np.max(np.abs(x))):
            out["peak"] = out["trough"] = 0.0
        else:
            out["peak"] = float(np.argmax(pattern))
            out["trough"] = float(np.argmin(pattern))
    else:
        out.update(season=0.0, peak=0.0, trough=0.0)
    return out


def spectral_entropy(x):
    """Normalized Shannon entropy of the Welch-averaged periodogram.

    Segments are a quarter of the series (boxcar window, half overlap) and the
    zero frequency is excluded, so white noise is close to 1 and a sinusoid
    on the segment frequency grid is close to 0.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 4:
        raise ValueError("spectral_entropy needs at least 4 observations")
    if _is_flat(x):
        return 1.0
    seg = min(x.size, max(8, x.size // 4))
    _, psd = welch(x, window="boxcar", nperseg=seg, detrend="constant")
    psd = psd[1:]
    total = psd.sum()
    if psd.size < 2 or total <= 0:
        return 1.0
    p = psd / total
    p = p[p > 0]
    return float(np.clip(-(p * np.log(p)).sum() / np.log(psd.size), 0.0, 1.0))


def _rolling(x, width, fn):
    win = np.lib.stride_tricks.sliding_window_view(x, width)
    return fn(win, axis=1)


def rolling_window_features(x, width):
    """Lumpiness, level shift and variance change for window ``width``.

    Lumpiness is the variance of variances over non-overlapping tiles; the
    shift measures compare each rolling window with the one starting
    ``width`` points later.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2 * width or width < 2:
        return 0.0, 0.0, 0.0
    ntiles = x.size // width
    tiles = x[: ntiles * width].reshape(ntiles, width)
    lumpiness = _var(np.var(tiles, axis=1, ddof=1))
    means = _rolling(x, width, np.mean)
    variances = _rolling(x, width, lambda w, axis: np.var(w, axis=axis, ddof=1))
    lshift = float(np.max(np.abs(means[width:] - means[:-width])))
    vchange = float(np.max(np.abs(variances[width:] - variances[:-width])))
    return lumpiness, lshift, vchange


def flat_spots(x):
    """Longest run inside one of 10 equal-width bins over the series range."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("flat_spots needs at least 1 observation")
    lo, hi = x.min(), x.max()
    if hi - lo <= _TINY * max(1.0, abs(hi)):
        return x.size
    bins = np.minimum(np.floor((x - lo) / (hi - lo) * 10).astype(int), 9)
    change = np.flatnonzero(np.diff(bins) != 0)
    bounds = np.concatenate([[-1], change, [x.size - 1]])
    return int(np.max(np.diff(bounds)))


def crossing_points(x):
    """Number of times consecutive observations straddle the median."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("crossing_points needs at least 2 observations")
    med = np.median(x)
    a, b = x[:-1], x[1:]
    cross = ((a <= med) & (b > med)) | ((a >= med) & (b < med))
    return int(cross.sum())


def kl_features(x, width):
    """Largest Gaussian KL divergence between adjacent windows, and where.

    The windows are ``x[t-width:t]`` and ``x[t:t+width]``; ``change_idx`` is
    the boundary ``t``. Window variances are floored at ``1e-6`` of the series
    variance so that flat stretches stay finite and the score scale-free.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2 * width or width < 2:
        return 0.0, 0
    means = _rolling(x, width, np.mean)
    variances = _rolling(x, width, np.var)
    floor = max(1e-6 * np.var(x), 1e-300)
    variances = np.maximum(variances, floor)
    m1, v1 = means[:-width], variances[:-width]
    m2, v2 = means[width:], variances[width:]
    kl = 0.5 * (np.log(v2 / v1) + (v1 + (m1 - m2) ** 2) / v2 - 1.0)
    kl = np.maximum(kl, 0.0)
    i = int(np.argmax(kl))
    return float(kl[i]), i + width


def default_width(frequency):
    return max(5, int(frequency))


def feature_vector(values, frequency, width=None, decomp=None):
    """All 18 features for one series (raw values, not log-transformed)."""
    x = np.asarray(getattr(values, "values", values), dtype=float)
    if x.size < 2:
        raise ValueError("feature_vector needs at least 2 observations")
    width = width or default_width(frequency)
    stl = dict(trend=0.0, season=0.0, linearity=0.0, curvature=0.0,
               spikiness=0.0, peak=0.0, trough=0.0)
    remainder = np.zeros_like(x)
    if x.size >= 3 and not _is_flat(x):
        if decomp is None:
            decomp = decompose(x, frequency)
        stl = stl_strengths(x, frequency, decomp)
        remainder = decomp.remainder
    windowed = x.size >= max(12, 2 * width)
    lump = rolling_window_features(remainder, width)[0] if windowed else 0.0
    _, lshift, vchange = rolling_window_features(x, width) if windowed else (0.0, 0.0, 0.0)
    kl, idx = kl_features(x, width) if windowed else (0.0, 0)
    return FeatureVector(
        mean=float(np.mean(x)),
        var=_var(x),
        acf1=acf1(x),
        trend=stl["trend"],
        linearity=stl["linearity"],
        curvature=stl["curvature"],
        season=stl["season"],
        peak=stl["peak"],
        trough=stl["trough"],
        entropy=spectral_entropy(x) if x.size >= 4 else 1.0,
        lumpiness=lump,
        spikiness=stl["spikiness"],
        lshift=lshift,
        vchange=vchange,
        fspots=float(flat_spots(x)),
        cpoints=float(crossing_points(x)),
        klscore=kl,
        change_idx=float(idx),
    )


def feature_matrix(corpus):
    """Stack feature vectors for every series of ``corpus`` (rows in corpus order)."""
    rows = [feature_vector(s.values, s.frequency).as_array() for s in corpus]
    return np.vstack(rows) if rows else np.zeros((0, len(FEATURE_NAMES)))

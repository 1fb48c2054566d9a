"""Seeded synthetic corpora with known generators."""

import numpy as np

from .corpus import Corpus, TimeSeries


def seasonal_pattern(frequency, kind="sine", phase=0):
    t = np.arange(frequency)
    if kind == "sine":
        p = np.sin(2 * np.pi * (t - phase) / frequency)
    elif kind == "peak":
        p = np.exp(-0.5 * ((t - phase) % frequency - frequency / 2) ** 2 / 1.5 ** 2)
        p = np.roll(p - p.mean(), -frequency // 2)
    else:
        raise ValueError(f"unknown pattern {kind!r}")
    return p / np.max(np.abs(p))


def periodic_corpus(n_series=10, frequency=12, periods=8, horizon=12, seed=0,
                    amplitude=0.3, level=100.0):
    """Noiseless multiplicative seasonal series, random phase per series."""
    rng = np.random.default_rng(seed)
    n = periods * frequency
    out = []
    for i in range(n_series):
        phase = int(rng.integers(frequency))
        pat = seasonal_pattern(frequency, "sine", phase)
        y = level * (1 + i * 0.1) * np.exp(amplitude * np.tile(pat, periods)[:n])
        out.append(TimeSeries(f"P{i + 1:02d}", y, frequency, horizon))
    return Corpus.from_series("periodic", out)


def two_regime_corpus(n_series=60, frequency=12, length=108, horizon=12, seed=0):
    """Half trending-smooth, half mean-reverting-noisy monthly series.

    Regime A: ``exp(g t)`` growth with a sine season and 2% noise. Regime B:
    AR(1) log level reverting to a constant, a single-peak season and 6%
    noise. Returns ``(corpus, regime)`` where ``regime`` maps id to 0 or 1.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=float)
    half = n_series // 2
    series, regime = [], {}
    for i in range(n_series):
        sid = f"S{i + 1:03d}"
        level = rng.uniform(50, 500)
        if i < half:
            g = rng.uniform(0.006, 0.015)
            pat = seasonal_pattern(frequency, "sine", int(rng.integers(3)))
            logy = g * t + 0.15 * np.tile(pat, length // frequency + 1)[:length]
            logy += rng.normal(0, 0.02, length)
            regime[sid] = 0
        else:
            ar = np.zeros(length)
            for j in range(1, length):
                ar[j] = 0.7 * ar[j - 1] + rng.normal(0, 0.06)
            pat = seasonal_pattern(frequency, "peak", int(rng.integers(3)))
            logy = ar + 0.25 * np.tile(pat, length // frequency + 1)[:length]
            regime[sid] = 1
        series.append(TimeSeries(sid, level * np.exp(logy), frequency, horizon))
    return Corpus.from_series("two-regime", series), regime

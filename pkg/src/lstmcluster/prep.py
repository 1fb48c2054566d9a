"""Preprocessing layer: log stabilization, deseasonalization, moving windows
and local trend normalization, with everything needed to invert them."""

from dataclasses import dataclass
import math

import numpy as np

from .stl import StlDecomposition, decompose, stl_decompose

__all__ = [
    "PreprocessPlan", "TrainingPatch", "PreparedSeries", "WINDOW_PRESETS",
    "stabilize", "unstabilize", "stl_decompose", "deseasonalize",
    "window_sizes", "make_patches", "prepare_series",
]

# inputSize per (dataset preset, outputSize); "all" keys the
# one-model-for-everything plan of a preset
WINDOW_PRESETS = {
    "cif2016": {12: 15, 6: 7, "all": (7, 12)},
    "nn5": {56: 70},
}


@dataclass(frozen=True)
class PreprocessPlan:
    input_size: int
    output_size: int
    used_log_shift: bool = False
    deseasonalized: bool = True
    epsilon: float = 0.0

    def __post_init__(self):
        if self.input_size < 1 or self.output_size < 1:
            raise ValueError("window sizes must be >= 1")


@dataclass(frozen=True)
class TrainingPatch:
    input: np.ndarray
    target: np.ndarray
    level: float
    series_id: str
    window_index: int


def stabilize(values, epsilon=0.0):
    """Log transform, shifted by one when ``min(values) <= epsilon``.

    Returns ``(log_values, used_log_shift)``.
    """
    y = np.asarray(values, dtype=float)
    if y.size == 0:
        raise ValueError("cannot stabilize an empty series")
    if y.min() <= -1.0:
        raise ValueError(f"log transform undefined for values <= -1 (min {y.min()})")
    if y.min() > epsilon:
        return np.log(y), False
    return np.log1p(y), True


def unstabilize(log_values, used_log_shift):
    w = np.asarray(log_values, dtype=float)
    return np.expm1(w) if used_log_shift else np.exp(w)


def deseasonalize(decomp):
    """Trend plus remainder."""
    return decomp.trend + decomp.remainder


def window_sizes(output_size, period, ts_length=None, preset=None, input_size=None):
    """Choose the input window for a required output window.

    ``input_size`` overrides everything; otherwise a dataset preset is used
    when it lists ``output_size``, else ``ceil(1.25 * max(output, period))``.
    Raises when ``ts_length`` leaves no training window.
    """
    if output_size < 1:
        raise ValueError("output_size must be >= 1")
    if input_size is None:
        table = WINDOW_PRESETS.get(preset, {}) if preset else {}
        if output_size in table:
            input_size = table[output_size]
        else:
            input_size = math.ceil(1.25 * max(output_size, period))
    plan = PreprocessPlan(int(input_size), int(output_size))
    if ts_length is not None and ts_length - output_size - input_size < 1:
        raise ValueError(
            f"series of length {ts_length} too short for input {input_size} + output {output_size}")
    return plan


@dataclass(frozen=True)
class PreparedSeries:
    """One series after the preprocessing layer.

    ``deseasonalized`` and ``trend`` are in log space; ``decomp`` carries the
    periodic seasonal component used to reseasonalize forecasts.
    """
    series_id: str
    log_values: np.ndarray
    decomp: StlDecomposition
    used_log_shift: bool
    deseasonalized_flag: bool

    @property
    def deseasonalized(self):
        return deseasonalize(self.decomp)

    @property
    def length(self):
        return self.log_values.size

    def level_at(self, index):
        return float(self.decomp.trend[index])

    def windows(self, plan, upto=None):
        """Normalized input vectors for every window whose input ends before ``upto``.

        Row ``j`` is the input ``x[j : j+input_size] - level_j``; ``levels``
        holds each ``level_j``. This is the warm-up-plus-forecast sequence.
        """
        x = self.deseasonalized
        n = x.size if upto is None else upto
        m = plan.input_size
        count = n - m + 1
        if count < 1:
            raise ValueError(f"series {self.series_id!r} shorter than the input window")
        idx = np.arange(count)[:, None] + np.arange(m)[None, :]
        levels = self.decomp.trend[np.arange(count) + m - 1]
        return x[idx] - levels[:, None], levels

    def invert(self, normalized_output, level, start):
        """Map a normalized output window starting at ``start`` back to data units."""
        out = np.asarray(normalized_output, dtype=float)
        pos = start + np.arange(out.size)
        logv = out + level + self.decomp.seasonal_at(pos)
        return unstabilize(logv, self.used_log_shift)


def prepare_series(series_id, values, period, epsilon=0.0):
    """Stabilize and decompose one series (the per-series part of the layer)."""
    logv, shifted = stabilize(values, epsilon)
    seasonal = period >= 2 and logv.size >= 2 * period
    decomp = decompose(logv, period)
    return PreparedSeries(series_id, logv, decomp, shifted, seasonal)


def make_patches(prepared, plan, reserve_validation=True):
    """Stride-1 normalized patches of one prepared series.

    Returns ``(training_patches, validation_patch)``; with
    ``reserve_validation`` the final window (whose target is the last
    ``output_size`` points) is held out, leaving
    ``length - output_size - input_size`` training patches.
    """
    x = prepared.deseasonalized
    m, k = plan.input_size, plan.output_size
    total = x.size - m - k + 1
    if total < (2 if reserve_validation else 1):
        raise ValueError(
            f"series {prepared.series_id!r}: length {x.size} too short for "
            f"input {m} + output {k}" + (" + validation" if reserve_validation else ""))
    patches = []
    for j in range(total):
        level = float(prepared.decomp.trend[j + m - 1])
        patches.append(TrainingPatch(
            input=x[j: j + m] - level,
            target=x[j + m: j + m + k] - level,
            level=level,
            series_id=prepared.series_id,
            window_index=j,
        ))
    if reserve_validation:
        return patches[:-1], patches[-1]
    return patches, None

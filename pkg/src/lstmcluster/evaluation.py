"""Error measures, evaluation protocols, the seasonal naive benchmark and the
paired / multiple-comparison significance tests."""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .corpus import Corpus, ExternalForecastSet, train_test_split

log = logging.getLogger(__name__)


# ---- measures -------------------------------------------------------------

def smape(forecast, actual):
    """Symmetric MAPE in percent; a term with ``|F| + |Y| = 0`` counts as 0."""
    f = np.asarray(forecast, dtype=float)
    y = np.asarray(actual, dtype=float)
    if f.shape != y.shape or f.size == 0:
        raise ValueError(f"smape needs equal non-empty lengths, got {f.shape} and {y.shape}")
    den = np.abs(f) + np.abs(y)
    num = np.abs(f - y)
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(200.0 * terms.mean())


def seasonal_lag(train_length, frequency):
    """Lag of the scaling naive forecast: the frequency when the training part
    holds more than two full periods, 1 otherwise."""
    return int(frequency) if train_length > 2 * frequency else 1


def mase(forecast, test, train, lag):
    """Mean absolute scaled error; ``nan`` when the in-sample scale is zero."""
    f = np.asarray(forecast, dtype=float)
    y = np.asarray(test, dtype=float)
    tr = np.asarray(train, dtype=float)
    if f.shape != y.shape or f.size == 0:
        raise ValueError("mase needs equal non-empty forecast and test lengths")
    if tr.size <= lag:
        raise ValueError(f"training part of length {tr.size} too short for lag {lag}")
    scale = np.mean(np.abs(tr[lag:] - tr[:-lag]))
    if scale == 0:
        return math.nan
    return float(np.mean(np.abs(f - y)) / scale)


def naive_seasonal(train, lag, horizon):
    """Repeat the final ``lag`` observations cyclically."""
    tr = np.asarray(train, dtype=float)
    if tr.size < lag or lag < 1:
        raise ValueError(f"need at least {lag} observations")
    last = tr[tr.size - lag:]
    return last[np.arange(horizon) % lag].copy()


def naive_forecasts(corpus):
    """Seasonal naive forecasts for every (training-part) series of ``corpus``."""
    out = {}
    for s in corpus:
        out[s.id] = naive_seasonal(s.values, seasonal_lag(s.values.size, s.frequency), s.horizon)
    return out


# ---- reports --------------------------------------------------------------

@dataclass(frozen=True)
class SeriesScore:
    series_id: str
    smape: float
    mase: float


@dataclass
class MethodReport:
    method: str
    mean_smape: float
    median_smape: float
    rank_smape: float
    mean_mase: float
    median_mase: float
    rank_mase: float
    scores: list = field(default_factory=list, repr=False)

    def row(self):
        return [self.mean_smape, self.median_smape, self.rank_smape,
                self.mean_mase, self.median_mase, self.rank_mase]


REPORT_COLUMNS = ("mean_smape", "median_smape", "rank_smape",
                  "mean_mase", "median_mase", "rank_mase")


def _mean_ranks(matrix):
    """Average-tie ranks within each row (series), averaged down columns (methods)."""
    if matrix.shape[0] == 0:
        return np.full(matrix.shape[1], math.nan)
    return rankdata(matrix, axis=1, method="average").mean(axis=0)


def build_reports(scores):
    """Six aggregates per method from ``{method: [SeriesScore, ...]}``.

    Every method must score the same series. Series whose MASE is undefined
    for any method are left out of all MASE aggregates.
    """
    methods = list(scores)
    if not methods:
        return []
    ids = [s.series_id for s in scores[methods[0]]]
    for m in methods:
        if [s.series_id for s in scores[m]] != ids:
            raise ValueError(f"method {m!r} scores a different set of series")
    sm = np.array([[s.smape for s in scores[m]] for m in methods]).T     # series x methods
    ms = np.array([[s.mase for s in scores[m]] for m in methods]).T
    ok = ~np.isnan(ms).any(axis=1)
    if not ok.all():
        bad = [ids[i] for i in np.flatnonzero(~ok)]
        log.warning("MASE undefined (zero in-sample scale) for %d series, excluded: %s",
                    len(bad), ", ".join(bad[:10]))
    r_sm = _mean_ranks(sm)
    r_ms = _mean_ranks(ms[ok])
    out = []
    for j, m in enumerate(methods):
        col = ms[ok, j]
        out.append(MethodReport(
            method=m,
            mean_smape=float(sm[:, j].mean()), median_smape=float(np.median(sm[:, j])),
            rank_smape=float(r_sm[j]),
            mean_mase=float(col.mean()) if col.size else math.nan,
            median_mase=float(np.median(col)) if col.size else math.nan,
            rank_mase=float(r_ms[j]),
            scores=scores[m],
        ))
    return sorted(out, key=lambda r: (r.mean_smape, r.method))


def score_series(series_id, forecast, test, train, frequency):
    lag = seasonal_lag(len(train), frequency)
    return SeriesScore(series_id, smape(forecast, test), mase(forecast, test, train, lag))


def _as_map(fs):
    return fs.forecasts if isinstance(fs, ExternalForecastSet) else fs


def evaluate_fixed_origin(forecast_sets, corpus):
    """Score ``{method: {series_id: forecast}}`` against the withheld last
    ``horizon`` points of every series of the full ``corpus``."""
    split = {s.id: train_test_split(s) for s in corpus}
    scores = {}
    for method, fs in forecast_sets.items():
        fmap = _as_map(fs)
        missing = [sid for sid in split if sid not in fmap]
        if missing:
            raise ValueError(f"method {method!r} lacks forecasts for {missing[:5]}")
        rows = []
        for sid, (train, test) in split.items():
            f = np.asarray(fmap[sid], dtype=float)
            if f.size != test.size:
                raise ValueError(f"method {method!r}, series {sid!r}: {f.size} values, "
                                 f"horizon {test.size}")
            rows.append(score_series(sid, f, test, train.values, train.frequency))
        scores[method] = rows
    return build_reports(scores)


def naive_adapter(series_id, history, horizon, frequency):
    """Recalibrating seasonal naive benchmark for rolling-origin runs."""
    return naive_seasonal(history, seasonal_lag(len(history), frequency), horizon)


def origin_count(length, horizon, origins, min_history):
    """How many rolling origins fit a series of ``length`` observations."""
    return max(0, min(origins, length - horizon - min_history + 1))


def evaluate_rolling_origin(adapters, corpus, origins=4, min_history=None):
    """Average accuracy over successive forecast origins.

    Origin ``j`` of ``r`` uses the first ``N - h - (r - 1 - j)`` observations
    as history and the following ``h`` as test, so the last origin is the
    fixed origin. Each adapter is ``f(series_id, history, h, frequency)``;
    models are not refitted between origins. Series too short for ``origins``
    use fewer, with a warning.
    """
    if origins < 1:
        raise ValueError("origins must be >= 1")
    scores = {m: [] for m in adapters}
    for s in corpus:
        n, h, freq = s.values.size, s.horizon, s.frequency
        floor = (2 if min_history is None else min_history)
        r = origin_count(n, h, origins, floor)
        if r < 1:
            raise ValueError(f"series {s.id!r} too short for a single origin")
        if r < origins:
            log.warning("series %s: only %d of %d origins fit", s.id, r, origins)
        for method, adapter in adapters.items():
            sm, ms = [], []
            for j in range(r):
                end = n - h - (r - 1 - j)
                hist, test = s.values[:end], s.values[end:end + h]
                f = np.asarray(adapter(s.id, hist, h, freq), dtype=float)
                sc = score_series(s.id, f, test, hist, freq)
                sm.append(sc.smape)
                ms.append(sc.mase)
            scores[method].append(SeriesScore(s.id, float(np.mean(sm)), float(np.mean(ms))))
    return build_reports(scores)


def format_report(reports):
    """Aligned plain-text table, one row per method in report order."""
    head = ["Method", "Mean sMAPE", "Median sMAPE", "Rank sMAPE",
            "Mean MASE", "Median MASE", "Rank MASE"]
    rows = [[r.method] + [f"{v:.2f}" if np.isfinite(v) else "nan" for v in r.row()]
            for r in reports]
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    lines = ["  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w)
                       for i, (c, w) in enumerate(zip(line, widths)))
             for line in [head] + rows]
    return "\n".join(lines)


def write_report_csv(reports, path):
    with open(path, "w") as fh:
        fh.write("# lstmcluster report v1\n")
        fh.write("method," + ",".join(REPORT_COLUMNS) + "\n")
        for r in reports:
            fh.write(r.method + "," + ",".join(repr(float(v)) for v in r.row()) + "\n")


def write_scores_csv(reports, path):
    with open(path, "w") as fh:
        fh.write("# lstmcluster scores v1\n")
        fh.write("method,series_id,smape,mase\n")
        for r in reports:
            for s in r.scores:
                fh.write(f"{r.method},{s.series_id},{s.smape!r},{s.mase!r}\n")


# ---- significance tests -------------------------------------------------------

def _signed_rank_counts(doubled, n):
    """Number of sign patterns giving each doubled positive-rank sum."""
    total = int(doubled.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        r = int(r)
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    return counts


def wilcoxon_signed_rank(a, b, exact_max=25):
    """Two-sided p-value of the paired signed-rank test on ``a - b``.

    Zero differences are dropped and ties get average ranks. Up to
    ``exact_max`` non-zero pairs the null distribution is computed exactly
    (average ranks are doubled so the dynamic programme stays on integers);
    above it a tie-corrected normal approximation with continuity correction.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    ranks = rankdata(np.abs(d))
    t_plus = ranks[d > 0].sum()
    if n <= exact_max:
        doubled = np.rint(2 * ranks).astype(int)
        counts = _signed_rank_counts(doubled, n)
        probs = counts / 2.0 ** n
        t2 = int(np.rint(2 * t_plus))
        lower = probs[: t2 + 1].sum()
        upper = probs[t2:].sum()
        return float(min(1.0, 2.0 * min(lower, upper)))
    mean = n * (n + 1) / 4.0
    _, tie = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie ** 3 - tie).sum() / 48.0
    if var <= 0:
        return 1.0
    z = max(abs(t_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(z)))


def hochberg(pvalues):
    """Hochberg step-up adjusted p-values (same order as the input)."""
    p = np.asarray(pvalues, dtype=float)
    m = p.size
    if m == 0:
        return p
    order = np.argsort(p, kind="stable")
    factors = m - np.arange(m)                       # m, m-1, ..., 1 for ascending p
    adj_sorted = np.minimum.accumulate((factors * p[order])[::-1])[::-1]
    adj = np.empty(m)
    adj[order] = np.minimum(adj_sorted, 1.0)
    return adj


@dataclass
class FriedmanResult:
    statistic: float
    p_value: float
    control: str
    mean_ranks: dict
    raw_p: dict
    adjusted_p: dict


def aligned_friedman_hochberg(scores, methods=None):
    """Aligned Friedman test over a (methods x series) error matrix, then
    Hochberg-adjusted comparisons of every method against the best one.

    Lower errors rank better. Post-hoc statistics use
    ``z = (R_i - R_c) / sqrt(k (n + 1) / 6)`` on average aligned ranks.
    """
    x = np.asarray(scores, dtype=float)
    if x.ndim != 2:
        raise ValueError("score matrix must be 2-d (methods x series)")
    k, n = x.shape
    methods = [f"m{i}" for i in range(k)] if methods is None else list(methods)
    if len(methods) != k:
        raise ValueError("one name per method row")
    if k < 3 or n < 10:
        raise ValueError("need at least 3 methods and 10 series")
    aligned = x - x.mean(axis=0, keepdims=True)
    ranks = rankdata(aligned.ravel(), method="average").reshape(k, n)
    r_method = ranks.sum(axis=1)
    r_series = ranks.sum(axis=0)
    kn = k * n
    num = (k - 1) * (np.sum(r_method ** 2) - (k * n * n / 4.0) * (kn + 1) ** 2)
    den = kn * (kn + 1) * (2 * kn + 1) / 6.0 - np.sum(r_series ** 2) / k
    if np.ptp(aligned) == 0 or den <= 0:
        stat, p = 0.0, 1.0
    else:
        stat = float(num / den)
        p = float(chi2.sf(stat, k - 1))
    mean_ranks = r_method / n
    c = int(np.argmin(mean_ranks))
    se = math.sqrt(k * (n + 1) / 6.0)
    others = [i for i in range(k) if i != c]
    raw = np.array([2.0 * norm.sf(abs(mean_ranks[i] - mean_ranks[c]) / se) for i in others])
    adj = hochberg(raw)
    return FriedmanResult(
        statistic=stat, p_value=p, control=methods[c],
        mean_ranks={m: float(r) for m, r in zip(methods, mean_ranks)},
        raw_p={methods[i]: float(v) for i, v in zip(others, raw)},
        adjusted_p={methods[i]: float(v) for i, v in zip(others, adj)},
    )


def format_friedman(result):
    lines = [f"aligned Friedman statistic {result.statistic:.4f}, p = {result.p_value:.4g}",
             f"control method: {result.control}",
             "method  mean_rank  raw_p  hochberg_p"]
    for m, r in sorted(result.mean_ranks.items(), key=lambda kv: kv[1]):
        raw = result.raw_p.get(m)
        adj = result.adjusted_p.get(m)
        lines.append(f"{m}  {r:.3f}  " + ("-  -" if raw is None else f"{raw:.4g}  {adj:.4g}"))
    return "\n".join(lines)

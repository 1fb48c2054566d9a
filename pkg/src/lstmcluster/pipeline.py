"""Grouping, per-group training and forecasting, and post-processing.

A run partitions the corpus into groups (one, one per horizon, or one per
feature cluster), fits one network per group on normalized patches and turns
each network's final output window back into data units.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from .corpus import Corpus, TimeSeries
from .evaluation import naive_seasonal, smape
from .features import FEATURE_NAMES, feature_matrix
from .hyperopt import SearchSpace, optimize, validation_score
from .lstm import LstmModel, TrainConfig, TrainingDivergence, forward_inputs, train
from .prep import WINDOW_PRESETS, make_patches, prepare_series, window_sizes
from .seeding import derived_seed
from .snob import cluster

log = logging.getLogger(__name__)

STRATEGIES = ("all", "horizon", "cluster")


@dataclass(frozen=True)
class Grouping:
    strategy: str
    groups: dict                   # group id -> list of series ids, corpus order
    summary: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown grouping strategy {self.strategy!r}")
        if any(len(v) == 0 for v in self.groups.values()):
            raise ValueError("empty group")
        seen = [s for v in self.groups.values() for s in v]
        if len(seen) != len(set(seen)):
            raise ValueError("groups overlap")

    def group_of(self, series_id):
        for gid, members in self.groups.items():
            if series_id in members:
                return gid
        raise KeyError(series_id)

    def to_dict(self):
        return {"strategy": self.strategy, "groups": {k: list(v) for k, v in self.groups.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(d["strategy"], {k: list(v) for k, v in d["groups"].items()})


def cluster_eligible(series):
    """Feature extraction needs two full seasonal periods."""
    return series.values.size >= 2 * max(series.frequency, 1)


def make_grouping(corpus, strategy, max_k=None, restarts=10, seed=0):
    """Partition ``corpus`` for ``strategy`` in {all, horizon, cluster}.

    ``cluster`` clusters the eligible series of each horizon on their
    features; the ineligible series of that horizon form one extra group.
    """
    ids = corpus.ids
    if strategy == "all" or len(ids) == 1:
        return Grouping(strategy, {"all": list(ids)})
    by_h = {}
    for s in corpus:
        by_h.setdefault(s.horizon, []).append(s.id)
    if strategy == "horizon":
        return Grouping(strategy, {f"h{h}": v for h, v in sorted(by_h.items())})
    if strategy != "cluster":
        raise ValueError(f"unknown grouping strategy {strategy!r}")
    groups, summary = {}, {}
    for h, members in sorted(by_h.items()):
        ok = [sid for sid in members if cluster_eligible(corpus[sid])]
        short = [sid for sid in members if sid not in set(ok)]
        if len(ok) == 1:
            groups[f"h{h}-c0"] = ok
        elif ok:
            feats = feature_matrix(corpus.subset(ok))
            model, assign = cluster(feats, ids=ok, max_k=max_k, restarts=restarts,
                                    seed=derived_seed(seed, "cluster", h))
            labels = np.array([assign.labels[sid] for sid in ok])
            for c, sids in assign.groups().items():
                groups[f"h{h}-c{c}"] = sids
            summary[f"h{h}"] = {
                "k": int(model.k),
                "weights": [float(w) for w in model.weights],
                "message_length": float(model.message_length),
                "feature_means": {
                    f"h{h}-c{c}": dict(zip(FEATURE_NAMES, map(float, feats[labels == c].mean(axis=0))))
                    for c in sorted(set(labels.tolist()))},
            }
            log.info("horizon %d: %d clusters over %d series", h, assign.n_clusters, len(ok))
        if short:
            groups[f"h{h}-short"] = short
    return Grouping(strategy, groups, summary)


@dataclass
class GroupResult:
    group_id: str
    series_ids: list
    plan: object = None
    config: TrainConfig = None
    model: LstmModel = None
    trials: list = field(default_factory=list)
    error: str = ""

    @property
    def failed(self):
        return bool(self.error)


@dataclass
class RunResult:
    forecasts: dict                 # series id -> values in data units
    groups: dict                    # group id -> GroupResult
    grouping: Grouping

    @property
    def failed_groups(self):
        return {g: r.error for g, r in self.groups.items() if r.failed}


def group_plan(members, preset=None, input_size=None, output_size=None, single_model=False):
    """Window plan shared by one group's series.

    ``output_size`` defaults to the largest member horizon. With
    ``single_model`` a preset's one-model-for-everything entry is used.
    """
    freq = members[0].frequency
    out = output_size or max(s.horizon for s in members)
    table = WINDOW_PRESETS.get(preset, {}) if preset else {}
    if single_model and "all" in table and input_size is None and output_size is None:
        input_size, out = table["all"]
    return window_sizes(out, freq, preset=preset, input_size=input_size)


def group_seed(seed, index):
    return derived_seed(seed, "group", index)


def _prepare_group(members, plan, epsilon):
    prepared, patches, skipped = [], [], []
    for s in members:
        p = prepare_series(s.id, s.values, s.frequency, epsilon)
        prepared.append(p)
        try:
            tr, _ = make_patches(p, plan, reserve_validation=True)
            patches.append((p, tr))
        except ValueError:
            skipped.append(s.id)
    if skipped:
        log.warning("series too short to train on (forecast only): %s", ", ".join(skipped))
    return prepared, patches


def forecast_prepared(model, plan, prepared, horizon):
    """Warm up over every window of the history, invert the final output."""
    n = prepared.length
    X, levels = prepared.windows(plan)
    y = forward_inputs(model, X)[-1]
    return prepared.invert(y, levels[-1], n)[:horizon]


def _fit_group(args):
    gid, members, plan, config, budget, space_bounds, seed, epsilon = args
    res = GroupResult(gid, [s.id for s in members], plan=plan)
    prepared, patches = _prepare_group(members, plan, epsilon)
    if not patches:
        res.error = f"group {gid}: no series long enough for input {plan.input_size} + " \
                    f"output {plan.output_size} + validation"
        return res
    series_patches = [tr for _, tr in patches]
    try:
        if budget:
            n_tr = sum(len(t) for t in series_patches)
            space = SearchSpace.default(n_tr)
            if space_bounds:
                space = space.narrowed(**space_bounds)
            cache = {}

            def objective(cfg):
                model = train(series_patches, cfg)
                score = validation_score(model, [p for p, _ in patches], plan)
                cache[cfg] = model
                return score

            opt = optimize(objective, space, budget, seed=seed)
            res.trials = [dict(config=t.config.to_dict(), score=t.score, failed=t.failed,
                               duration=t.duration) for t in opt.trials]
            res.config = opt.best.config
            res.model = cache[opt.best.config]
        else:
            res.config = replace(config, seed=seed)
            res.model = train(series_patches, res.config)
    except TrainingDivergence as exc:
        res.error = f"group {gid}: training diverged ({exc})"
    return res


def fit_groups(corpus, grouping, config=None, budget=0, seed=0, preset=None,
               input_size=None, output_size=None, search_bounds=None, epsilon=0.0, jobs=1):
    """Train one model per group; returns ``{group_id: GroupResult}``."""
    if not budget and config is None:
        raise ValueError("either a TrainConfig or a hyperopt budget is required")
    tasks = []
    for idx, (gid, sids) in enumerate(grouping.groups.items()):
        members = [corpus[s] for s in sids]
        plan = group_plan(members, preset, input_size, output_size,
                          single_model=grouping.strategy == "all")
        tasks.append((gid, members, plan, config, budget, search_bounds,
                      group_seed(seed, idx), epsilon))
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_fit_group, tasks))
    else:
        results = [_fit_group(t) for t in tasks]
    for r in results:
        if r.failed:
            log.error(r.error)
    return {r.group_id: r for r in results}


def forecast_groups(corpus, groups, epsilon=0.0):
    """Forecasts for every series of every successfully trained group."""
    out = {}
    for r in groups.values():
        if r.failed:
            continue
        for sid in r.series_ids:
            s = corpus[sid]
            p = prepare_series(sid, s.values, s.frequency, epsilon)
            out[sid] = forecast_prepared(r.model, r.plan, p, s.horizon)
    return out


def run(corpus, grouping, config=None, budget=0, seed=0, preset=None, input_size=None,
        output_size=None, search_bounds=None, epsilon=0.0, jobs=1):
    """Train per group (fixed ``config`` or hyperopt with ``budget`` trials)
    and forecast every series of ``corpus`` from its end."""
    groups = fit_groups(corpus, grouping, config, budget, seed, preset, input_size,
                        output_size, search_bounds, epsilon, jobs)
    return RunResult(forecast_groups(corpus, groups, epsilon), groups, grouping)


def lstm_adapter(groups, grouping, epsilon=0.0):
    """Rolling-origin adapter: fixed trained models, history-extended warm-up."""
    def adapter(series_id, history, horizon, frequency):
        r = groups[grouping.group_of(series_id)]
        if r.failed:
            raise RuntimeError(r.error)
        p = prepare_series(series_id, history, frequency, epsilon)
        return forecast_prepared(r.model, r.plan, p, horizon)
    return adapter


# ---- exponential-trend experiment ---------------------------------------

TREND_CONFIG = TrainConfig(cell_dim=20, epoch_size=1200, minibatch_size=2,
                           lr_per_sample=0.002, max_epochs=25, noise_std=0.001,
                           l2_weight=0.0005)


def trend_corpus(n_series=16, train_len=130, test_len=24, seed=0, max_rate=0.02,
                 level=100.0, noise=0.01):
    """Series ``level * exp(r t)`` with ``r`` graduated from 0 to ``max_rate``
    and multiplicative noise; returns the full (train + test) corpus."""
    rng = np.random.default_rng(seed)
    t = np.arange(train_len + test_len, dtype=float)
    series = []
    for i, r in enumerate(np.linspace(0.0, max_rate, n_series)):
        y = level * np.exp(r * t) * np.exp(rng.normal(0.0, noise, t.size))
        series.append(TimeSeries(f"T{i + 1:02d}", y, 1, test_len))
    return Corpus.from_series("trend", series)


@dataclass
class TrendRow:
    series_id: str
    rate: float
    smape: float
    naive_smape: float
    train_max: float
    forecast_max: float

    @property
    def exceeds_train_max(self):
        return self.forecast_max > self.train_max


def trend_experiment(n_series=16, train_len=130, test_len=24, seed=0, config=None,
                     input_size=None):
    """One global model over exponential trends, one output window per series.

    Returns ``(rows, forecasts)`` with rows ordered by steepness.
    """
    from .corpus import split_corpus

    full = trend_corpus(n_series, train_len, test_len, seed)
    train_part, tests = split_corpus(full)
    grouping = make_grouping(train_part, "all")
    res = run(train_part, grouping, config=config or TREND_CONFIG, seed=seed,
              input_size=input_size)
    if res.failed_groups:
        raise TrainingDivergence("; ".join(res.failed_groups.values()))
    rates = np.linspace(0.0, 0.02, n_series)
    rows = []
    for s, r in zip(train_part, rates):
        f = res.forecasts[s.id]
        nv = naive_seasonal(s.values, 1, test_len)
        rows.append(TrendRow(s.id, float(r), smape(f, tests[s.id]), smape(nv, tests[s.id]),
                             float(s.values.max()), float(f.max())))
    return rows, res.forecasts


def format_trend_report(rows):
    lines = ["series_id,rate,smape,naive_smape,train_max,forecast_max,exceeds_train_max"]
    for r in rows:
        lines.append(f"{r.series_id},{r.rate:.5f},{r.smape:.4f},{r.naive_smape:.4f},"
                     f"{r.train_max:.4f},{r.forecast_max:.4f},{int(r.exceeds_train_max)}")
    return "\n".join(lines)

"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import UsageError, build, read_config_file, validate, RunConfig
from .corpus import (Corpus, CorpusError, load_corpus, load_forecasts, split_corpus, write_corpus,
                     write_forecasts)
from .evaluation import (aligned_friedman_hochberg, evaluate_fixed_origin,
                         evaluate_rolling_origin, format_friedman, format_report,
                         naive_adapter, naive_forecasts, origin_count, wilcoxon_signed_rank,
                         write_report_csv, write_scores_csv)
from .features import FEATURE_NAMES, feature_matrix
from .lstm import LstmModel, TrainingDivergence
from .pipeline import (TREND_CONFIG, GroupResult, Grouping, fit_groups, forecast_groups,
                       format_trend_report, group_plan, lstm_adapter, make_grouping,
                       trend_experiment)
from .prep import PreprocessPlan, make_patches, prepare_series

log = logging.getLogger("lstmcluster")

COMMANDS = ("ingest", "features", "cluster", "prep", "train", "forecast", "evaluate",
            "trend-demo", "replay")
METHOD_NAMES = {"all": "LSTM.All", "horizon": "LSTM.Horizon", "cluster": "LSTM.Cluster"}
NAIVE = "Naive.Seasonal"
MANIFEST_VERSION = 1


class DataError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_common(p):
    p.add_argument("--config", help="key = value file with [run] and per-command sections")
    p.add_argument("--dataset")
    p.add_argument("--format", choices=("cif", "generic", "nn5"))
    p.add_argument("--name")
    p.add_argument("--frequency", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=None,
                   help="concurrent groups (default: available CPUs)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_grouping(p):
    p.add_argument("--grouping", choices=("all", "horizon", "cluster"))
    p.add_argument("--max-k", type=int)
    p.add_argument("--restarts", type=int)


def _add_training(p):
    p.add_argument("--preset", choices=("cif2016", "nn5"))
    p.add_argument("--input-size", type=int)
    p.add_argument("--output-size", type=int)
    p.add_argument("--cell-dim", type=int)
    p.add_argument("--epoch-size", type=int)
    p.add_argument("--minibatch-size", type=int)
    p.add_argument("--lr-per-sample", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--l2-weight", type=float)
    p.add_argument("--budget", type=int, help="hyperopt trials per group (0: fixed config)")
    p.add_argument("--epsilon", type=float)


def make_parser():
    parser = _Parser(prog="lstmcluster", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "replay":
            p.add_argument("--manifest", required=True)
            p.add_argument("--out")
            p.add_argument("-v", "--verbose", action="store_true")
            continue
        _add_common(p)
        if name in ("cluster", "prep", "train", "forecast", "evaluate"):
            _add_grouping(p)
        if name in ("prep", "train", "forecast", "evaluate", "trend-demo"):
            _add_training(p)
        if name == "forecast":
            p.add_argument("--models", help="output directory of a previous train run")
        if name == "evaluate":
            p.add_argument("--setup", choices=("co", "fo", "ro"))
            p.add_argument("--origins", type=int)
            p.add_argument("--forecasts", action="append",
                           help="external forecast file (method,series_id,f1,...)")
            p.add_argument("--methods", help="comma-separated subset of all,horizon,cluster")
    return parser


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Output directory bookkeeping and the manifest."""

    def __init__(self, command, cfg):
        self.command, self.cfg = command, cfg
        self.outputs = []
        self.extra = {}
        os.makedirs(cfg.out, exist_ok=True)

    def path(self, *parts):
        p = os.path.join(self.cfg.out, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        self.outputs.append(os.path.relpath(p, self.cfg.out))
        return p

    def write_manifest(self):
        cfg = self.cfg.to_dict()
        inputs = {}
        for key in ("dataset",):
            if cfg.get(key) and os.path.exists(cfg[key]):
                inputs[os.path.abspath(cfg[key])] = _sha256(cfg[key])
        for f in cfg.get("forecasts") or []:
            inputs[os.path.abspath(f)] = _sha256(f)
        cfg = dict(cfg)
        for key in ("dataset", "models"):
            if cfg.get(key):
                cfg[key] = os.path.abspath(cfg[key])
        cfg["forecasts"] = [os.path.abspath(f) for f in cfg.get("forecasts") or []]
        manifest = {
            "format": "lstmcluster manifest",
            "version": MANIFEST_VERSION,
            "package_version": __version__,
            "command": self.command,
            "config": cfg,
            "inputs": inputs,
            "outputs": {o: _sha256(os.path.join(self.cfg.out, o)) for o in self.outputs},
        }
        manifest.update(self.extra)
        with open(os.path.join(self.cfg.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _load(cfg):
    return load_corpus(cfg.dataset, cfg.format, cfg.name, cfg.frequency, cfg.horizon)


def _grouping(cfg, corpus, strategy=None):
    return make_grouping(corpus, strategy or cfg.grouping, max_k=cfg.max_k,
                         restarts=cfg.restarts, seed=cfg.seed)


def _fit(cfg, corpus, grouping, jobs):
    return fit_groups(corpus, grouping, config=None if cfg.budget else cfg.train_config(),
                      budget=cfg.budget, seed=cfg.seed, preset=cfg.preset,
                      input_size=cfg.input_size, output_size=cfg.output_size,
                      epsilon=cfg.epsilon, jobs=jobs)


def _group_summary(groups):
    out = {}
    for gid, r in groups.items():
        out[gid] = {
            "series": list(r.series_ids),
            "plan": None if r.plan is None else [r.plan.input_size, r.plan.output_size],
            "config": None if r.config is None else r.config.to_dict(),
            "trials": [{k: v for k, v in t.items() if k != "duration"} for t in r.trials],
            "error": r.error,
        }
    return out


def _check_failures(groups):
    failed = {g: r.error for g, r in groups.items() if r.failed}
    for msg in failed.values():
        print(f"error: {msg}", file=sys.stderr)
    return failed


def _divergence_only(failed):
    return all("diverged" in m for m in failed.values())


def cmd_ingest(cfg, run, jobs):
    corpus = _load(cfg)
    write_corpus(corpus, run.path("corpus.csv"))
    lengths = [len(s) for s in corpus]
    print(f"{corpus.name}: {len(corpus)} series, frequency {corpus.frequency}, "
          f"lengths {min(lengths)}..{max(lengths)}")
    return 0


def cmd_features(cfg, run, jobs):
    corpus = _load(cfg)
    feats = feature_matrix(corpus)
    with open(run.path("features.csv"), "w") as fh:
        fh.write("# lstmcluster features v1\n")
        fh.write("id," + ",".join(FEATURE_NAMES) + "\n")
        for sid, row in zip(corpus.ids, feats):
            fh.write(sid + "," + ",".join(repr(float(v)) for v in row) + "\n")
    return 0


def _write_grouping(run, grouping):
    with open(run.path("clusters.csv"), "w") as fh:
        fh.write("# lstmcluster groups v1\n")
        fh.write("id,cluster\n")
        for gid, sids in grouping.groups.items():
            for sid in sids:
                fh.write(f"{sid},{gid}\n")
    if grouping.summary:
        with open(run.path("cluster_models.json"), "w") as fh:
            json.dump({"format": "lstmcluster cluster models", "version": 1,
                       "models": grouping.summary}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    run.extra["grouping"] = grouping.to_dict()


def cmd_cluster(cfg, run, jobs):
    corpus = _load(cfg)
    grouping = _grouping(cfg, corpus)
    _write_grouping(run, grouping)
    for gid, sids in grouping.groups.items():
        print(f"{gid}: {len(sids)} series")
    return 0


def _write_patch_rows(path, patches):
    with open(path, "w") as fh:
        fh.write("# lstmcluster patches v1\n")
        if patches:
            m, k = patches[0].input.size, patches[0].target.size
            fh.write(",".join(["series_id", "window_index", "level"]
                              + [f"i{j + 1}" for j in range(m)]
                              + [f"o{j + 1}" for j in range(k)]) + "\n")
        for p in patches:
            vals = np.concatenate([p.input, p.target])
            fh.write(f"{p.series_id},{p.window_index},{p.level!r},"
                     + ",".join(repr(float(v)) for v in vals) + "\n")


def cmd_prep(cfg, run, jobs):
    corpus = _load(cfg)
    grouping = _grouping(cfg, corpus)
    _write_grouping(run, grouping)
    plans = {}
    for gid, sids in grouping.groups.items():
        members = [corpus[s] for s in sids]
        plan = group_plan(members, cfg.preset, cfg.input_size, cfg.output_size,
                          single_model=grouping.strategy == "all")
        plans[gid] = [plan.input_size, plan.output_size]
        train_rows, val_rows = [], []
        for s in members:
            p = prepare_series(s.id, s.values, s.frequency, cfg.epsilon)
            try:
                tr, val = make_patches(p, plan)
            except ValueError as exc:
                log.warning("%s", exc)
                continue
            train_rows.extend(tr)
            val_rows.append(val)
        _write_patch_rows(run.path("patches", f"{gid}.train.csv"), train_rows)
        _write_patch_rows(run.path("patches", f"{gid}.validation.csv"), val_rows)
    run.extra["plans"] = plans
    return 0


def _save_models(run, groups):
    for gid, r in groups.items():
        if not r.failed:
            r.model.save(run.path("models", f"{gid}.npz"))


def cmd_train(cfg, run, jobs):
    corpus = _load(cfg)
    grouping = _grouping(cfg, corpus)
    _write_grouping(run, grouping)
    groups = _fit(cfg, corpus, grouping, jobs)
    _save_models(run, groups)
    run.extra["groups"] = _group_summary(groups)
    failed = _check_failures(groups)
    return (3 if _divergence_only(failed) else 2) if failed else 0


def _load_trained(models_dir):
    with open(os.path.join(models_dir, "manifest.json")) as fh:
        m = json.load(fh)
    if m.get("command") != "train":
        raise DataError(f"{models_dir}: not the output of a train run")
    grouping = Grouping.from_dict(m["grouping"])
    groups = {}
    for gid, g in m["groups"].items():
        r = GroupResult(gid, g["series"], error=g["error"])
        if not r.failed:
            r.plan = PreprocessPlan(*g["plan"])
            r.model = LstmModel.load(os.path.join(models_dir, "models", f"{gid}.npz"))
        groups[gid] = r
    return grouping, groups, m["config"].get("epsilon", 0.0)


def cmd_forecast(cfg, run, jobs):
    corpus = _load(cfg)
    if cfg.models:
        grouping, groups, eps = _load_trained(cfg.models)
        missing = set(corpus.ids) - {s for v in grouping.groups.values() for s in v}
        if missing:
            raise DataError(f"series not covered by the trained models: {sorted(missing)[:5]}")
    else:
        grouping = _grouping(cfg, corpus)
        groups = _fit(cfg, corpus, grouping, jobs)
        eps = cfg.epsilon
        _save_models(run, groups)
    _write_grouping(run, grouping)
    forecasts = forecast_groups(corpus, groups, eps)
    ordered = {sid: forecasts[sid] for sid in corpus.ids if sid in forecasts}
    write_forecasts(ordered, run.path("forecasts.csv"))
    run.extra["groups"] = _group_summary(groups)
    failed = _check_failures(groups)
    return (3 if _divergence_only(failed) else 2) if failed else 0


def _stats_text(reports):
    methods = [r.method for r in reports]
    lines = []
    sm = np.array([[s.smape for s in r.scores] for r in reports])
    if len(methods) >= 3 and sm.shape[1] >= 10:
        lines.append(format_friedman(aligned_friedman_hochberg(sm, methods)))
    if NAIVE in methods:
        base = sm[methods.index(NAIVE)]
        lines.append("Wilcoxon signed-rank vs " + NAIVE)
        for m, row in zip(methods, sm):
            if m != NAIVE:
                lines.append(f"{m}  p = {wilcoxon_signed_rank(row, base):.4g}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(cfg, run, jobs):
    full = _load(cfg)
    failed = {}
    if cfg.setup == "ro":
        floor = 2
        r = {s.id: max(origin_count(len(s), s.horizon, cfg.origins, floor), 1) for s in full}
        # models are fitted at each series' earliest origin
        train_part = Corpus(full.name, {s.id: s.head(len(s) - s.horizon - (r[s.id] - 1))
                                        for s in full})
        if cfg.forecasts:
            log.warning("external forecasts are scored in fixed-origin setups only")
    else:
        train_part, _ = split_corpus(full)
    sets, adapters = {}, {}
    for m in cfg.methods:
        grouping = _grouping(cfg, train_part, m)
        groups = _fit(cfg, train_part, grouping, jobs)
        run.extra.setdefault("groups", {})[METHOD_NAMES[m]] = _group_summary(groups)
        failed.update({f"{m}/{g}": e for g, e in _check_failures(groups).items()})
        if failed:
            continue
        if cfg.setup == "ro":
            adapters[METHOD_NAMES[m]] = lstm_adapter(groups, grouping, cfg.epsilon)
        else:
            sets[METHOD_NAMES[m]] = forecast_groups(train_part, groups, cfg.epsilon)
    if failed:
        return 3 if _divergence_only(failed) else 2
    if cfg.setup == "ro":
        adapters[NAIVE] = naive_adapter
        reports = evaluate_rolling_origin(adapters, full, cfg.origins, min_history=2)
    else:
        sets[NAIVE] = naive_forecasts(train_part)
        for path in cfg.forecasts or []:
            for name, fs in load_forecasts(path, train_part).items():
                if name in sets:
                    raise DataError(f"duplicate method name {name!r} in {path}")
                sets[name] = fs
        reports = evaluate_fixed_origin(sets, full)
        with open(run.path("forecasts.csv"), "w") as fh:
            fh.write("# lstmcluster forecasts v1\n")
            for name, fs in sets.items():
                fmap = getattr(fs, "forecasts", fs)
                for sid in full.ids:
                    fh.write(f"{name},{sid}," + ",".join(repr(float(v)) for v in fmap[sid]) + "\n")
    table = format_report(reports)
    stats = _stats_text(reports)
    with open(run.path("report.txt"), "w") as fh:
        fh.write(table + "\n\n" + stats)
    write_report_csv(reports, run.path("report.csv"))
    write_scores_csv(reports, run.path("scores.csv"))
    print(table)
    print(stats, end="")
    return 0


def cmd_trend_demo(cfg, run, jobs):
    if cfg.budget:
        raise UsageError("trend-demo runs a fixed configuration; drop --budget")
    rows, forecasts = trend_experiment(seed=cfg.seed, config=cfg.train_config(),
                                       input_size=cfg.input_size)
    text = format_trend_report(rows)
    with open(run.path("trend_report.csv"), "w") as fh:
        fh.write("# lstmcluster trend report v1\n" + text + "\n")
    write_forecasts(forecasts, run.path("forecasts.csv"))
    mean = float(np.mean([r.smape for r in rows]))
    naive = float(np.mean([r.naive_smape for r in rows]))
    print(text)
    print(f"mean sMAPE {mean:.3f}  naive level {naive:.3f}  "
          f"steepest exceeds training max: {rows[-1].exceeds_train_max}")
    return 0


HANDLERS = {"ingest": cmd_ingest, "features": cmd_features, "cluster": cmd_cluster,
            "prep": cmd_prep, "train": cmd_train, "forecast": cmd_forecast,
            "evaluate": cmd_evaluate, "trend-demo": cmd_trend_demo}

_TRAIN_KEYS = ("cell_dim", "epoch_size", "minibatch_size", "lr_per_sample", "max_epochs",
               "noise_std", "l2_weight")


def execute(command, cfg, jobs=1):
    """Run one subcommand with a resolved configuration; returns the exit code."""
    validate(cfg, needs_dataset=command != "trend-demo")
    run = Run(command, cfg)
    code = HANDLERS[command](cfg, run, jobs)
    run.write_manifest()
    return code


def replay(manifest_path, out=None):
    with open(manifest_path) as fh:
        m = json.load(fh)
    if m.get("format") != "lstmcluster manifest" or m.get("version") != MANIFEST_VERSION:
        raise DataError(f"{manifest_path}: not a version {MANIFEST_VERSION} manifest")
    for path, digest in m.get("inputs", {}).items():
        if not os.path.exists(path) or _sha256(path) != digest:
            raise DataError(f"input {path} is missing or changed since the run")
    cfg = RunConfig.from_dict(m["config"])
    cfg.out = out or os.path.join(os.path.dirname(os.path.abspath(manifest_path)), "replay")
    code = execute(m["command"], cfg, jobs=1)
    mismatched = []
    for name, digest in m["outputs"].items():
        p = os.path.join(cfg.out, name)
        if not os.path.exists(p) or _sha256(p) != digest:
            mismatched.append(name)
    if mismatched:
        raise DataError(f"replay differs from the recorded run in: {', '.join(mismatched)}")
    print(f"replay identical: {len(m['outputs'])} output files reproduced in {cfg.out}")
    return code


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "replay":
            return replay(args.manifest, args.out)
        flags = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "jobs", "verbose")}
        if isinstance(flags.get("methods"), str):
            flags["methods"] = [t.strip() for t in flags["methods"].split(",") if t.strip()]
        file_values = read_config_file(args.config, args.command) if args.config else {}
        if args.command == "trend-demo":
            # the experiment's own training settings unless overridden
            base = {k: getattr(TREND_CONFIG, k) for k in _TRAIN_KEYS}
            file_values = {**base, **file_values}
        cfg = build(args.command, file_values, flags)
        jobs = args.jobs if args.jobs else (os.cpu_count() or 1)
        return execute(args.command, cfg, jobs)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except (CorpusError, DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""
One model per cluster versus one global model
=============================================

A corpus mixes two generators: smooth seasonal growth and noisy
mean-reverting series with a single seasonal peak. The series are clustered
on their features by minimum message length and one network is trained per
cluster. The result is compared with a single global network and with the
seasonal naive benchmark.
"""

import numpy as np

from lstmcluster.corpus import split_corpus
from lstmcluster.evaluation import (aligned_friedman_hochberg, evaluate_fixed_origin,
                                    format_friedman, format_report, naive_forecasts,
                                    wilcoxon_signed_rank)
from lstmcluster.features import FEATURE_NAMES, feature_matrix
from lstmcluster.lstm import TrainConfig
from lstmcluster.pipeline import make_grouping, run
from lstmcluster.synthetic import two_regime_corpus

full, regime = two_regime_corpus(n_series=60, seed=0)
train, _ = split_corpus(full)

# features for a few series of each regime
F = feature_matrix(train)
for col in ("trend", "season", "acf1", "linearity"):
    j = FEATURE_NAMES.index(col)
    a = F[[regime[s] == 0 for s in train.ids], j].mean()
    b = F[[regime[s] == 1 for s in train.ids], j].mean()
    print(f"{col:>10}: regime A {a:6.3f}   regime B {b:6.3f}")

grouping = make_grouping(train, "cluster", seed=1)
for gid, members in grouping.groups.items():
    share = np.mean([regime[s] for s in members])
    print(f"{gid}: {len(members)} series, {share:.0%} from regime B")

# a fixed configuration inside the tuning box; no hyperparameter search here
cfg = TrainConfig(cell_dim=20, epoch_size=2000, minibatch_size=4, lr_per_sample=0.003,
                  max_epochs=20, noise_std=0.001, l2_weight=0.0005)
sets = {
    "LSTM.Cluster": run(train, grouping, config=cfg, seed=1).forecasts,
    "LSTM.All": run(train, make_grouping(train, "all"), config=cfg, seed=1).forecasts,
    "Naive.Seasonal": naive_forecasts(train),
}
reports = evaluate_fixed_origin(sets, full)
print(format_report(reports))

S = np.array([[s.smape for s in r.scores] for r in reports])
print(format_friedman(aligned_friedman_hochberg(S, [r.method for r in reports])))
base = S[[r.method for r in reports].index("Naive.Seasonal")]
for r, row in zip(reports, S):
    if r.method != "Naive.Seasonal":
        print(f"{r.method} vs naive: Wilcoxon p = {wilcoxon_signed_rank(row, base):.2g}")

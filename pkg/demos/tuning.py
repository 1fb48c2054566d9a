"""
Tuning a group's network by Bayesian optimization
=================================================

Each trial trains a network on all windows but the last one of every
series, and is scored by the sMAPE of that held-out window. A Gaussian
process over the unit cube of the seven hyperparameters proposes the next
configuration by expected improvement.
"""

import numpy as np

from lstmcluster.corpus import split_corpus
from lstmcluster.hyperopt import SearchSpace, optimize, random_search
from lstmcluster.pipeline import group_plan, run, make_grouping
from lstmcluster.synthetic import two_regime_corpus

full, _ = two_regime_corpus(n_series=20, seed=4)
train, tests = split_corpus(full)

# a narrowed box keeps each trial to a second or two
bounds = dict(cell_dim=(10, 30), max_epochs=(10, 15))
res = run(train, make_grouping(train, "all"), budget=8, seed=0, search_bounds=bounds)
for t in res.groups["all"].trials:
    c = t["config"]
    print(f"cells {c['cell_dim']:>3}  lr {c['lr_per_sample']:.4f}  batch {c['minibatch_size']:>2}"
          f"  epochs {c['max_epochs']:>2}  -> validation sMAPE {t['score']:.3f}")
print("chosen:", res.groups["all"].config)


# the same optimizer on a cheap synthetic objective, against random search
space = SearchSpace.default(500)


def bowl(cfg):
    return float(np.sum((space.to_unit(cfg.to_dict()) - 0.3) ** 2))


wins = sum(optimize(bowl, space, 10, seed=s).best.score
           <= random_search(bowl, space, 10, seed=s).best.score for s in range(10))
print(f"Bayesian optimization at least as good as random search in {wins}/10 seeds")

import math

import numpy as np
import pytest

from lstmcluster.hyperopt import (INTEGER, PARAMS, SearchSpace, expected_improvement,
                                  optimize, random_search)


SPACE = SearchSpace.default(100)


def center_distance(cfg):
    return float(np.sum((SPACE.to_unit(cfg.to_dict()) - 0.5) ** 2))


def test_default_box():
    b = SearchSpace.default(37).bounds
    assert b["cell_dim"] == (10, 80) and b["epoch_size"] == (37, 111)
    assert b["minibatch_size"] == (2, 40) and b["lr_per_sample"] == (0.001, 0.04)
    assert b["max_epochs"] == (10, 40) and b["noise_std"] == (0.0005, 0.005)
    assert b["l2_weight"] == (0.0005, 0.0008)


def test_configs_in_bounds_and_rounded():
    res = optimize(center_distance, SPACE, 8, seed=3)
    for t in res.trials:
        d = t.config.to_dict()
        for p in PARAMS:
            lo, hi = SPACE.bounds[p]
            assert lo <= d[p] <= hi
            if p in INTEGER:
                assert isinstance(d[p], int)


def test_budget_two_is_best_initial():
    res = optimize(center_distance, SPACE, 2, seed=0)
    assert len(res.trials) == 2
    assert res.best.score == min(t.score for t in res.trials)


def test_constant_objective():
    res = optimize(lambda cfg: 4.25, SPACE, 7, seed=1)
    assert res.best.score == 4.25 and len(res.trials) == 7


def test_failures_are_recorded():
    calls = []

    def flaky(cfg):
        calls.append(cfg)
        if len(calls) % 2:
            raise RuntimeError("boom")
        return center_distance(cfg)

    res = optimize(flaky, SPACE, 6, seed=2)
    assert sum(t.failed for t in res.trials) == 3
    assert not res.best.failed and math.isfinite(res.best.score)
    with pytest.raises(RuntimeError):
        optimize(lambda cfg: float("nan"), SPACE, 3, seed=0)


def test_budget_precondition():
    with pytest.raises(ValueError):
        optimize(center_distance, SPACE, 1)


def test_deterministic():
    a = optimize(center_distance, SPACE, 7, seed=5)
    b = optimize(center_distance, SPACE, 7, seed=5)
    assert [t.config for t in a.trials] == [t.config for t in b.trials]


def test_expected_improvement_basics():
    assert expected_improvement(np.array([0.0]), np.array([1e-15]), 1.0)[0] == pytest.approx(1.0)
    ei = expected_improvement(np.array([1.0, 1.0]), np.array([0.1, 1.0]), 1.0)
    assert ei[1] > ei[0] > 0


def test_beats_random_search():
    wins = 0
    for seed in range(20):
        bo = optimize(center_distance, SPACE, 10, seed=seed).best.score
        rs = random_search(center_distance, SPACE, 10, seed=seed).best.score
        wins += bo <= rs
    assert wins >= 14

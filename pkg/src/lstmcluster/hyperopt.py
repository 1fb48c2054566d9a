"""Bayesian optimization of the training configuration.

A Gaussian-process surrogate (Matern 5/2 on the unit-scaled box) is fitted to
the scores seen so far and the next configuration maximizes expected
improvement. Integer parameters are rounded before evaluation.
"""

from dataclasses import dataclass, field
import logging
import math
import time
import warnings

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

from .lstm import TrainConfig
from .seeding import substream, derived_seed

log = logging.getLogger(__name__)

PARAMS = ("cell_dim", "epoch_size", "minibatch_size", "lr_per_sample",
          "max_epochs", "noise_std", "l2_weight")
INTEGER = {"cell_dim", "epoch_size", "minibatch_size", "max_epochs"}


@dataclass(frozen=True)
class SearchSpace:
    """Closed interval per tunable parameter, keyed as in :data:`PARAMS`."""
    bounds: dict

    def __post_init__(self):
        missing = set(PARAMS) - set(self.bounds)
        if missing:
            raise ValueError(f"search space lacks {sorted(missing)}")
        for name, (lo, hi) in self.bounds.items():
            if not lo <= hi:
                raise ValueError(f"empty interval for {name}: {lo}..{hi}")

    @classmethod
    def default(cls, n_train):
        """The standard box; ``epoch_size`` scales with the training-set size."""
        n_train = max(int(n_train), 1)
        return cls({
            "cell_dim": (10, 80),
            "epoch_size": (n_train, 3 * n_train),
            "minibatch_size": (2, 40),
            "lr_per_sample": (0.001, 0.04),
            "max_epochs": (10, 40),
            "noise_std": (0.0005, 0.005),
            "l2_weight": (0.0005, 0.0008),
        })

    def narrowed(self, **bounds):
        """Copy with some intervals replaced (for budget-limited runs)."""
        merged = dict(self.bounds)
        merged.update({k: tuple(v) for k, v in bounds.items()})
        return SearchSpace(merged)

    def _lo_hi(self):
        lo = np.array([self.bounds[p][0] for p in PARAMS], dtype=float)
        hi = np.array([self.bounds[p][1] for p in PARAMS], dtype=float)
        return lo, hi

    def to_values(self, u):
        """Unit-box point to parameter values, integers rounded."""
        lo, hi = self._lo_hi()
        v = lo + np.clip(u, 0.0, 1.0) * (hi - lo)
        out = {}
        for i, p in enumerate(PARAMS):
            out[p] = int(round(v[i])) if p in INTEGER else float(v[i])
        return out

    def to_unit(self, values):
        lo, hi = self._lo_hi()
        v = np.array([values[p] for p in PARAMS], dtype=float)
        span = np.where(hi > lo, hi - lo, 1.0)
        return (v - lo) / span

    def config(self, u, seed):
        return TrainConfig(seed=seed, **self.to_values(u))


@dataclass
class Trial:
    config: TrainConfig
    score: float
    duration: float
    failed: bool = False
    error: str = ""


@dataclass
class OptimizationResult:
    best: Trial
    trials: list = field(default_factory=list)


def _run(objective, config):
    t0 = time.perf_counter()
    try:
        score = float(objective(config))
        failed = not math.isfinite(score)
        err = "non-finite score" if failed else ""
    except Exception as exc:                       # a failed trial is data, not a crash
        log.warning("trial failed: %s", exc)
        score, failed, err = math.inf, True, f"{type(exc).__name__}: {exc}"
    return Trial(config, score, time.perf_counter() - t0, failed, err)


def expected_improvement(mu, sigma, best):
    sigma = np.maximum(sigma, 1e-12)
    z = (best - mu) / sigma
    return (best - mu) * ndtr(z) + sigma * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def _fit_gp(X, y, seed):
    from sklearn.gaussian_process import GaussianProcessRegressor
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.gaussian_process.kernels import ConstantKernel, Matern

    kernel = ConstantKernel(1.0, (1e-3, 1e3)) * Matern(
        length_scale=0.5, length_scale_bounds=(1e-2, 1e2), nu=2.5)
    gp = GaussianProcessRegressor(kernel=kernel, alpha=1e-6, normalize_y=True,
                                  n_restarts_optimizer=2, random_state=seed)
    with warnings.catch_warnings():
        # a length scale pinned at its bound is expected on flat objectives
        warnings.simplefilter("ignore", ConvergenceWarning)
        gp.fit(X, y)
    return gp


def _propose(gp, best, dim, rng, n_random=1000, n_starts=8):
    cand = rng.random((n_random, dim))
    mu, sd = gp.predict(cand, return_std=True)
    ei = expected_improvement(mu, sd, best)
    starts = cand[np.argsort(-ei)[:n_starts]]

    def neg(u):
        m, s = gp.predict(u[None], return_std=True)
        return -float(expected_improvement(m, s, best)[0])

    top_u, top_v = starts[0], neg(starts[0])
    for s in starts:
        res = minimize(neg, s, method="L-BFGS-B", bounds=[(0.0, 1.0)] * dim,
                       options={"maxiter": 50})
        if res.fun < top_v:
            top_u, top_v = res.x, float(res.fun)
    return np.clip(top_u, 0.0, 1.0)


def optimize(objective, space, budget, seed=0, init_trials=5):
    """Minimize ``objective(TrainConfig)`` within ``budget`` evaluations.

    The first ``init_trials`` points are a scrambled Sobol design; later ones
    maximize expected improvement under the GP. Failed trials (exceptions or
    non-finite scores) are recorded and left out of the surrogate.
    """
    if budget < 2:
        raise ValueError("budget must be >= 2")
    dim = len(PARAMS)
    rng = substream(seed, "hyperopt")
    n_init = min(init_trials, budget)
    design = qmc.Sobol(dim, scramble=True, seed=derived_seed(seed, "hyperopt", 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)   # balance note for non powers of 2
        init = design.random(n_init)
    trials, seen = [], set()

    def evaluate(u):
        cfg = space.config(u, seed)
        seen.add(tuple(space.to_values(u).values()))
        trials.append(_run(objective, cfg))
        log.info("trial %d: score %.6g (%.2fs)", len(trials), trials[-1].score,
                 trials[-1].duration)

    for u in init:
        evaluate(u)
    while len(trials) < budget:
        ok = [t for t in trials if not t.failed]
        if len(ok) < 2:
            u = rng.random(dim)
        else:
            X = np.array([space.to_unit(t.config.to_dict()) for t in ok])
            y = np.array([t.score for t in ok])
            if np.ptp(y) == 0:
                u = rng.random(dim)
            else:
                gp = _fit_gp(X, y, derived_seed(seed, "hyperopt", len(trials)))
                u = _propose(gp, y.min(), dim, rng)
        for _ in range(20):                        # re-perturb exact duplicates
            if tuple(space.to_values(u).values()) not in seen:
                break
            u = np.clip(u + rng.normal(0.0, 0.05, dim), 0.0, 1.0)
        evaluate(u)
    ok = [t for t in trials if not t.failed]
    if not ok:
        raise RuntimeError(f"all {len(trials)} trials failed; last error: {trials[-1].error}")
    best = min(ok, key=lambda t: t.score)
    return OptimizationResult(best, trials)


def random_search(objective, space, budget, seed=0):
    """Uniform random configurations; the baseline the optimizer should beat."""
    rng = substream(seed, "hyperopt", 2)
    trials = [_run(objective, space.config(rng.random(len(PARAMS)), seed))
              for _ in range(budget)]
    ok = [t for t in trials if not t.failed]
    if not ok:
        raise RuntimeError("all trials failed")
    return OptimizationResult(min(ok, key=lambda t: t.score), trials)


def validation_score(model, prepared, plan):
    """Mean sMAPE of the reserved last output window, in data units.

    ``prepared`` is a list of :class:`~lstmcluster.prep.PreparedSeries` of
    the series that were trained with their final window held out.
    """
    from .evaluation import smape
    from .lstm import forward_inputs
    from .prep import unstabilize

    k = plan.output_size
    vals = []
    for p in prepared:
        origin = p.length - k
        X, levels = p.windows(plan, upto=origin)
        y = forward_inputs(model, X)[-1]
        f = p.invert(y, levels[-1], origin)
        truth = unstabilize(p.log_values[origin:], p.used_log_shift)
        vals.append(smape(f, truth))
    if not vals:
        raise ValueError("no validation series")
    return float(np.mean(vals))

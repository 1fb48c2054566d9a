"""Minimum-message-length Gaussian mixture clustering (Snob-style).

Each attribute is modelled as an independent Gaussian within a cluster.
Models are scored by the two-part message length

    I(H & D) = I(H) + I(D | H)

where I(H) states the number of clusters, their proportions and per-cluster
Gaussian parameters to the MML87 (Wallace-Freeman) precision, and I(D | H)
is the negative log-likelihood of the data under the mixture. All lengths are
in nats. The number of clusters is the one with the shortest message.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.special import gammaln

_EULER = 0.5772156649015329
# best known lattice quantizing constants (Conway & Sloane)
_KAPPA = {1: 1 / 12, 2: 5 / (36 * math.sqrt(3)), 3: 0.0785433, 4: 0.0766032,
          5: 0.0756254, 6: 0.0742437, 7: 0.0731162, 8: 0.0716821}


def lattice_term(dim):
    """``(D/2)(1 + log kappa_D)``: the MML87 quantization cost for D parameters."""
    if dim <= 0:
        return 0.0
    if dim in _KAPPA:
        return 0.5 * dim * (1.0 + math.log(_KAPPA[dim]))
    return -0.5 * dim * math.log(2 * math.pi) + 0.5 * math.log(dim * math.pi) - _EULER


@dataclass(frozen=True)
class MixtureModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    message_length: float
    var_floor: np.ndarray
    min_weight: float
    nll_path: tuple = field(default=(), repr=False, compare=False)

    @property
    def k(self):
        return self.weights.size

    @property
    def dim(self):
        return self.means.shape[1]


@dataclass(frozen=True)
class ClusterAssignment:
    labels: dict

    @property
    def n_clusters(self):
        return len(set(self.labels.values()))

    def groups(self):
        out = {}
        for sid, c in self.labels.items():
            out.setdefault(c, []).append(sid)
        return dict(sorted(out.items()))


def logsumexp(a, axis=1, keepdims=False):
    """Row-wise log-sum-exp over a 2-d array."""
    top = a.max(axis=axis, keepdims=True)
    out = np.log(np.exp(a - top).sum(axis=axis, keepdims=True)) + top
    return out if keepdims else out.squeeze(axis)


def _check(data):
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data must be a 2-d feature matrix")
    if not np.all(np.isfinite(data)):
        raise ValueError("data contains non-finite values")
    return data


def _log_density(data, means, variances):
    """(n, k) log N(x_i | mean_j, diag var_j)."""
    inv = 1.0 / variances
    quad = ((data ** 2) @ inv.T - 2.0 * data @ (means * inv).T
            + (means ** 2 * inv).sum(axis=1)[None, :])
    return -0.5 * (np.log(2 * np.pi * variances).sum(axis=1)[None, :] + quad)


def _log_joint(data, weights, means, variances):
    return _log_density(data, means, variances) + np.log(weights)[None, :]


def negative_log_likelihood(model, data):
    data = _check(data)
    return float(-logsumexp(_log_joint(data, model.weights, model.means,
                                       model.variances), axis=1).sum())


def _prior_ranges(data, var_floor):
    rng = np.ptp(data, axis=0)
    sd_min = np.sqrt(var_floor)
    mu_range = np.where(rng > 0, rng, 1.0)
    sd_max = np.maximum(mu_range, sd_min * math.e)
    return mu_range, np.log(sd_max / sd_min)


def model_cost(weights, variances, n, mu_range, log_sd_range):
    """Part (1): the length of the statement of the mixture itself."""
    k, d = variances.shape
    cost = k * math.log(2.0) - gammaln(k + 1)          # k, unordered labels
    if k > 1:
        cost += (-gammaln(k) + 0.5 * (k - 1) * math.log(n)
                 - 0.5 * np.log(weights).sum() + lattice_term(k - 1))
    nj = np.maximum(n * weights, 1.0)
    # per attribute: uniform prior on the mean, log-uniform on the sd
    per = (np.log(mu_range)[None, :] + np.log(log_sd_range)[None, :]
           - 0.5 * np.log(variances)
           + 0.5 * math.log(2.0) + np.log(nj)[:, None]
           + lattice_term(2))
    return float(cost + per.sum())


def message_length_parts(model, data):
    """(part1, part2) of the message length of ``data`` under ``model``."""
    data = _check(data)
    n, d = data.shape
    if d != model.dim:
        raise ValueError(f"data has {d} columns, model has {model.dim}")
    if np.any(model.weights < model.min_weight * (1 - 1e-9)):
        raise ValueError("model has a component below the minimum weight")
    mu_range, log_sd_range = _prior_ranges(data, model.var_floor)
    part1 = model_cost(model.weights, model.variances, n, mu_range, log_sd_range)
    part2 = negative_log_likelihood(model, data)
    return part1, part2


def message_length(model, data):
    """Total two-part message length (nats); lower is better."""
    p1, p2 = message_length_parts(model, data)
    return p1 + p2


def _floored_weights(counts, min_weight):
    """argmax of sum N_j log w_j subject to w_j >= min_weight, sum w = 1."""
    k = counts.size
    fixed = np.zeros(k, dtype=bool)
    while True:
        free_mass = 1.0 - min_weight * fixed.sum()
        total = counts[~fixed].sum()
        if total <= 0:
            w = np.where(fixed, min_weight, free_mass / max((~fixed).sum(), 1))
            break
        w = np.where(fixed, min_weight, counts * free_mass / total)
        low = (~fixed) & (w < min_weight)
        if not low.any():
            break
        fixed |= low
    return w / w.sum()


def _kmeanspp(data, k, rng):
    n = data.shape[0]
    centers = [data[rng.integers(n)]]
    d2 = ((data - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(data[idx])
        d2 = np.minimum(d2, ((data - data[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def default_floor(data):
    return np.maximum(1e-6 * np.var(data, axis=0), 1e-12)


def fit_mixture(data, k, seed=0, var_floor=None, min_weight=None,
                tol=1e-6, max_iter=500):
    """Fit a k-component diagonal Gaussian mixture by EM.

    Initial means come from k-means++ seeding; every component starts with
    the column variances and equal weight. The M-step is the exact maximizer
    under the weight and variance floors, so the likelihood never decreases.
    """
    data = _check(data)
    n, d = data.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of rows ({n})")
    var_floor = default_floor(data) if var_floor is None else np.asarray(var_floor, float)
    min_weight = 1.0 / (2 * n) if min_weight is None else min_weight
    rng = np.random.default_rng(seed)

    means = _kmeanspp(data, k, rng) if k > 1 else data.mean(axis=0, keepdims=True)
    variances = np.tile(np.maximum(np.var(data, axis=0), var_floor), (k, 1))
    weights = np.full(k, 1.0 / k)

    def pack(w, m, v, ml, path):
        return MixtureModel(w, m, v, ml, var_floor, min_weight, tuple(path))

    mu_range, log_sd_range = _prior_ranges(data, var_floor)
    path = []
    prev = None
    for _ in range(max_iter):
        log_joint = _log_joint(data, weights, means, variances)
        log_norm = logsumexp(log_joint, axis=1)
        nll = float(-log_norm.sum())
        path.append(nll)
        ml = model_cost(weights, variances, n, mu_range, log_sd_range) + nll
        if prev is not None and abs(prev - ml) <= tol * max(abs(ml), 1.0):
            break
        prev = ml
        resp = np.exp(log_joint - log_norm[:, None])
        counts = resp.sum(axis=0)
        weights = _floored_weights(counts, min_weight)
        occupied = counts > 0
        new_means = (resp.T @ data) / np.where(occupied, counts, 1.0)[:, None]
        means = np.where(occupied[:, None], new_means, means)
        safe = np.where(occupied, counts, 1.0)[:, None]
        new_var = (resp.T @ data ** 2) / safe - means ** 2
        variances = np.where(occupied[:, None], np.maximum(new_var, var_floor), variances)
    model = pack(weights, means, variances, 0.0, path)
    return replace(model, message_length=message_length(model, data))


def responsibilities(model, data):
    log_joint = _log_joint(_check(data), model.weights, model.means, model.variances)
    return np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))


def standardize(data):
    """Zero-mean, unit-variance columns; constant columns are dropped."""
    data = _check(data)
    sd = data.std(axis=0)
    keep = sd > 1e-12 * np.maximum(1.0, np.abs(data).max(axis=0))
    return (data[:, keep] - data[:, keep].mean(axis=0)) / sd[keep]


def default_max_k(n):
    return max(1, min(10, math.ceil(n / 5)))


def cluster(data, ids=None, max_k=None, restarts=10, seed=0):
    """Select the mixture with the shortest message over k = 1..max_k.

    Returns ``(model, assignment)``; the model lives in standardized feature
    space. Labels are by maximum responsibility (ties to the lowest index)
    and compacted so that no cluster index is empty.
    """
    raw = _check(data)
    n = raw.shape[0]
    if n == 0:
        raise ValueError("no data to cluster")
    ids = list(range(n)) if ids is None else list(ids)
    if len(ids) != n:
        raise ValueError("ids must match the number of rows")
    z = standardize(raw)
    if z.shape[1] == 0:
        z = np.zeros((n, 1))
    max_k = min(default_max_k(n) if max_k is None else max_k, n)
    best = None
    for k in range(1, max_k + 1):
        for r in range(1 if k == 1 else restarts):
            m = fit_mixture(z, k, seed=np.random.SeedSequence([seed, k, r]))
            if best is None or m.message_length < best.message_length - 1e-9:
                best = m
    labels = np.argmax(responsibilities(best, z), axis=1)
    used = sorted(set(labels.tolist()))
    remap = {c: i for i, c in enumerate(used)}
    return best, ClusterAssignment({sid: remap[int(c)] for sid, c in zip(ids, labels)})

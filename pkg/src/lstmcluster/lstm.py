"""Peephole LSTM with a bias-free linear head, trained by full BPTT.

One time step consumes one input window; all windows of a series form one
sequence, so the recurrent state runs across the whole series and is reset
to zeros between series. Row-vector convention throughout:

    i_t = sigma(h_{t-1} W_i + x_t U_i + P_i * C_{t-1} + b_i)
    f_t = sigma(h_{t-1} W_f + x_t U_f + P_f * C_{t-1} + b_f)
    g_t = tanh(h_{t-1} W_c + x_t U_c + b_c)
    C_t = f_t * C_{t-1} + i_t * g_t
    o_t = sigma(h_{t-1} W_o + x_t U_o + P_o * C_t + b_o)
    h_t = o_t * tanh(C_t),      y_t = h_t V
"""

from dataclasses import dataclass, field
import io
import logging
import zipfile

import numpy as np

from .seeding import substream

log = logging.getLogger(__name__)

GATES = ("i", "f", "c", "o")
CHECKPOINT_VERSION = 1


class TrainingDivergence(RuntimeError):
    """The training objective became non-finite."""


def _param_shapes(n, m, k):
    shapes = {}
    for g in GATES:
        shapes[f"W_{g}"] = (n, n)
        shapes[f"U_{g}"] = (m, n)
        shapes[f"b_{g}"] = (n,)
    for g in ("i", "f", "o"):
        shapes[f"P_{g}"] = (n,)
    shapes["V"] = (n, k)
    return shapes


@dataclass
class LstmModel:
    """All parameters of one group's network, keyed by name (``W_i``, ``P_o``, ``V`` ...)."""
    n: int
    m: int
    k: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = _param_shapes(self.n, self.m, self.k)
        for name, shape in shapes.items():
            arr = self.params.get(name)
            self.params[name] = (np.zeros(shape) if arr is None
                                 else np.asarray(arr, dtype=float).reshape(shape))
        unknown = set(self.params) - set(shapes)
        if unknown:
            raise ValueError(f"unknown parameters {sorted(unknown)}")

    @classmethod
    def zeros(cls, n, m, k):
        return cls(n, m, k)

    @classmethod
    def init_uniform(cls, n, m, k, seed, scale=0.05):
        rng = substream(seed, "init")
        params = {name: rng.uniform(-scale, scale, size=shape)
                  for name, shape in _param_shapes(n, m, k).items()}
        return cls(n, m, k, params)

    @property
    def names(self):
        return list(_param_shapes(self.n, self.m, self.k))

    def __getattr__(self, name):
        params = self.__dict__.get("params")
        if params is not None and name in params:
            return params[name]
        raise AttributeError(name)

    def copy(self):
        return LstmModel(self.n, self.m, self.k, {k: v.copy() for k, v in self.params.items()})

    def flat(self):
        return np.concatenate([self.params[name].ravel() for name in self.names])

    def with_flat(self, vec):
        vec = np.asarray(vec, dtype=float)
        out, pos = {}, 0
        for name, shape in _param_shapes(self.n, self.m, self.k).items():
            size = int(np.prod(shape))
            out[name] = vec[pos: pos + size].reshape(shape).copy()
            pos += size
        return LstmModel(self.n, self.m, self.k, out)

    def sq_norm(self):
        return float(sum(np.sum(v * v) for v in self.params.values()))

    def is_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.params.values())

    def _stacked(self):
        p = self.params
        W = np.concatenate([p[f"W_{g}"] for g in GATES], axis=1)
        U = np.concatenate([p[f"U_{g}"] for g in GATES], axis=1)
        b = np.concatenate([p[f"b_{g}"] for g in GATES])
        return W, U, b

    def save(self, path):
        """npz archive with fixed entry timestamps, so equal models give equal bytes."""
        arrays = {"version": np.array(CHECKPOINT_VERSION),
                  "shape": np.array([self.n, self.m, self.k])}
        arrays.update(self.params)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)),
                            buf.getvalue())

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            if int(z["version"]) != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {int(z['version'])}")
            n, m, k = (int(v) for v in z["shape"])
            params = {name: z[name] for name in _param_shapes(n, m, k)}
        return cls(n, m, k, params)


@dataclass
class LstmState:
    h: np.ndarray
    C: np.ndarray

    @classmethod
    def zeros(cls, n, batch=None):
        shape = (n,) if batch is None else (batch, n)
        return cls(np.zeros(shape), np.zeros(shape))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def cell_step(model, state, x):
    """One peephole-LSTM step; returns ``(new_state, h_t)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    p = model.params
    h, C = state.h, state.C
    i = _sigmoid(h @ p["W_i"] + x @ p["U_i"] + p["P_i"] * C + p["b_i"])
    f = _sigmoid(h @ p["W_f"] + x @ p["U_f"] + p["P_f"] * C + p["b_f"])
    g = np.tanh(h @ p["W_c"] + x @ p["U_c"] + p["b_c"])
    C_new = f * C + i * g
    o = _sigmoid(h @ p["W_o"] + x @ p["U_o"] + p["P_o"] * C_new + p["b_o"])
    h_new = o * np.tanh(C_new)
    return LstmState(h_new, C_new), h_new


def _forward(model, X, keep=False):
    """Batched forward pass. ``X`` is (B, T, m); returns outputs (B, T, k)."""
    B, T, _ = X.shape
    n = model.n
    W, U, b = model._stacked()
    p = model.params
    Pi, Pf, Po = p["P_i"], p["P_f"], p["P_o"]
    xu = X @ U + b                                 # (B, T, 4n)
    h = np.zeros((B, n))
    C = np.zeros((B, n))
    H = np.empty((B, T, n))
    cache = [] if keep else None
    for t in range(T):
        a = xu[:, t] + h @ W
        i = _sigmoid(a[:, :n] + Pi * C)
        f = _sigmoid(a[:, n:2 * n] + Pf * C)
        g = np.tanh(a[:, 2 * n:3 * n])
        C_new = f * C + i * g
        o = _sigmoid(a[:, 3 * n:] + Po * C_new)
        tc = np.tanh(C_new)
        h_new = o * tc
        if keep:
            cache.append((h, C, i, f, g, o, tc, C_new))
        h, C = h_new, C_new
        H[:, t] = h
    Y = H @ p["V"]
    return Y, H, cache


def _backward(model, X, H, cache, dY):
    """Gradients of ``sum(dY * Y)`` with respect to every parameter."""
    B, T, m = X.shape
    n = model.n
    W, _, _ = model._stacked()
    p = model.params
    Pi, Pf, Po = p["P_i"], p["P_f"], p["P_o"]
    dV = np.einsum("btn,btk->nk", H, dY)
    dHout = dY @ p["V"].T                          # (B, T, n)
    dA = np.empty((B, T, 4 * n))
    Hprev = np.empty((B, T, n))
    dPi = np.zeros(n)
    dPf = np.zeros(n)
    dPo = np.zeros(n)
    dh_next = np.zeros((B, n))
    dC_next = np.zeros((B, n))
    for t in range(T - 1, -1, -1):
        h_prev, C_prev, i, f, g, o, tc, C = cache[t]
        dh = dHout[:, t] + dh_next
        da_o = dh * tc * o * (1.0 - o)
        dC = dh * o * (1.0 - tc * tc) + dC_next + da_o * Po
        da_i = dC * g * i * (1.0 - i)
        da_f = dC * C_prev * f * (1.0 - f)
        da_c = dC * i * (1.0 - g * g)
        dPo += (da_o * C).sum(axis=0)
        dPi += (da_i * C_prev).sum(axis=0)
        dPf += (da_f * C_prev).sum(axis=0)
        da = np.concatenate([da_i, da_f, da_c, da_o], axis=1)
        dA[:, t] = da
        Hprev[:, t] = h_prev
        dh_next = da @ W.T
        dC_next = dC * f + da_i * Pi + da_f * Pf
    dW = np.einsum("btn,btg->ng", Hprev, dA)
    dU = np.einsum("btm,btg->mg", X, dA)
    db = dA.sum(axis=(0, 1))
    grads = {"V": dV, "P_i": dPi, "P_f": dPf, "P_o": dPo}
    for j, gname in enumerate(GATES):
        sl = slice(j * n, (j + 1) * n)
        grads[f"W_{gname}"] = dW[:, sl]
        grads[f"U_{gname}"] = dU[:, sl]
        grads[f"b_{gname}"] = db[sl]
    return grads


def _series_arrays(patches):
    ids = {p.series_id for p in patches}
    if len(ids) > 1:
        raise ValueError(f"patches from several series: {sorted(ids)}")
    X = np.array([p.input for p in patches], dtype=float)
    Y = np.array([p.target for p in patches], dtype=float)
    return X, Y


def forward_inputs(model, inputs):
    """Predictions for one series given its (T, m) input windows, in order."""
    X = np.asarray(inputs, dtype=float)[None]
    Y, _, _ = _forward(model, X)
    return Y[0]


def forward_series(model, patches):
    """Per-patch predictions (T, k), with state threaded over the patches."""
    X, _ = _series_arrays(patches)
    return forward_inputs(model, X)


def loss(predictions, targets):
    """Sum of squared errors."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch {predictions.shape} vs {targets.shape}")
    return float(np.sum((predictions - targets) ** 2))


def objective(model, patches, l2_weight=0.0):
    """Data loss of one series plus ``l2_weight * sum(theta ** 2)``."""
    X, Y = _series_arrays(patches)
    return loss(forward_inputs(model, X), Y) + l2_weight * model.sq_norm()


def _pad(seqs, width):
    T = max(s.shape[0] for s in seqs)
    out = np.zeros((len(seqs), T, width))
    mask = np.zeros((len(seqs), T, 1))
    for b, s in enumerate(seqs):
        out[b, : s.shape[0]] = s
        mask[b, : s.shape[0]] = 1.0
    return out, mask


def batch_gradient(model, inputs, targets, l2_weight=0.0):
    """Summed data loss and gradient over a batch of whole series.

    ``inputs``/``targets`` are lists of (T_b, m) / (T_b, k) arrays. The L2
    term is added once. Returns ``(data_loss, grads)``.
    """
    X, mask = _pad(inputs, model.m)
    Yt, _ = _pad(targets, model.k)
    Y, H, cache = _forward(model, X, keep=True)
    resid = (Y - Yt) * mask
    data_loss = float(np.sum(resid ** 2))
    grads = _backward(model, X, H, cache, 2.0 * resid)
    if l2_weight:
        for name, v in model.params.items():
            grads[name] = grads[name] + 2.0 * l2_weight * v
    return data_loss, grads


def backward_series(model, patches, l2_weight=0.0):
    """Exact gradient of :func:`objective` for one series (dict by parameter)."""
    X, Y = _series_arrays(patches)
    return batch_gradient(model, [X], [Y], l2_weight)[1]


def flat_grad(model, grads):
    return np.concatenate([grads[name].ravel() for name in model.names])


@dataclass(frozen=True)
class TrainConfig:
    cell_dim: int = 20
    epoch_size: int = None          # None: one pass over the training patches
    minibatch_size: int = 10
    lr_per_sample: float = 0.01
    max_epochs: int = 20
    noise_std: float = 0.001
    l2_weight: float = 0.0006
    seed: int = 0

    def __post_init__(self):
        if self.minibatch_size < 1 or self.cell_dim < 1:
            raise ValueError("cell_dim and minibatch_size must be >= 1")
        if self.epoch_size is not None and self.epoch_size < 1:
            raise ValueError("epoch_size must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def train(series_patches, config, clip_norm=10.0, history=None):
    """Fit a model to whole-series patch sequences with minibatch SGD.

    ``series_patches`` is a list (one entry per series) of ordered patch
    lists. Each epoch walks the series in a seeded shuffled order, wrapping,
    until ``epoch_size`` patches have been consumed; every
    ``minibatch_size`` series the summed gradient (clipped to ``clip_norm``)
    is applied with step ``lr_per_sample``. Fresh Gaussian noise is added to
    the inputs on every visit. ``history`` collects the per-epoch data loss.
    """
    seqs = [_series_arrays(p) for p in series_patches if len(p)]
    if not seqs:
        raise ValueError("no training patches")
    m, k = seqs[0][0].shape[1], seqs[0][1].shape[1]
    model = LstmModel.init_uniform(config.cell_dim, m, k, config.seed)
    shuffle_rng = substream(config.seed, "shuffle")
    noise_rng = substream(config.seed, "noise")
    lengths = [x.shape[0] for x, _ in seqs]
    epoch_size = config.epoch_size or sum(lengths)
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(len(seqs))
        visits, consumed, pos = [], 0, 0
        while consumed < epoch_size:
            s = int(order[pos % len(order)])
            visits.append(s)
            consumed += lengths[s]
            pos += 1
        epoch_loss = 0.0
        for start in range(0, len(visits), config.minibatch_size):
            batch = visits[start: start + config.minibatch_size]
            inputs = []
            for s in batch:
                x = seqs[s][0]
                if config.noise_std > 0:
                    x = x + noise_rng.normal(0.0, config.noise_std, size=x.shape)
                inputs.append(x)
            targets = [seqs[s][1] for s in batch]
            with np.errstate(over="ignore", invalid="ignore"):   # checked just below
                data_loss, grads = batch_gradient(model, inputs, targets, config.l2_weight)
                norm = np.sqrt(sum(np.sum(g * g) for g in grads.values()))
            if not (np.isfinite(data_loss) and np.isfinite(norm)):
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}")
            scale = config.lr_per_sample * (min(1.0, clip_norm / norm) if norm > 0 else 1.0)
            with np.errstate(over="ignore", invalid="ignore"):
                for name in model.params:
                    model.params[name] -= scale * grads[name]
            epoch_loss += data_loss
        if not model.is_finite():
            raise TrainingDivergence(f"non-finite parameters after epoch {epoch}")
        if history is not None:
            history.append(epoch_loss)
    return model

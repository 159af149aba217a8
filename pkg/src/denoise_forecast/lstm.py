"""Stacked LSTM regressor in plain numpy.

Architecture: LSTM layers (default 150 then 50 units) -> inverted dropout on
the last layer's final hidden state -> one linear output unit. Gates use the
logistic sigmoid; the cell candidate and the cell output use ``tanh``.
Gradients come from backpropagation through time, parameters are updated by
Adam on a mean-squared-error loss.

Gate blocks are stacked along the first axis of ``W``/``U``/``b`` in the
order of :data:`GATES`.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_bytes
from .errors import DivergedLoss, EmptyDataset, NonFiniteInput, ShapeMismatch, StaleCache

GATES = ("input", "forget", "cell", "output")
DEFAULT_HIDDEN = (150, 50)
DEFAULT_DROPOUT = 0.2
CHECKPOINT_VERSION = 1


def _sigmoid(z):
    # split to keep exp() from overflowing for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LstmLayerParams:
    input_dim: int
    hidden_dim: int
    W: np.ndarray  # (4H, D)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmLayerParams":
        H = hidden_dim
        lim_w = 1.0 / np.sqrt(input_dim)
        lim_u = 1.0 / np.sqrt(hidden_dim)
        W = rng.uniform(-lim_w, lim_w, size=(4 * H, input_dim))
        U = rng.uniform(-lim_u, lim_u, size=(4 * H, H))
        b = np.zeros(4 * H)
        b[H : 2 * H] = 1.0  # forget gate
        return cls(input_dim, hidden_dim, W, U, b)

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views ``(W_g, U_g, b_g)`` of one gate's parameters."""
        k = GATES.index(name)
        H = self.hidden_dim
        rows = slice(k * H, (k + 1) * H)
        return self.W[rows], self.U[rows], self.b[rows]


@dataclass
class LstmNetwork:
    layers: list[LstmLayerParams]
    dense_w: np.ndarray  # (1, H_last)
    dense_b: np.ndarray  # (1,)
    dropout_rate: float = DEFAULT_DROPOUT
    rng_seed: int = 0
    version: int = field(default=0, compare=False)

    @classmethod
    def create(
        cls,
        input_dim: int,
        hidden: tuple[int, ...] = DEFAULT_HIDDEN,
        dropout_rate: float = DEFAULT_DROPOUT,
        seed: int = 0,
    ) -> "LstmNetwork":
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
        if not hidden:
            raise ValueError("at least one LSTM layer is required")
        rng = np.random.default_rng(seed)
        layers = []
        d = input_dim
        for h in hidden:
            layers.append(LstmLayerParams.initialize(d, h, rng))
            d = h
        lim = 1.0 / np.sqrt(d)
        dense_w = rng.uniform(-lim, lim, size=(1, d))
        return cls(layers, dense_w, np.zeros(1), float(dropout_rate), int(seed))

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(layer.hidden_dim for layer in self.layers)

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every parameter tensor, in checkpoint order."""
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"layer{i}.W"] = layer.W
            out[f"layer{i}.U"] = layer.U
            out[f"layer{i}.b"] = layer.b
        out["dense.w"] = self.dense_w
        out["dense.b"] = self.dense_b
        return out

    def copy(self) -> "LstmNetwork":
        layers = [
            LstmLayerParams(l.input_dim, l.hidden_dim, l.W.copy(), l.U.copy(), l.b.copy()) for l in self.layers
        ]
        return LstmNetwork(layers, self.dense_w.copy(), self.dense_b.copy(), self.dropout_rate, self.rng_seed)

    def predict(self, batch) -> np.ndarray:
        return lstm_forward(self, batch, training=False)[0]


@dataclass
class LayerCache:
    inputs: np.ndarray  # (B, T, D)
    h: np.ndarray  # (B, T+1, H), h[:, 0] is the zero initial state
    c: np.ndarray  # (B, T+1, H)
    i: np.ndarray  # (B, T, H) gate activations
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray  # (B, T, H)


@dataclass
class ForwardCache:
    layers: list[LayerCache]
    mask: np.ndarray | None  # (B, H_last) inverted-dropout multipliers
    features: np.ndarray  # (B, H_last) dense-layer input
    predictions: np.ndarray  # (B,)
    version: int
    network_id: int


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted dropout multipliers: 0 with probability ``rate``, else ``1 / (1 - rate)``."""
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _layer_forward(layer: LstmLayerParams, x: np.ndarray) -> LayerCache:
    B, T, _ = x.shape
    H = layer.hidden_dim
    h = np.zeros((B, T + 1, H))
    c = np.zeros((B, T + 1, H))
    gi, gf, gg, go, tc = (np.empty((B, T, H)) for _ in range(5))
    # input projections for all timesteps at once
    zx = x @ layer.W.T + layer.b
    UT = layer.U.T
    for t in range(T):
        z = zx[:, t] + h[:, t] @ UT
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c[:, t + 1] = f * c[:, t] + i * g
        tanh_ct = np.tanh(c[:, t + 1])
        h[:, t + 1] = o * tanh_ct
        gi[:, t], gf[:, t], gg[:, t], go[:, t], tc[:, t] = i, f, g, o, tanh_ct
    return LayerCache(x, h, c, gi, gf, gg, go, tc)


def lstm_forward(
    net: LstmNetwork, batch, training: bool = False, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on ``batch`` of shape ``(B, T, D)``; returns ``(predictions, cache)``.

    Dropout is applied only when ``training`` is true and the rate is
    positive, and then ``rng`` is required. Inference never draws random
    numbers.
    """
    x = np.asarray(batch, dtype=float)
    if x.ndim != 3 or x.shape[0] == 0 or x.shape[1] == 0:
        raise ShapeMismatch(f"batch must have shape (B>0, T>0, D), got {x.shape}")
    if x.shape[2] != net.input_dim:
        raise ShapeMismatch(f"feature dimension {x.shape[2]} != network input_dim {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("batch contains NaN or Inf")

    caches = []
    seq = x
    for layer in net.layers:
        lc = _layer_forward(layer, seq)
        caches.append(lc)
        seq = lc.h[:, 1:]
    last = caches[-1].h[:, -1]

    mask = None
    if training and net.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training with dropout needs an rng")
        mask = dropout_mask(rng, last.shape, net.dropout_rate)
        features = last * mask
    else:
        features = last
    pred = features @ net.dense_w[0] + net.dense_b[0]
    return pred, ForwardCache(caches, mask, features, pred, net.version, id(net))


def mse_loss(predictions, targets) -> float:
    r = np.asarray(predictions, dtype=float) - np.asarray(targets, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean(r * r))


def _layer_backward(layer: LstmLayerParams, lc: LayerCache, dH: np.ndarray):
    B, T, H = dH.shape
    dW = np.zeros_like(layer.W)
    dU = np.zeros_like(layer.U)
    db = np.zeros_like(layer.b)
    dX = np.empty_like(lc.inputs)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    dz = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        i, f, g, o, tc = lc.i[:, t], lc.f[:, t], lc.g[:, t], lc.o[:, t], lc.tanh_c[:, t]
        dh = dH[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H : 2 * H] = dc * lc.c[:, t] * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
        dW += dz.T @ lc.inputs[:, t]
        dU += dz.T @ lc.h[:, t]
        db += dz.sum(axis=0)
        dX[:, t] = dz @ layer.W
        dh_next = dz @ layer.U
        dc_next = dc * f
    return dW, dU, db, dX


def lstm_backward(net: LstmNetwork, cache: ForwardCache, targets) -> dict[str, np.ndarray]:
    """Gradients of ``mean((pred - target)**2)`` for every tensor in ``net.parameters()``."""
    if cache.network_id != id(net) or cache.version != net.version:
        raise StaleCache("cache does not come from the current parameters of this network")
    y = np.asarray(targets, dtype=float).ravel()
    pred = cache.predictions
    if y.shape != pred.shape:
        raise ShapeMismatch(f"{len(y)} targets for {len(pred)} predictions")

    dpred = 2.0 * (pred - y) / len(y)
    grads: dict[str, np.ndarray] = {}
    grads["dense.w"] = (dpred @ cache.features)[None, :]
    grads["dense.b"] = np.array([dpred.sum()])

    d_last = dpred[:, None] * net.dense_w[0][None, :]
    if cache.mask is not None:
        d_last = d_last * cache.mask
    top = cache.layers[-1]
    dH = np.zeros(top.h[:, 1:].shape)
    dH[:, -1] = d_last
    for idx in range(len(net.layers) - 1, -1, -1):
        dW, dU, db, dX = _layer_backward(net.layers[idx], cache.layers[idx], dH)
        grads[f"layer{idx}.W"], grads[f"layer{idx}.U"], grads[f"layer{idx}.b"] = dW, dU, db
        dH = dX
    return {k: grads[k] for k in net.parameters()}


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params, grads: dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``params`` is a name -> array mapping or an :class:`LstmNetwork` (whose
    version counter is then advanced so old forward caches become stale).
    Returns ``(params, state)``.
    """
    net = params if isinstance(params, LstmNetwork) else None
    tensors = net.parameters() if net is not None else params
    if set(tensors) != set(grads):
        raise ShapeMismatch(f"parameter/gradient names differ: {sorted(set(tensors) ^ set(grads))}")
    for name, p in tensors.items():
        if np.shape(grads[name]) != p.shape:
            raise ShapeMismatch(f"{name}: gradient shape {np.shape(grads[name])} != parameter shape {p.shape}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name, p in tensors.items():
        g = grads[name]
        if name not in state.first_moment:
            state.first_moment[name] = np.zeros_like(p)
            state.second_moment[name] = np.zeros_like(p)
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    if net is not None:
        net.version += 1
    return params, state


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    sequence_length: int | None = None
    shuffle: bool = True


def train(net: LstmNetwork, X, y, config: TrainConfig | None = None) -> tuple[LstmNetwork, list[float]]:
    """Mini-batch Adam on MSE for ``config.epochs`` epochs; ``net`` is updated in place.

    The incomplete final batch of each epoch is dropped. Shuffling and
    dropout masks both draw from one generator seeded by ``config.seed``, so
    identical inputs give identical parameter trajectories. Returns the net
    and the mean training loss of each epoch.
    """
    config = config or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 3 or len(X) != len(y):
        raise ShapeMismatch(f"expected X of shape (N, T, D) with N == len(y); got {X.shape} and {y.shape}")
    if config.sequence_length is not None and X.shape[1] != config.sequence_length:
        raise ShapeMismatch(f"sequences have length {X.shape[1]}, config expects {config.sequence_length}")
    n_batches = len(X) // config.batch_size
    if n_batches == 0:
        raise EmptyDataset(f"{len(X)} samples cannot fill one batch of {config.batch_size}")

    rng = np.random.default_rng(config.seed)
    state = AdamState(learning_rate=config.learning_rate)
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(X)) if config.shuffle else np.arange(len(X))
        total = 0.0
        for b in range(n_batches):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            pred, cache = lstm_forward(net, X[idx], training=True, rng=rng)
            loss = mse_loss(pred, y[idx])
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            grads = lstm_backward(net, cache, y[idx])
            adam_step(net, grads, state)
            total += loss
        losses.append(total / n_batches)
    return net, losses


def save_checkpoint(net: LstmNetwork, path, metadata: dict | None = None) -> None:
    """Write dims, dropout rate, seed and every parameter tensor to an ``.npz`` container."""
    params = net.parameters()
    header = {
        "format": "denoise-forecast-lstm",
        "version": CHECKPOINT_VERSION,
        "input_dim": net.input_dim,
        "hidden_dims": list(net.hidden_dims),
        "dropout_rate": net.dropout_rate,
        "rng_seed": net.rng_seed,
        "tensors": list(params),
        "metadata": metadata or {},
    }
    buf = io.BytesIO()
    np.savez(buf, __header__=np.array(json.dumps(header, sort_keys=True)), **params)
    atomic_write_bytes(path, buf.getvalue())


def load_checkpoint(path) -> tuple[LstmNetwork, dict]:
    """Inverse of :func:`save_checkpoint`; returns ``(network, metadata)``."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        if header.get("format") != "denoise-forecast-lstm":
            raise ValueError(f"{path} is not a model checkpoint")
        if header["version"] > CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint version {header['version']} is newer than supported ({CHECKPOINT_VERSION})")
        tensors = {name: data[name].copy() for name in header["tensors"]}
    layers = []
    d = header["input_dim"]
    for i, h in enumerate(header["hidden_dims"]):
        layers.append(LstmLayerParams(d, h, tensors[f"layer{i}.W"], tensors[f"layer{i}.U"], tensors[f"layer{i}.b"]))
        d = h
    net = LstmNetwork(layers, tensors["dense.w"], tensors["dense.b"], header["dropout_rate"], header["rng_seed"])
    return net, header["metadata"]

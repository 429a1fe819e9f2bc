"""GCN -> LSTM -> MLP next-snapshot predictor.

Each input adjacency is embedded by one graph convolution whose weights are
shared across the window, the flattened embeddings are rolled through a
single LSTM layer from a zero state, and the final *cell* state is decoded by
an MLP into the strict upper triangle of the next adjacency matrix.

All forward functions accept plain arrays or tape variables for the
parameters, so the same code serves inference and training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from moldgnn.errors import ConfigError, ShapeError
from moldgnn.numerics import Rng, concat, matmul, relu, reshape, sigmoid, tanh, value_of

GATES = ("f", "i", "c", "o")  # forget, input, modulation, output
NODE_FEATURES = ("adjacency", "identity")


@dataclass(frozen=True)
class ModelConfig:
    n_atoms: int
    window: int = 10
    gcn_features: int = 64
    lstm_features: int = 128
    mlp_hidden: tuple[int, ...] = (256,)
    node_features: str = "adjacency"

    def __post_init__(self):
        object.__setattr__(self, "mlp_hidden", tuple(int(h) for h in self.mlp_hidden))
        sizes = [self.n_atoms, self.window, self.gcn_features, self.lstm_features, *self.mlp_hidden]
        if any(int(s) <= 0 for s in sizes):
            raise ConfigError(f"model sizes must be positive, got {self}")
        if self.n_atoms < 2:
            raise ConfigError("need at least 2 atoms")
        if self.node_features not in NODE_FEATURES:
            raise ConfigError(f"node_features must be one of {NODE_FEATURES}, got {self.node_features!r}")

    @property
    def n_edges(self) -> int:
        return self.n_atoms * (self.n_atoms - 1) // 2

    @property
    def lstm_input(self) -> int:
        return self.n_atoms * self.gcn_features

    def to_dict(self) -> dict:
        return {
            "n_atoms": self.n_atoms,
            "window": self.window,
            "gcn_features": self.gcn_features,
            "lstm_features": self.lstm_features,
            "mlp_hidden": list(self.mlp_hidden),
            "node_features": self.node_features,
        }

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Every parameter name and shape, in storage order."""
        n, fg, fl = self.n_atoms, self.gcn_features, self.lstm_features
        shapes: dict[str, tuple[int, ...]] = {"gcn.W": (n, fg)}
        for g in GATES:
            shapes[f"lstm.W_{g}"] = (fl, fl + self.lstm_input)
            shapes[f"lstm.b_{g}"] = (fl,)
        widths = [fl, *self.mlp_hidden, self.n_edges]
        for k, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
            shapes[f"mlp.{k}.W"] = (fan_out, fan_in)
            shapes[f"mlp.{k}.b"] = (fan_out,)
        return shapes


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.config.param_shapes()
        if list(self.arrays) != list(expected):
            raise ShapeError(f"parameter names {list(self.arrays)} do not match {list(expected)}")
        for name, shape in expected.items():
            if self.arrays[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {self.arrays[name].shape}")

    @property
    def count(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def gcn(self):
        return self.arrays["gcn.W"]

    def lstm(self) -> "LstmParams":
        return LstmParams.from_mapping(self.arrays)

    def mlp(self) -> list:
        return mlp_layers(self.arrays)


@dataclass
class LstmParams:
    W: dict  # gate -> (F_l, F_l + D_in)
    b: dict  # gate -> (F_l,)

    @classmethod
    def from_mapping(cls, p: Mapping) -> "LstmParams":
        return cls({g: p[f"lstm.W_{g}"] for g in GATES}, {g: p[f"lstm.b_{g}"] for g in GATES})

    @property
    def features(self) -> int:
        return value_of(self.b["f"]).shape[0]


@dataclass
class LstmState:
    h: object
    c: object


def mlp_layers(p: Mapping) -> list:
    layers = []
    k = 0
    while f"mlp.{k}.W" in p:
        layers.append((p[f"mlp.{k}.W"], p[f"mlp.{k}.b"]))
        k += 1
    return layers


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, forget-gate bias 1."""
    rng = Rng(seed, "init")
    arrays = {}
    for name, shape in config.param_shapes().items():
        if len(shape) == 1:
            arrays[name] = np.ones(shape) if name == "lstm.b_f" else np.zeros(shape)
            continue
        if name == "gcn.W":
            fan_in, fan_out = shape
        else:
            fan_out, fan_in = shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        arrays[name] = rng.uniform(-bound, bound, shape)
    return ModelParams(config, arrays)


# --------------------------------------------------------------------------
# graph convolution


def check_adjacency(a: np.ndarray) -> None:
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ShapeError(f"adjacency must be square, got shape {a.shape}")
    if not np.array_equal(a, np.swapaxes(a, -1, -2)):
        raise ShapeError("adjacency is not symmetric")
    if np.any(np.diagonal(a, axis1=-2, axis2=-1) != 0.0):
        raise ShapeError("adjacency has a non-zero diagonal")


def gcn_filter(a: np.ndarray) -> np.ndarray:
    """Symmetric normalization D^-1/2 (A + I) D^-1/2, batched over leading axes."""
    check_adjacency(a)
    a_hat = a + np.eye(a.shape[-1])
    deg = a_hat.sum(axis=-1)
    if np.any(deg <= 0):
        raise ShapeError("self-loop degree is not positive; adjacency has large negative weights")
    d = 1.0 / np.sqrt(deg)
    return d[..., :, None] * a_hat * d[..., None, :]


def propagate(a: np.ndarray, node_features: str = "adjacency") -> np.ndarray:
    """Filtered node features (everything left of the weight matrix); no parameters involved."""
    filt = gcn_filter(a)
    if node_features == "adjacency":
        return filt @ a
    if node_features == "identity":
        return filt
    raise ConfigError(f"unknown node_features {node_features!r}")


def gcn_forward(a: np.ndarray, weight, node_features: str = "adjacency"):
    """ReLU(filter(A) @ Z @ W) for one adjacency or a stack of them."""
    a = np.asarray(a, dtype=np.float64)
    return gcn_from_propagated(propagate(a, node_features), weight)


def gcn_from_propagated(prop: np.ndarray, weight):
    if prop.shape[-1] != value_of(weight).shape[0]:
        raise ShapeError(f"gcn weight shape {value_of(weight).shape} does not fit {prop.shape[-2:]} input")
    return relu(matmul(prop, weight))


# --------------------------------------------------------------------------
# recurrence


def zero_state(batch: int | None, features: int) -> LstmState:
    shape = (features,) if batch is None else (batch, features)
    return LstmState(np.zeros(shape), np.zeros(shape))


def lstm_cell_step(x, prev: LstmState, params: LstmParams) -> LstmState:
    """One LSTM update on the concatenation [h_prev, x].

    ``x`` is a vector or a (batch, D_in) matrix; the state matches.
    """
    fl = params.features
    xv = value_of(x)
    d_in = value_of(params.W["f"]).shape[1] - fl
    if xv.shape[-1] != d_in:
        raise ShapeError(f"lstm input width {xv.shape[-1]} does not match weights expecting {d_in}")
    if value_of(prev.h).shape[-1] != fl or value_of(prev.c).shape[-1] != fl:
        raise ShapeError(f"lstm state width does not match {fl} features")
    vector = xv.ndim == 1
    if vector:
        x = reshape(x, (1, d_in))
        prev = LstmState(reshape(prev.h, (1, fl)), reshape(prev.c, (1, fl)))

    hx = concat([prev.h, x], axis=-1)
    pre = {g: matmul(hx, params.W[g].T) + params.b[g] for g in GATES}
    f_t = sigmoid(pre["f"])
    i_t = sigmoid(pre["i"])
    c_tilde = tanh(pre["c"])
    o_t = sigmoid(pre["o"])
    c_t = f_t * prev.c + i_t * c_tilde
    h_t = o_t * tanh(c_t)

    if vector:
        return LstmState(reshape(h_t, (fl,)), reshape(c_t, (fl,)))
    return LstmState(h_t, c_t)


# --------------------------------------------------------------------------
# full predictor


def mlp_forward(x, layers: Sequence):
    for k, (w, b) in enumerate(layers):
        x = matmul(x, w.T) + b
        if k < len(layers) - 1:
            x = relu(x)
    return x


def forward_propagated(prop: np.ndarray, params: Mapping, config: ModelConfig):
    """Edge predictions (batch, n_edges) from propagated inputs (batch, W, N, N)."""
    batch, window, n, _ = prop.shape
    if window != config.window:
        raise ShapeError(f"window length {window} does not match model window {config.window}")
    if n != config.n_atoms:
        raise ShapeError(f"input has {n} atoms, model expects {config.n_atoms}")
    lstm = LstmParams.from_mapping(params)
    state = zero_state(batch, config.lstm_features)
    for t in range(window):
        x_t = gcn_from_propagated(prop[:, t], params["gcn.W"])
        state = lstm_cell_step(reshape(x_t, (batch, config.lstm_input)), state, lstm)
    return mlp_forward(state.c, mlp_layers(params))


def window_array(window) -> np.ndarray:
    """Stack a window of snapshots (or pass through an array) as (W, N, N)."""
    if isinstance(window, np.ndarray):
        return np.asarray(window, dtype=np.float64)
    return np.stack([getattr(s, "adjacency", s) for s in window])


def upper_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, 1)


def assemble_adjacency(edges: np.ndarray, n: int) -> np.ndarray:
    """Write edge vectors into the strict upper triangle and mirror; zero diagonal."""
    edges = np.asarray(edges)
    out = np.zeros(edges.shape[:-1] + (n, n))
    iu = upper_indices(n)
    out[..., iu[0], iu[1]] = edges
    out[..., iu[1], iu[0]] = edges
    return out


def upper_edges(a: np.ndarray) -> np.ndarray:
    iu = upper_indices(a.shape[-1])
    return a[..., iu[0], iu[1]]


def predict_batch(windows: np.ndarray, params: ModelParams) -> np.ndarray:
    """(batch, W, N, N) normalized windows -> (batch, N, N) predicted adjacencies."""
    cfg = params.config
    prop = propagate(windows, cfg.node_features)
    edges = forward_propagated(prop, params.arrays, cfg)
    return assemble_adjacency(edges, cfg.n_atoms)


def predict_next(window, params: ModelParams) -> np.ndarray:
    """Next normalized adjacency from a window of W normalized snapshots."""
    arr = window_array(window)
    if arr.ndim != 3:
        raise ShapeError(f"window must be (W, N, N), got {arr.shape}")
    return predict_batch(arr[None], params)[0]

"""Loss, Adam and the minibatch training / finetuning loops."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from moldgnn.errors import ConfigError, NumericError, ShapeError
from moldgnn.graphdata import Normalizer, WindowSample
from moldgnn.model import (
    ModelConfig,
    ModelParams,
    forward_propagated,
    init_params,
    propagate,
    upper_edges,
)
from moldgnn.numerics import Rng, Tape, mean_all

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5.0e-3
    epochs: int = 5000
    batch_size: int = 400
    window: int = 10
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    clip_norm: float | None = None
    init_checkpoint: str | None = None
    sample_budget: int = 400
    epoch_budget: int = 500

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ConfigError("learning rate and epsilon must be positive")
        if self.epochs < 0 or self.epoch_budget < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.batch_size < 1 or self.window < 1 or self.sample_budget < 1:
            raise ConfigError("batch size, window and sample budget must be positive")
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ConfigError(f"adam betas must lie in [0, 1), got {self.betas}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive when set")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})

    def copy(self) -> "AdamState":
        return AdamState({k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()}, self.t)


@dataclass
class Checkpoint:
    params: ModelParams
    normalizer: Normalizer
    config: TrainConfig
    epoch: int = 0
    loss_history: list[float] = field(default_factory=list)
    adam: AdamState | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def rng_state(self) -> dict:
        # shuffles are keyed by (seed, epoch), so these two fix the stream position
        return {"algorithm": "PCG64", "seed": self.config.seed, "epoch": self.epoch}

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.params.arrays.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def loss_mse(predicted: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over the strict upper triangle."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ShapeError(f"loss_mse: shape mismatch {predicted.shape} vs {target.shape}")
    d = upper_edges(predicted) - upper_edges(target)
    return float(np.mean(d * d))


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied in place."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
    b1, b2 = config.betas
    state.t += 1
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, g in grads.items():
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params[name] -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)
    return params, state


# --------------------------------------------------------------------------
# data staging


def stage_samples(samples: Sequence[WindowSample], config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Propagated inputs (S, W, N, N) and target edge vectors (S, n_edges)."""
    if not samples:
        raise ShapeError("empty sample list")
    for k, s in enumerate(samples):
        if s.n_atoms != config.n_atoms or any(x.n_atoms != config.n_atoms for x in s.inputs):
            raise ShapeError(f"sample {k} has {s.n_atoms} atoms, model expects {config.n_atoms}")
        if s.window != config.window:
            raise ShapeError(f"sample {k} has window {s.window}, model expects {config.window}")
    cache: dict[int, np.ndarray] = {}
    n = config.n_atoms
    prop = np.empty((len(samples), config.window, n, n))
    for k, s in enumerate(samples):
        for t, snap in enumerate(s.inputs):
            key = id(snap)
            if key not in cache:
                cache[key] = propagate(snap.adjacency, config.node_features)
            prop[k, t] = cache[key]
    targets = np.stack([upper_edges(s.target.adjacency) for s in samples])
    return prop, targets


def batch_loss_and_grads(
    params: dict[str, np.ndarray], config: ModelConfig, prop: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared edge error over a batch and its gradient for every parameter."""
    tape = Tape()
    leaves = {name: tape.leaf(arr, name) for name, arr in params.items()}
    pred = forward_propagated(prop, leaves, config)
    diff = pred - targets
    loss = mean_all(diff * diff)
    return float(loss.value), tape.backward(loss)


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        for g in grads.values():
            g *= max_norm / total


# --------------------------------------------------------------------------
# loops


def train(
    dataset: Sequence[WindowSample],
    config: TrainConfig,
    init: ModelParams | Checkpoint | None = None,
    normalizer: Normalizer | None = None,
    model_config: ModelConfig | None = None,
    stop_epoch: int | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> Checkpoint:
    """Minibatch Adam on normalized windows.

    ``init`` selects the starting point: ``None`` draws fresh weights for
    ``model_config``, a :class:`ModelParams` starts from those weights with a
    fresh optimizer, and a :class:`Checkpoint` resumes exactly where it
    stopped. Training runs to ``config.epochs`` or ``stop_epoch`` if smaller.
    """
    if not dataset:
        raise ShapeError("cannot train on an empty dataset")
    start_epoch, history, adam, provenance = 0, [], None, {}
    if isinstance(init, Checkpoint):
        params = init.params.copy()
        normalizer = normalizer or init.normalizer
        start_epoch = init.epoch
        history = list(init.loss_history)
        adam = init.adam.copy() if init.adam is not None else None
        provenance = dict(init.provenance)
    elif isinstance(init, ModelParams):
        params = init.copy()
    else:
        if model_config is None:
            model_config = ModelConfig(dataset[0].n_atoms, window=config.window)
        params = init_params(model_config, config.seed)
    if normalizer is None:
        raise ConfigError("train needs the normalizer used to scale the dataset")
    mcfg = params.config
    if config.batch_size > len(dataset):
        raise ConfigError(f"batch size {config.batch_size} exceeds training set size {len(dataset)}")

    prop, targets = stage_samples(dataset, mcfg)
    arrays = params.arrays
    if adam is None:
        adam = AdamState.zeros_like(arrays)
    end = config.epochs if stop_epoch is None else min(stop_epoch, config.epochs)
    n = len(dataset)
    bs = config.batch_size

    for epoch in range(start_epoch, end):
        order = Rng(config.seed, "shuffle", epoch).permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, bs)):
            idx = order[lo : lo + bs]
            loss, grads = batch_loss_and_grads(arrays, mcfg, prop[idx], targets[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            if config.clip_norm is not None:
                _clip(grads, config.clip_norm)
            try:
                adam_step(arrays, grads, adam, config)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from None
            total += loss * len(idx)
        history.append(total / n)
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
        if epoch % 100 == 0 or epoch == end - 1:
            log.info("epoch %d loss %.6e", epoch, history[-1])

    return Checkpoint(params, normalizer, config, end if end > start_epoch else start_epoch, history, adam, provenance)


def finetune(
    base: Checkpoint,
    dataset: Sequence[WindowSample],
    samples: int = 400,
    epochs: int = 500,
    batch_size: int | None = None,
    base_path: str | None = None,
) -> Checkpoint:
    """Continue training ``base`` on the first ``samples`` windows of a new trajectory.

    ``dataset`` must already be normalized with ``base.normalizer`` and be in
    chronological order. The optimizer starts from scratch.
    """
    if dataset and dataset[0].n_atoms != base.params.config.n_atoms:
        raise ShapeError(
            f"base model has {base.params.config.n_atoms} atoms, new trajectory has {dataset[0].n_atoms}"
        )
    if samples > len(dataset):
        raise ConfigError(f"sample budget {samples} exceeds the {len(dataset)} available windows")
    subset = list(dataset[:samples])
    bs = min(batch_size or base.config.batch_size, len(subset))
    config = dataclasses.replace(
        base.config, epochs=epochs, batch_size=bs, sample_budget=samples, epoch_budget=epochs
    )
    out = train(subset, config, init=base.params, normalizer=base.normalizer)
    out.provenance = {
        "base_digest": base.digest(),
        "base_epoch": base.epoch,
        "base_path": base_path,
        "sample_budget": samples,
        "epoch_budget": epochs,
    }
    return out


def write_loss_csv(history: Sequence[float], path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,mean_train_loss\n")
        for k, v in enumerate(history):
            fh.write(f"{k},{float(v)!r}\n")

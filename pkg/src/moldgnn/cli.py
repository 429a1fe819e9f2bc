"""Command-line entry point: train, finetune, eval, predict.

Configuration precedence is CLI flag > ``--config`` JSON file > defaults; the
resolved configuration is written to ``<out>/config.json`` and can be fed back
through ``--config`` to reproduce a run.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from moldgnn import graphdata as gd
from moldgnn.checkpoint import load_checkpoint, save_checkpoint
from moldgnn.errors import ConfigError, DataError, MolDGNNError, NumericError
from moldgnn.metrics import MetricsReport, evaluate
from moldgnn.model import ModelConfig, ModelParams, predict_next
from moldgnn.training import Checkpoint, TrainConfig, finetune, train, write_loss_csv

log = logging.getLogger("moldgnn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


@dataclass
class RunConfig:
    subcommand: str = "train"
    trajectories: list[str] = field(default_factory=list)
    out: str = "runs/latest"
    seed: int = 0
    window: int = 10
    epochs: int = 5000
    batch_size: int = 400
    lr: float = 5.0e-3
    split: str = "chronological"
    ratio: float = 0.8
    train_count: int | None = None
    test_count: int | None = None
    checkpoints: list[str] = field(default_factory=list)
    init_checkpoint: str | None = None
    sample_budget: int = 400
    epoch_budget: int = 500
    finetune_batch_size: int | None = None
    horizon: int = 1
    start: int = 0
    cross_all: bool = False
    subset: str = "test"
    gcn_features: int = 64
    lstm_features: int = 128
    mlp_hidden: list[int] = field(default_factory=lambda: [256])
    node_features: str = "adjacency"
    clip_norm: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            window=self.window,
            seed=self.seed,
            clip_norm=self.clip_norm,
            init_checkpoint=self.init_checkpoint,
            sample_budget=self.sample_budget,
            epoch_budget=self.epoch_budget,
        )

    def model_config(self, n_atoms: int) -> ModelConfig:
        return ModelConfig(
            n_atoms=n_atoms,
            window=self.window,
            gcn_features=self.gcn_features,
            lstm_features=self.lstm_features,
            mlp_hidden=tuple(self.mlp_hidden),
            node_features=self.node_features,
        )


# --------------------------------------------------------------------------
# shared steps


@dataclass
class Trajectory:
    path: str
    elements: tuple[str, ...]
    windows: list[gd.WindowSample]
    train_index: list[int]
    test_index: list[int]

    @property
    def train(self) -> list[gd.WindowSample]:
        return [self.windows[i] for i in self.train_index]

    @property
    def test(self) -> list[gd.WindowSample]:
        return [self.windows[i] for i in self.test_index]


def load_trajectory(path: str, cfg: RunConfig) -> Trajectory:
    try:
        frames = gd.parse_trajectory(path)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
    except OSError as exc:
        raise DataError(f"cannot read trajectory {path}: {exc}") from None
    snaps = [gd.frame_to_snapshot(f) for f in frames]
    windows = gd.make_windows(snaps, cfg.window)
    tr, te = gd.split_indices(len(windows), cfg.ratio, cfg.split, cfg.seed, cfg.train_count, cfg.test_count)
    log.info("%s: %d frames, %d windows, %d train / %d test", path, len(frames), len(windows), len(tr), len(te))
    return Trajectory(path, frames[0].elements, windows, tr, te)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return out


def _write_report(report: MetricsReport, out: Path, stem: str, **extra) -> None:
    report.write_csv(out / f"{stem}.csv")
    report.write_json(out / f"{stem}.json", **extra)


def _select(traj: Trajectory, subset: str) -> list[gd.WindowSample]:
    if subset == "test":
        return traj.test
    if subset == "train":
        return traj.train
    if subset == "all":
        return traj.windows
    raise ConfigError(f"unknown subset {subset!r}")


# --------------------------------------------------------------------------
# subcommands


def cmd_train(cfg: RunConfig) -> Checkpoint:
    """Train on one trajectory (single-isomer) or several pooled (all-isomer)."""
    _require(bool(cfg.trajectories), "train needs at least one --trajectory")
    out = _out_dir(cfg)
    trajs = [load_trajectory(p, cfg) for p in cfg.trajectories]
    n_atoms = {len(t.elements) for t in trajs}
    if len(n_atoms) > 1:
        raise DataError(f"trajectories have different atom counts: {sorted(n_atoms)}")
    train_raw = [w for t in trajs for w in t.train]
    normalizer = gd.fit_normalizer(gd.window_snapshots(train_raw))
    gd.write_manifest(
        out / "manifest.json",
        cfg.trajectories,
        cfg.window,
        cfg.split,
        cfg.ratio,
        cfg.seed,
        [(k, i) for k, t in enumerate(trajs) for i in t.train_index],
        [(k, i) for k, t in enumerate(trajs) for i in t.test_index],
        normalizer,
    )
    train_set = gd.normalize_windows(train_raw, normalizer)
    ckpt = train(train_set, cfg.train_config(), normalizer=normalizer, model_config=cfg.model_config(n_atoms.pop()))
    save_checkpoint(ckpt, out / "checkpoint.mdgn")
    write_loss_csv(ckpt.loss_history, out / "loss.csv")

    test_raw = [w for t in trajs for w in t.test]
    if test_raw:
        report = evaluate(ckpt.params, normalizer, gd.normalize_windows(test_raw, normalizer))
        _write_report(report, out, "metrics", split="test", train_samples=len(train_set))
        log.info("test mse %.6g mae %.6g pe %.4g S %.6g", report.mse, report.mae, report.pe_overall, report.s_mean)
    return ckpt


def cmd_finetune(cfg: RunConfig) -> Checkpoint:
    """Finetune a base checkpoint on a budget of a new trajectory's training windows."""
    _require(cfg.init_checkpoint is not None, "finetune needs --init-checkpoint")
    _require(len(cfg.trajectories) == 1, "finetune needs exactly one --trajectory")
    out = _out_dir(cfg)
    base = load_checkpoint(cfg.init_checkpoint)
    traj = load_trajectory(cfg.trajectories[0], cfg)
    if len(traj.elements) != base.params.config.n_atoms:
        raise DataError(
            f"checkpoint has {base.params.config.n_atoms} atoms, trajectory has {len(traj.elements)}"
        )
    if cfg.window != base.params.config.window:
        raise ConfigError(f"--window {cfg.window} differs from the checkpoint's window {base.params.config.window}")
    nz = base.normalizer
    test_set = gd.normalize_windows(traj.test, nz)
    zero_shot = evaluate(base.params, nz, test_set)
    _write_report(zero_shot, out, "zero_shot", split="test")

    tuned = finetune(
        base,
        gd.normalize_windows(traj.train, nz),
        samples=cfg.sample_budget,
        epochs=cfg.epoch_budget,
        batch_size=cfg.finetune_batch_size,
        base_path=str(cfg.init_checkpoint),
    )
    save_checkpoint(tuned, out / "checkpoint.mdgn")
    write_loss_csv(tuned.loss_history, out / "loss.csv")
    report = evaluate(tuned.params, nz, test_set)
    _write_report(
        report,
        out,
        "metrics",
        split="test",
        zero_shot=zero_shot.summary(),
        mse_ratio_vs_zero_shot=report.mse / zero_shot.mse if zero_shot.mse > 0 else None,
    )
    log.info("zero-shot mse %.6g -> finetuned mse %.6g", zero_shot.mse, report.mse)
    return tuned


METRIC_COLUMNS = ("mse", "mae", "pe_overall", "pe_bonded", "pe_nonbonded", "s_mean")


def cmd_eval(cfg: RunConfig) -> list[list[MetricsReport]]:
    """Evaluate checkpoint(s) on trajectory split(s); ``cross_all`` builds the full matrix."""
    _require(bool(cfg.checkpoints), "eval needs --checkpoint")
    _require(bool(cfg.trajectories), "eval needs at least one --trajectory")
    out = _out_dir(cfg)
    ckpts = [load_checkpoint(p) for p in cfg.checkpoints]
    trajs = [load_trajectory(p, cfg) for p in cfg.trajectories]

    def run(ck: Checkpoint, traj: Trajectory) -> MetricsReport:
        if len(traj.elements) != ck.params.config.n_atoms:
            raise DataError(f"{traj.path}: {len(traj.elements)} atoms, checkpoint expects {ck.params.config.n_atoms}")
        return evaluate(ck.params, ck.normalizer, gd.normalize_windows(_select(traj, cfg.subset), ck.normalizer))

    if not cfg.cross_all:
        _require(len(ckpts) == 1, "pass one --checkpoint, or --cross-all for a checkpoint x trajectory matrix")
        reports = [[run(ckpts[0], t) for t in trajs]]
        for k, rep in enumerate(reports[0]):
            stem = "metrics" if len(trajs) == 1 else f"metrics_{k}"
            _write_report(rep, out, stem, split=cfg.subset, trajectory=trajs[k].path)
        return reports

    reports = [[run(ck, t) for t in trajs] for ck in ckpts]
    with open(out / "cross_matrix.csv", "w") as fh:
        fh.write("checkpoint,trajectory," + ",".join(METRIC_COLUMNS) + "\n")
        for i, row in enumerate(reports):
            for j, rep in enumerate(row):
                vals = ",".join(repr(float(getattr(rep, c))) for c in METRIC_COLUMNS)
                fh.write(f"{i},{j},{vals}\n")
    for col in METRIC_COLUMNS:
        grid = np.array([[getattr(rep, col) for rep in row] for row in reports])
        with open(out / f"cross_{col}.csv", "w") as fh:
            for row in grid:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return reports


def rollout(window: Sequence[np.ndarray], params: ModelParams, horizon: int) -> list[np.ndarray]:
    """Feed each normalized prediction back into a sliding window."""
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    win = list(window)
    preds = []
    for _ in range(horizon):
        nxt = predict_next(np.stack(win), params)
        preds.append(nxt)
        win = win[1:] + [nxt]
    return preds


def write_adjacency_frames(mats: Sequence[np.ndarray], first_index: int, path: Path) -> None:
    with open(path, "w") as fh:
        for k, m in enumerate(mats):
            fh.write(f"frame {first_index + k}\n")
            for row in m:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_adjacency_frames(path: str | Path) -> list[np.ndarray]:
    mats, rows = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("frame"):
            if rows:
                mats.append(np.array(rows))
            rows = []
        elif line.strip():
            rows.append([float(v) for v in line.split()])
    if rows:
        mats.append(np.array(rows))
    return mats


def cmd_predict(cfg: RunConfig) -> list[np.ndarray]:
    """Autoregressive rollout from the W frames starting at ``start``; output in Å."""
    _require(len(cfg.checkpoints) == 1, "predict needs exactly one --checkpoint")
    _require(len(cfg.trajectories) == 1, "predict needs exactly one --trajectory")
    if cfg.horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {cfg.horizon}")
    out = _out_dir(cfg)
    ck = load_checkpoint(cfg.checkpoints[0])
    w = ck.params.config.window
    frames = gd.parse_trajectory(cfg.trajectories[0])
    if cfg.start < 0 or cfg.start + w > len(frames):
        raise DataError(f"need frames {cfg.start}..{cfg.start + w - 1}, trajectory has {len(frames)}")
    seed = [gd.normalize(gd.frame_to_snapshot(f), ck.normalizer).adjacency for f in frames[cfg.start : cfg.start + w]]
    if seed[0].shape[0] != ck.params.config.n_atoms:
        raise DataError(f"trajectory has {seed[0].shape[0]} atoms, checkpoint expects {ck.params.config.n_atoms}")
    preds = [gd.denormalize_adjacency(p, ck.normalizer) for p in rollout(seed, ck.params, cfg.horizon)]
    write_adjacency_frames(preds, cfg.start + w, out / "predicted.txt")
    return preds


COMMANDS = {"train": cmd_train, "finetune": cmd_finetune, "eval": cmd_eval, "predict": cmd_predict}


# --------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moldgnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    S = argparse.SUPPRESS
    for name in COMMANDS:
        p = sub.add_parser(name, argument_default=S)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--trajectory", dest="trajectories", action="append", help="XYZ file (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--window", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--split", choices=["chronological", "shuffled"])
        p.add_argument("--ratio", type=float)
        p.add_argument("--train-count", type=int)
        p.add_argument("--test-count", type=int)
        p.add_argument("--checkpoint", dest="checkpoints", action="append")
        p.add_argument("--init-checkpoint")
        p.add_argument("--sample-budget", type=int)
        p.add_argument("--epoch-budget", type=int)
        p.add_argument("--finetune-batch-size", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--start", type=int)
        p.add_argument("--cross-all", action="store_true")
        p.add_argument("--subset", choices=["train", "test", "all"])
        p.add_argument("--gcn-features", type=int)
        p.add_argument("--lstm-features", type=int)
        p.add_argument("--mlp-hidden", type=int, nargs="+")
        p.add_argument("--node-features", choices=["adjacency", "identity"])
        p.add_argument("--clip-norm", type=float)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = vars(args).copy()
    values.pop("verbose", None)
    base: dict = {}
    path = values.pop("config", None)
    if path is not None:
        try:
            base = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    base.update(values)
    return RunConfig.from_dict(base)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MolDGNNError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

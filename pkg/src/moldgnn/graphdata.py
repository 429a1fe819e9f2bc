"""Trajectories to complete weighted graphs, windowed samples and splits."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from moldgnn.errors import DataError
from moldgnn.numerics import Rng

MIN_DISTANCE = 0.1  # Å
BOND_TOLERANCE = 1.2
COVALENT_RADII = {"H": 0.31, "C": 0.76, "N": 0.71, "O": 0.66}


@dataclass(frozen=True)
class Frame:
    elements: tuple[str, ...]
    positions: np.ndarray  # (N, 3) in Å
    index: int

    @property
    def n_atoms(self) -> int:
        return len(self.elements)


@dataclass(frozen=True)
class Snapshot:
    adjacency: np.ndarray  # (N, N), symmetric, zero diagonal
    index: int
    elements: tuple[str, ...] | None = None

    @property
    def n_atoms(self) -> int:
        return self.adjacency.shape[0]


@dataclass(frozen=True)
class WindowSample:
    inputs: tuple[Snapshot, ...]
    target: Snapshot

    @property
    def window(self) -> int:
        return len(self.inputs)

    @property
    def n_atoms(self) -> int:
        return self.target.n_atoms


@dataclass(frozen=True)
class Normalizer:
    w_min: float
    w_max: float

    def __post_init__(self):
        if not (self.w_max > self.w_min > 0):
            raise DataError(f"invalid normalizer range [{self.w_min}, {self.w_max}]")

    @property
    def span(self) -> float:
        return self.w_max - self.w_min

    def to_dict(self) -> dict:
        return {"w_min": self.w_min, "w_max": self.w_max}


# --------------------------------------------------------------------------
# XYZ


def _parse_frame_header(lines: list[str], i: int) -> int:
    try:
        n = int(lines[i].split()[0])
    except (IndexError, ValueError):
        raise DataError(f"line {i + 1}: expected an atom count, got {lines[i]!r}") from None
    if n < 2:
        raise DataError(f"line {i + 1}: atom count must be >= 2, got {n}")
    return n


def parse_trajectory(source: TextIO | str | Path, format: str = "xyz") -> list[Frame]:
    """Read a multi-frame XYZ trajectory.

    ``source`` may be an open text stream or a path. Extra columns after x y z
    (extended XYZ forces and the like) are ignored.
    """
    if format != "xyz":
        raise DataError(f"unsupported trajectory format {format!r}")
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            text = fh.read()
    else:
        text = source.read()
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()

    frames: list[Frame] = []
    i = 0
    while i < len(lines):
        start = i
        n = _parse_frame_header(lines, i)
        if i + 2 + n > len(lines):
            raise DataError(
                f"line {start + 1}: frame {len(frames)} declares {n} atoms "
                f"but only {max(len(lines) - i - 2, 0)} atom lines follow"
            )
        elements = []
        pos = np.empty((n, 3))
        for k in range(n):
            ln = i + 2 + k
            parts = lines[ln].split()
            if len(parts) < 4:
                raise DataError(f"line {ln + 1}: expected 'symbol x y z', got {lines[ln]!r}")
            elements.append(parts[0])
            try:
                pos[k] = [float(v) for v in parts[1:4]]
            except ValueError:
                raise DataError(f"line {ln + 1}: non-numeric coordinate in {lines[ln]!r}") from None
            if not np.all(np.isfinite(pos[k])):
                raise DataError(f"line {ln + 1}: non-finite coordinate")
        elements = tuple(elements)
        if frames and elements != frames[0].elements:
            if n != frames[0].n_atoms:
                raise DataError(
                    f"line {start + 1}: frame {len(frames)} has {n} atoms, expected {frames[0].n_atoms}"
                )
            raise DataError(f"line {start + 1}: frame {len(frames)} element order differs from frame 0")
        frames.append(Frame(elements, pos, len(frames)))
        i += 2 + n
    if not frames:
        raise DataError("trajectory contains no frames")
    return frames


def write_trajectory(frames: Iterable[Frame], dest: TextIO | str | Path, precision: int = 8) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w") as fh:
            write_trajectory(frames, fh, precision)
        return
    for fr in frames:
        dest.write(f"{fr.n_atoms}\nframe {fr.index}\n")
        for sym, (x, y, z) in zip(fr.elements, fr.positions):
            dest.write(f"{sym} {x:.{precision}f} {y:.{precision}f} {z:.{precision}f}\n")


def format_trajectory(frames: Iterable[Frame], precision: int = 8) -> str:
    buf = io.StringIO()
    write_trajectory(frames, buf, precision)
    return buf.getvalue()


# --------------------------------------------------------------------------
# graphs


def _check_positions(frame: Frame) -> np.ndarray:
    diff = frame.positions[:, None, :] - frame.positions[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(dist, 0.0)
    # exact symmetry regardless of summation order
    dist = np.triu(dist, 1)
    dist = dist + dist.T
    iu = np.triu_indices(frame.n_atoms, 1)
    k = int(np.argmin(dist[iu]))
    if dist[iu][k] <= MIN_DISTANCE:
        i, j = iu[0][k], iu[1][k]
        raise DataError(
            f"frame {frame.index}: atoms {i} and {j} are {dist[i, j]:.4f} Å apart (minimum {MIN_DISTANCE})"
        )
    return dist


def frame_to_snapshot(frame: Frame) -> Snapshot:
    """Complete graph weighted by Euclidean distance, in Å."""
    return Snapshot(_check_positions(frame), frame.index, frame.elements)


def fit_normalizer(snapshots: Sequence[Snapshot]) -> Normalizer:
    if not snapshots:
        raise DataError("cannot fit a normalizer on an empty snapshot list")
    lo, hi = np.inf, -np.inf
    for s in snapshots:
        iu = np.triu_indices(s.n_atoms, 1)
        w = s.adjacency[iu]
        lo = min(lo, float(w.min()))
        hi = max(hi, float(w.max()))
    if hi <= lo:
        raise DataError(f"degenerate edge-weight range: all weights equal {lo}")
    return Normalizer(lo, hi)


def normalize(s: Snapshot, n: Normalizer) -> Snapshot:
    a = (s.adjacency - n.w_min) / n.span
    np.fill_diagonal(a, 0.0)
    return Snapshot(a, s.index, s.elements)


def denormalize(s: Snapshot, n: Normalizer) -> Snapshot:
    return Snapshot(denormalize_adjacency(s.adjacency, n), s.index, s.elements)


def denormalize_adjacency(a: np.ndarray, n: Normalizer) -> np.ndarray:
    """Works on a single matrix or a stack of them."""
    out = a * n.span + n.w_min
    idx = np.arange(a.shape[-1])
    out[..., idx, idx] = 0.0
    return out


def normalize_windows(samples: Sequence[WindowSample], n: Normalizer) -> list[WindowSample]:
    """Normalize every distinct snapshot once and rebuild the windows around them."""
    cache: dict[int, Snapshot] = {}

    def norm(s: Snapshot) -> Snapshot:
        key = id(s)
        if key not in cache:
            cache[key] = normalize(s, n)
        return cache[key]

    return [WindowSample(tuple(norm(s) for s in w.inputs), norm(w.target)) for w in samples]


def window_snapshots(samples: Sequence[WindowSample]) -> list[Snapshot]:
    """Distinct snapshots referenced by a set of windows, in first-seen order."""
    seen: dict[int, Snapshot] = {}
    for w in samples:
        for s in (*w.inputs, w.target):
            seen.setdefault(id(s), s)
    return list(seen.values())


def make_windows(snapshots: Sequence[Snapshot], window: int) -> list[WindowSample]:
    if window < 1:
        raise DataError(f"window size must be positive, got {window}")
    if len(snapshots) < window + 1:
        raise DataError(f"need at least {window + 1} snapshots for window {window}, got {len(snapshots)}")
    for a, b in zip(snapshots, snapshots[1:]):
        if b.index != a.index + 1:
            raise DataError(f"snapshots not consecutive: frame {a.index} followed by {b.index}")
    return [
        WindowSample(tuple(snapshots[i : i + window]), snapshots[i + window])
        for i in range(len(snapshots) - window)
    ]


def split_indices(
    n: int,
    ratio: float,
    mode: str = "chronological",
    seed: int = 0,
    train_count: int | None = None,
    test_count: int | None = None,
) -> tuple[list[int], list[int]]:
    """Train/test index lists over ``n`` samples.

    By default the first floor(ratio * n) samples (in chronological or seeded
    shuffled order) train and the rest test. Explicit counts override the
    ratio; samples beyond ``train_count + test_count`` are dropped.
    """
    if n == 0:
        raise DataError("cannot split an empty sample list")
    if not 0.0 < ratio < 1.0:
        raise DataError(f"split ratio must lie in (0, 1), got {ratio}")
    if mode == "chronological":
        order = list(range(n))
    elif mode == "shuffled":
        order = [int(i) for i in Rng(seed, "split").permutation(n)]
    else:
        raise DataError(f"unknown split mode {mode!r}")
    n_train = int(np.floor(ratio * n)) if train_count is None else int(train_count)
    n_test = n - n_train if test_count is None else int(test_count)
    if n_train < 0 or n_test < 0 or n_train + n_test > n:
        raise DataError(f"cannot take {n_train} train + {n_test} test samples from {n}")
    return order[:n_train], order[n_train : n_train + n_test]


def split_train_test(
    samples: Sequence,
    ratio: float = 0.8,
    mode: str = "chronological",
    seed: int = 0,
    train_count: int | None = None,
    test_count: int | None = None,
):
    train_idx, test_idx = split_indices(len(samples), ratio, mode, seed, train_count, test_count)
    return [samples[i] for i in train_idx], [samples[i] for i in test_idx]


# --------------------------------------------------------------------------
# bonds


def bond_mask(distances: np.ndarray, elements: Sequence[str]) -> np.ndarray:
    unknown = sorted({e for e in elements if e not in COVALENT_RADII})
    if unknown:
        raise DataError(f"no covalent radius for element(s): {', '.join(unknown)}")
    r = np.array([COVALENT_RADII[e] for e in elements])
    mask = distances <= BOND_TOLERANCE * (r[:, None] + r[None, :])
    mask = mask & mask.T
    np.fill_diagonal(mask, False)
    return mask


def classify_bonds(frame: Frame) -> np.ndarray:
    """Boolean N x N mask of covalently bonded pairs."""
    return bond_mask(_check_positions(frame), frame.elements)


# --------------------------------------------------------------------------
# manifest


def write_manifest(
    path: str | Path,
    trajectories: Sequence[str],
    window: int,
    mode: str,
    ratio: float,
    seed: int,
    train_index: Sequence,
    test_index: Sequence,
    normalizer: Normalizer,
) -> None:
    """Record how a dataset was windowed and split, enough to rebuild it exactly.

    Index entries are ``[trajectory, window_start]`` pairs.
    """
    doc = {
        "trajectories": [str(t) for t in trajectories],
        "window": window,
        "split_mode": mode,
        "ratio": ratio,
        "seed": seed,
        "train": [list(map(int, ix)) for ix in train_index],
        "test": [list(map(int, ix)) for ix in test_index],
        "normalizer": normalizer.to_dict(),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_manifest(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    doc["normalizer"] = Normalizer(**doc["normalizer"])
    return doc

"""Edge-weight errors and spectral similarity of predicted graphs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from moldgnn.errors import DataError, ShapeError
from moldgnn.graphdata import Normalizer, WindowSample, bond_mask, denormalize_adjacency
from moldgnn.model import ModelParams, predict_batch, upper_indices
from moldgnn.numerics import sym_eigenvalues

ENERGY_FRACTION = 0.9


@dataclass
class EdgeErrors:
    mse: float
    mae: float
    pe: float
    pe_bonded: float
    pe_nonbonded: float
    n_bonded: int
    n_nonbonded: int


@dataclass
class MetricsReport:
    mse: float
    mae: float
    pe_overall: float
    pe_bonded: float
    pe_nonbonded: float
    s_mean: float
    sample_count: int
    n_bonded_edges: int = 0
    n_nonbonded_edges: int = 0
    records: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("records")
        return d

    def write_csv(self, path: str | Path) -> None:
        cols = ["sample_index", "mse", "mae", "pe", "pe_bonded", "pe_nonbonded", "s"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.records:
                fh.write(",".join(repr(r[c]) if c != "sample_index" else str(r[c]) for c in cols) + "\n")

    def write_json(self, path: str | Path, **extra) -> None:
        Path(path).write_text(json.dumps({**self.summary(), **extra}, indent=2, sort_keys=True) + "\n")


def _mean(x: np.ndarray) -> float:
    return float(x.mean()) if x.size else 0.0


def edge_errors(predicted: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None) -> EdgeErrors:
    """MSE (Å²), MAE (Å) and percent errors over the unique edges.

    ``mask`` marks bonded pairs; without one every edge counts as non-bonded.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape or target.ndim != 2 or target.shape[0] != target.shape[1]:
        raise ShapeError(f"edge_errors: incompatible shapes {predicted.shape} and {target.shape}")
    iu = upper_indices(target.shape[0])
    wt, wp = target[iu], predicted[iu]
    if np.any(wt <= 0):
        raise DataError("percent error undefined: true edge weight <= 0")
    bonded = np.zeros(wt.shape, bool) if mask is None else np.asarray(mask, bool)[iu]
    err = wp - wt
    pe = 100.0 * np.abs(err) / wt
    return EdgeErrors(
        mse=float(np.mean(err * err)),
        mae=float(np.mean(np.abs(err))),
        pe=float(pe.mean()),
        pe_bonded=_mean(pe[bonded]),
        pe_nonbonded=_mean(pe[~bonded]),
        n_bonded=int(bonded.sum()),
        n_nonbonded=int((~bonded).sum()),
    )


def laplacian(adjacency: np.ndarray) -> np.ndarray:
    """Combinatorial Laplacian D - A."""
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"laplacian needs a square matrix, got {a.shape}")
    if np.any(a < 0):
        raise DataError("laplacian: negative edge weight")
    lap = -a.copy()
    np.fill_diagonal(lap, 0.0)
    lap[np.diag_indices_from(lap)] = -lap.sum(axis=1)
    return lap


def energy_rank(eigs: np.ndarray, fraction: float = ENERGY_FRACTION) -> int:
    """Smallest k whose leading k (descending) eigenvalues hold ``fraction`` of the total."""
    cum = np.cumsum(eigs)
    return int(np.argmax(cum >= fraction * cum[-1])) + 1


def eigen_similarity(g1: np.ndarray, g2: np.ndarray, fraction: float = ENERGY_FRACTION) -> float:
    """Sum of squared differences of the top-k Laplacian eigenvalues.

    k is the larger of the two graphs' energy ranks.
    """
    g1, g2 = np.asarray(g1, dtype=np.float64), np.asarray(g2, dtype=np.float64)
    if g1.shape != g2.shape:
        raise ShapeError(f"eigen_similarity: node counts differ ({g1.shape} vs {g2.shape})")
    l1 = sym_eigenvalues(laplacian(g1))
    l2 = l1 if np.array_equal(g1, g2) else sym_eigenvalues(laplacian(g2))
    k = max(energy_rank(l1, fraction), energy_rank(l2, fraction))
    d = l1[:k] - l2[:k]
    return float(np.sum(d * d))


def evaluate(
    params: ModelParams,
    normalizer: Normalizer,
    samples: Sequence[WindowSample],
    elements: Sequence[str] | None = None,
    keep_records: bool = True,
    batch_size: int = 512,
) -> MetricsReport:
    """Predict every sample, denormalize, and aggregate edge errors and S.

    Bond classes are taken from each target geometry; the element symbols come
    from ``elements`` or else from the target snapshot metadata. Edge errors
    are pooled over all edges of all samples; S is averaged over samples.
    """
    if not samples:
        raise DataError("cannot evaluate an empty sample list")
    n = params.config.n_atoms
    iu = upper_indices(n)
    sq_sum = abs_sum = 0.0
    pe_all: list[np.ndarray] = []
    pe_b: list[np.ndarray] = []
    pe_nb: list[np.ndarray] = []
    s_vals = []
    records = []
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo : lo + batch_size]
        if any(s.n_atoms != n for s in chunk):
            raise ShapeError(f"samples do not match the model's {n} atoms")
        windows = np.stack([np.stack([x.adjacency for x in s.inputs]) for s in chunk])
        preds = denormalize_adjacency(predict_batch(windows, params), normalizer)
        for k, (s, pred) in enumerate(zip(chunk, preds)):
            true = denormalize_adjacency(s.target.adjacency, normalizer)
            syms = elements if elements is not None else s.target.elements
            mask = bond_mask(true, syms) if syms is not None else None
            e = edge_errors(pred, true, mask)
            pe = 100.0 * np.abs(pred[iu] - true[iu]) / true[iu]
            bonded = np.zeros(pe.shape, bool) if mask is None else mask[iu]
            pe_all.append(pe)
            pe_b.append(pe[bonded])
            pe_nb.append(pe[~bonded])
            sq_sum += e.mse
            abs_sum += e.mae
            # similarity needs non-negative weights
            s_val = eigen_similarity(np.clip(pred, 0.0, None), true)
            s_vals.append(s_val)
            if keep_records:
                records.append(
                    {
                        "sample_index": lo + k,
                        "mse": e.mse,
                        "mae": e.mae,
                        "pe": e.pe,
                        "pe_bonded": e.pe_bonded,
                        "pe_nonbonded": e.pe_nonbonded,
                        "s": s_val,
                    }
                )
    count = len(samples)
    b = np.concatenate(pe_b)
    nb = np.concatenate(pe_nb)
    return MetricsReport(
        mse=sq_sum / count,
        mae=abs_sum / count,
        pe_overall=_mean(np.concatenate(pe_all)),
        pe_bonded=_mean(b),
        pe_nonbonded=_mean(nb),
        s_mean=float(np.mean(s_vals)),
        sample_count=count,
        n_bonded_edges=int(b.size),
        n_nonbonded_edges=int(nb.size),
        records=records,
    )

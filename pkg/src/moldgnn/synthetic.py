"""Synthetic trajectories for smoke tests and desk-scale experiments.

Atoms oscillate about a fixed geometry; each coordinate follows the sum of two
sinusoids with incommensurate periods and random phases.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from moldgnn.graphdata import Frame
from moldgnn.numerics import Rng

GOLDEN = (1 + 5**0.5) / 2

# small rigid fragment: C-C backbone with a carbonyl O and two H
FIVE_ATOM = (
    ("C", "C", "O", "H", "H"),
    np.array(
        [
            [0.000, 0.000, 0.000],
            [1.520, 0.000, 0.000],
            [2.250, 1.050, 0.000],
            [-0.380, -0.640, 0.890],
            [2.000, -0.980, 0.000],
        ]
    ),
)


def quasi_periodic(
    elements: Sequence[str],
    base: np.ndarray,
    n_frames: int,
    amplitude: float = 0.3,
    period: float = 20.0,
    seed: int = 0,
) -> list[Frame]:
    """Frames x(t) = base + a1 sin(2πt/T + φ1) + a2 sin(2πt/(φT) + φ2) per coordinate.

    a1 + a2 never exceeds ``amplitude``; the second period is the first times
    the golden ratio, so the motion never repeats exactly.
    """
    rng = Rng(seed, "synthetic")
    base = np.asarray(base, dtype=np.float64)
    shape = base.shape
    split = rng.uniform(0.3, 0.7, shape)
    scale = rng.uniform(0.5, 1.0, shape) * amplitude
    a1, a2 = scale * split, scale * (1 - split)
    ph1 = rng.uniform(0, 2 * np.pi, shape)
    ph2 = rng.uniform(0, 2 * np.pi, shape)
    t1, t2 = period, period * GOLDEN
    frames = []
    for t in range(n_frames):
        pos = base + a1 * np.sin(2 * np.pi * t / t1 + ph1) + a2 * np.sin(2 * np.pi * t / t2 + ph2)
        frames.append(Frame(tuple(elements), pos, t))
    return frames


def five_atom_trajectory(n_frames: int = 500, seed: int = 0, shift: float = 0.0, **kw) -> list[Frame]:
    """The five-atom fragment, optionally with its O pulled ``shift`` Å further out."""
    elements, base = FIVE_ATOM
    base = base.copy()
    base[2] += shift * (base[2] - base[1]) / np.linalg.norm(base[2] - base[1])
    return quasi_periodic(elements, base, n_frames, seed=seed, **kw)


def c7o2h10_like(seed: int = 0) -> tuple[tuple[str, ...], np.ndarray]:
    """A plausible 19-atom C7O2H10 geometry: zig-zag carbon chain with two O and ten H.

    Only the bond lengths are chemically sensible; it stands in for an ISO17
    isomer where that dataset is unavailable.
    """
    rng = Rng(seed, "c7o2h10")
    elements: list[str] = []
    pos: list[np.ndarray] = []
    for k in range(7):
        elements.append("C")
        pos.append(np.array([1.27 * k, 0.42 if k % 2 else -0.42, 0.0]))
    # oxygens on carbons 1 and 4
    for k in (1, 4):
        elements.append("O")
        sign = 1 if k % 2 else -1
        pos.append(pos[k] + np.array([0.0, sign * 1.43, 0.0]))
    # ten H: three on each chain end, one on C2, C3, C5 and one hydroxyl H
    hosts = [0, 0, 0, 6, 6, 6, 2, 3, 5, 7]
    for k in hosts:
        bond = 0.96 if elements[k] == "O" else 1.09
        # least crowded of a batch of random directions
        dirs = rng.normal((64, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        cand = pos[k] + bond * dirs
        others = np.array(pos)
        clearance = np.min(np.linalg.norm(cand[:, None, :] - others[None, :, :], axis=-1), axis=1)
        elements.append("H")
        pos.append(cand[int(np.argmax(clearance))])
    return tuple(elements), np.array(pos)


def isomer_like_trajectory(n_frames: int = 200, seed: int = 0, **kw) -> list[Frame]:
    elements, base = c7o2h10_like(seed)
    kw.setdefault("amplitude", 0.08)
    return quasi_periodic(elements, base, n_frames, seed=seed, **kw)

"""Symmetric eigenvalues by cyclic Jacobi rotations."""

from __future__ import annotations

import numpy as np

from moldgnn.errors import ShapeError

SYMMETRY_TOL = 1e-9
OFF_TOL = 1e-12
MAX_SWEEPS = 100


def _round_robin(n: int) -> list[list[tuple[int, int]]]:
    """Tournament schedule: n-1 (or n) rounds of disjoint index pairs covering every pair once."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for k in range(m // 2):
            p, q = players[k], players[m - 1 - k]
            if p >= 0 and q >= 0:
                pairs.append((min(p, q), max(p, q)))
        rounds.append(pairs)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_norm(a: np.ndarray) -> float:
    return float(np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0)))


def sym_eigenvalues(m, tol: float = OFF_TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix, sorted descending.

    A sweep visits every off-diagonal pair once, grouped into rounds of
    disjoint pairs so each round is one orthogonal similarity transform.
    Iteration stops once the off-diagonal Frobenius norm drops below
    ``tol * max(1, ||m||_F)`` or after ``max_sweeps`` sweeps.
    """
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"sym_eigenvalues needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("sym_eigenvalues: non-finite entries")
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("sym_eigenvalues: matrix is not symmetric")
    n = a.shape[0]
    a = 0.5 * (a + a.T)
    threshold = tol * max(1.0, float(np.linalg.norm(a)))
    rounds = _round_robin(n) if n > 1 else []

    for _ in range(max_sweeps):
        if _off_norm(a) < threshold:
            break
        for pairs in rounds:
            p = np.array([pq[0] for pq in pairs])
            q = np.array([pq[1] for pq in pairs])
            apq = a[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            # a vanishing a_pq gives theta = inf and t = 0: the pair is just zeroed
            with np.errstate(over="ignore", divide="ignore"):
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(n)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            a[p, q] = 0.0
            a[q, p] = 0.0
    return np.sort(np.diag(a))[::-1].copy()

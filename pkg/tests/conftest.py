import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from moldgnn import graphdata as gd  # noqa: E402
from moldgnn.model import ModelConfig  # noqa: E402
from moldgnn.synthetic import five_atom_trajectory, quasi_periodic  # noqa: E402

TINY = ModelConfig(n_atoms=4, window=3, gcn_features=3, lstm_features=5, mlp_hidden=(8,))

FOUR_ATOMS = (
    ("C", "C", "O", "H"),
    np.array([[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [2.2, 1.0, 0.0], [-0.4, -0.6, 0.9]]),
)


def central_difference(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Numerical gradient of scalar f at array x, entry by entry."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + step
        fp = f(x)
        x[idx] = old - step
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * step)
    return g


def fd_agrees(analytic, numeric, rtol, small=1e-6, atol=1e-8) -> bool:
    """Relative error below ``rtol`` per entry; absolute below ``atol`` where |gradient| < ``small``."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    ok = np.where(scale < small, err < atol, err < rtol * scale)
    return bool(np.all(ok))


def random_symmetric(rng, n, low=0.0, high=1.0):
    a = rng.uniform(low, high, (n, n))
    a = np.triu(a, 1)
    return a + a.T


def prepare(frames, window, normalizer=None, ratio=0.8):
    """Raw frames -> (train, test, normalizer), normalized with the training range."""
    wins = gd.make_windows([gd.frame_to_snapshot(f) for f in frames], window)
    tr, te = gd.split_train_test(wins, ratio)
    normalizer = normalizer or gd.fit_normalizer(gd.window_snapshots(tr))
    return gd.normalize_windows(tr, normalizer), gd.normalize_windows(te, normalizer), normalizer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config():
    return TINY


@pytest.fixture
def tiny_data():
    frames = quasi_periodic(*FOUR_ATOMS, n_frames=30, amplitude=0.2, seed=3)
    return prepare(frames, TINY.window)


@pytest.fixture
def xyz_pair(tmp_path):
    """Two 50-frame five-atom trajectories that differ in equilibrium geometry."""
    a, b = tmp_path / "a.xyz", tmp_path / "b.xyz"
    gd.write_trajectory(five_atom_trajectory(50, seed=1), a)
    gd.write_trajectory(five_atom_trajectory(50, seed=1, shift=0.4), b)
    return a, b


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.summary_lines():
        terminalreporter.write_line(line)

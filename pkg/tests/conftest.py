import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from grnn import model  # noqa: E402
from grnn.graph import build_propagation_matrix, random_road_network, transform  # noqa: E402


def random_instance(D, n_segments, T, alpha, seed):
    """Random params with nonzero biases, H0, inputs and targets."""
    link = transform(random_road_network(max(2, n_segments // 2), n_segments, seed))
    A = build_propagation_matrix(link, alpha)
    rng = np.random.default_rng(seed)
    n = link.n
    p = model.init_params(D, n, 1, seed, scale=0.5)
    p.B_z = rng.normal(0, 0.5, (D, n))
    p.B_r = rng.normal(0, 0.5, (D, n))
    p.b_o = rng.normal(0, 0.5, n)
    H0 = rng.standard_normal((D, n))
    X = rng.uniform(0.05, 0.95, (T, n))
    Y = rng.uniform(0.05, 0.95, (T, n))
    return p, H0, X, Y, A


@pytest.fixture
def small_instance():
    return random_instance(4, 6, 5, 0.5, 7)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])

import numpy as np
import pytest

from grnn.data import (
    ConditionPanel,
    Normalizer,
    SimParams,
    format_panel,
    load_panel,
    seasonal_profile,
    simulate_diffusion,
    train_length,
    write_panel,
)
from grnn.errors import ParameterError, ValidationError
from grnn.graph import chain_road_network, grid_road_network, ladder_road_network, transform


@pytest.fixture
def pair():
    return transform(chain_road_network(2))


def records(rows, minutes=10):
    return [f"# interval_minutes={minutes}", "segment_id,interval_index,value"] + [
        f"{s},{t},{v}" for s, t, v in rows]


class TestLoadPanel:
    def test_complete(self, pair):
        rows = [(s, t, 10 * i + t) for i, s in enumerate(("s0", "s1")) for t in range(3)]
        panel = load_panel(records(rows, 15), pair)
        assert panel.values.shape == (2, 3) and panel.interval_minutes == 15
        np.testing.assert_array_equal(panel.values, [[0, 1, 2], [10, 11, 12]])

    def test_interpolates_single_gap(self, pair):
        rows = [("s0", 0, 1.0), ("s0", 2, 3.0), ("s1", 0, 0.0), ("s1", 1, 0.0), ("s1", 2, 0.0)]
        assert load_panel(records(rows), pair).values[0, 1] == 2.0

    def test_two_gap_linear(self, pair):
        rows = [("s0", 0, 0.0), ("s0", 3, 3.0)] + [("s1", t, 0.0) for t in range(4)]
        np.testing.assert_allclose(load_panel(records(rows), pair).values[0], [0, 1, 2, 3])

    def test_long_gap_rejected(self, pair):
        rows = [("s0", 0, 1.0), ("s0", 6, 1.0)] + [("s1", t, 0.0) for t in range(7)]
        with pytest.raises(ValidationError, match="s0"):
            load_panel(records(rows), pair)

    def test_unknown_segment(self, pair):
        with pytest.raises(ValidationError, match="zz"):
            load_panel(records([("zz", 0, 1.0)]), pair)

    def test_missing_segment(self, pair):
        with pytest.raises(ValidationError, match="s1"):
            load_panel(records([("s0", t, 1.0) for t in range(4)]), pair)

    def test_round_trip_bitwise(self, tmp_path):
        link = transform(grid_road_network(2, 2))
        panel = simulate_diffusion(link, 50, SimParams(seed=4))
        write_panel(panel, tmp_path / "p.csv")
        again = load_panel(tmp_path / "p.csv", link)
        assert again.values.tobytes() == panel.values.tobytes()
        assert format_panel(again) == (tmp_path / "p.csv").read_text()


class TestNormalizer:
    def test_affine(self):
        nz = Normalizer.fit(np.array([[0.0, 10.0]]), 1.0)
        np.testing.assert_allclose(nz.apply([0.0, 10.0, 5.0]), [0.05, 0.95, 0.5], atol=1e-15)

    def test_inverse(self):
        nz = Normalizer(3.0, 47.0)
        x = np.random.default_rng(0).uniform(3.0, 47.0, 100)
        np.testing.assert_allclose(nz.invert(nz.apply(x)), x, rtol=0, atol=1e-12)

    def test_out_of_range_is_clamped_and_counted(self):
        nz = Normalizer.fit(np.array([[0.0, 10.0]]), 1.0)
        assert nz.scale(12.0) == pytest.approx(1.13)
        assert nz.apply(12.0) == 1 - 1e-6
        assert nz.clamped == 1

    def test_constant_rejected(self):
        with pytest.raises(ValidationError):
            Normalizer.fit(np.ones((2, 5)), 1.0)

    def test_train_split_only(self):
        x = np.array([[0.0, 1.0, 2.0, 100.0]])
        nz = Normalizer.fit(x, 0.75)
        assert (nz.lo, nz.hi) == (0.0, 2.0)
        y = nz.apply(x[:, :3])
        assert y.min() >= 0.05 and y.max() <= 0.95

    def test_train_length(self):
        assert train_length(100, 0.75) == 75
        with pytest.raises(ParameterError):
            train_length(10, 1.5)


class TestSimulator:
    def test_fixed_point(self):
        link = transform(grid_road_network(2, 3))
        panel = simulate_diffusion(link, 30, SimParams(beta=0.0, noise=0.0, amplitude=0.0, seed=1))
        np.testing.assert_array_equal(panel.values, np.repeat(panel.values[:, :1], 30, axis=1))

    def test_fixed_point_with_spread_start(self):
        link = transform(grid_road_network(2, 3))
        sp = SimParams(beta=0.0, noise=0.0, amplitude=0.0, persistence=1.0, init_spread=3.0, seed=2)
        x = simulate_diffusion(link, 20, sp).values
        np.testing.assert_allclose(x, np.repeat(x[:, :1], 20, axis=1), rtol=0, atol=1e-12)

    def test_chain_transport(self):
        link = transform(chain_road_network(2))
        sp = SimParams(beta=1.0, noise=0.0, persistence=1.0, base_spread=0.0, init_spread=4.0, seed=3)
        x = simulate_diffusion(link, 200, sp).values
        s = seasonal_profile(200, sp.amplitude)
        np.testing.assert_allclose(x[1, 1:], x[0, :-1] + np.diff(s), rtol=0, atol=1e-10)

    def test_deterministic_and_shape(self):
        link = transform(ladder_road_network(5))
        a = simulate_diffusion(link, 77, SimParams(seed=9))
        b = simulate_diffusion(link, 77, SimParams(seed=9))
        assert a.values.shape == (link.n, 77)
        assert a.values.tobytes() == b.values.tobytes()
        assert not np.array_equal(a.values, simulate_diffusion(link, 77, SimParams(seed=10)).values)

    def test_upstream_lagged_correlation(self):
        link = transform(ladder_road_network(8))
        x = simulate_diffusion(link, 30 * 144, SimParams(seed=0)).values
        dx = x - x.mean(axis=1, keepdims=True)

        def lagcorr(i, j):
            return np.corrcoef(dx[i, :-1], dx[j, 1:])[0, 1]

        linked = [lagcorr(i, j) for i, j in zip(*np.nonzero(link.adjacency))]
        rng = np.random.default_rng(0)
        shuffled = []
        for i, j in zip(*np.nonzero(link.adjacency)):
            perm = rng.permutation(x.shape[1] - 1)
            shuffled.append(np.corrcoef(dx[i, :-1][perm], dx[j, 1:])[0, 1])
        assert np.mean(linked) > 0.3
        assert np.mean(linked) > np.mean(np.abs(shuffled)) + 0.2

    def test_bad_beta(self):
        link = transform(chain_road_network(2))
        with pytest.raises(ParameterError):
            simulate_diffusion(link, 5, SimParams(beta=1.5))


def test_panel_rejects_nan():
    with pytest.raises(ValidationError):
        ConditionPanel(np.array([[1.0, np.nan]]), ("a",))

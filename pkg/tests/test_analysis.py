import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlticket import analysis
from rlticket.harness import ImpConfig, ImpRunReport, IterationRecord, run_imp, train_dense
from rlticket.netcore import MaskSet, NetworkSpec, ParamSet, init_network


def summary_for(w, m, shape=None):
    params = ParamSet([np.asarray(w, dtype=float)], [np.zeros(len(w))])
    return analysis.input_column_stats(params, MaskSet([np.asarray(m, dtype=bool)]), shape)


def fake_report(returns, random_return=0.0):
    recs = [IterationRecord(k, 0.8 ** k, [0.8 ** k], 0, r, 0, [], 0.0) for k, r in enumerate(returns)]
    return ImpRunReport("run", {"condition": "mask_weights"}, "", "", random_return, recs)


class TestInputColumns:
    def test_column_sums(self):
        s = summary_for([[0.5, -0.5], [0.0, 1.0]], [[1, 1], [1, 1]])
        np.testing.assert_allclose(s.cum_magnitude, [0.5, 1.5])

    def test_dead_column(self):
        s = summary_for([[0.5, -0.5], [0.2, 1.0]], [[0, 1], [0, 1]])
        assert s.eliminated.tolist() == [True, False]
        assert s.cum_magnitude[0] == 0.0

    def test_dense_has_no_eliminated(self):
        spec = NetworkSpec((5, 4, 2))
        params, _ = init_network(spec, seed=0)
        s = analysis.input_column_stats(params, MaskSet.ones_for(spec))
        assert not s.eliminated.any()
        assert analysis.eliminated_dims(MaskSet.ones_for(spec)) == []

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), keep=st.floats(0.0, 0.6))
    def test_eliminated_iff_zero_magnitude_iff_zero_alive(self, seed, keep):
        rng = np.random.default_rng(seed)
        spec = NetworkSpec((8, 3, 2))
        params, _ = init_network(spec, seed=seed)
        masks = MaskSet([rng.random(s) < keep for s in spec.weight_shapes()])
        s = analysis.input_column_stats(params, masks)
        elim = set(analysis.eliminated_dims(masks))
        assert elim == set(np.flatnonzero(s.cum_magnitude == 0)) == set(np.flatnonzero(s.alive_count == 0))

    def test_channel_shape_must_cover_inputs(self):
        with pytest.raises(ValueError):
            summary_for([[1.0, 2.0, 3.0]], [[1, 1, 1]], (2, 2))


class TestChannelRatio:
    def test_uniform_half_mask(self):
        rng = np.random.default_rng(0)
        n_units, shape = 16, (6, 10, 20)
        m = rng.random((n_units, 1200)) < 0.5
        s = summary_for(np.ones((n_units, 1200)), m, shape)
        ratios = analysis.channel_ratio(s)
        sd = np.sqrt(0.25 / (n_units * 200))
        assert np.all(np.abs(ratios - 0.5) < 4 * sd)

    def test_eliminated_channel_is_zero(self):
        m = np.ones((4, 1200), dtype=bool)
        m[:, 200:400] = False
        ratios = analysis.channel_ratio(summary_for(np.ones((4, 1200)), m, (6, 10, 20)))
        assert ratios[1] == 0.0 and np.all(ratios[[0, 2, 3, 4, 5]] == 1.0)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_weighted_mean_of_columns(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.random((5, 12)) < rng.random()
        s = summary_for(np.ones((5, 12)), m, (3, 2, 2))
        alive = m.sum(axis=0).reshape(3, 4)
        np.testing.assert_allclose(analysis.channel_ratio(s), alive.sum(axis=1) / (5 * 4))

    def test_needs_shape(self):
        with pytest.raises(ValueError):
            analysis.channel_ratio(summary_for([[1.0]], [[1]]))


class TestLayerRatios:
    @pytest.fixture(scope="class")
    @classmethod
    def report(cls):
        return run_imp(ImpConfig(hidden=(16, 8), budget=256, eval_points=1, eval_episodes=1, iterations=4),
                       random_return=21.52)

    def test_iteration_zero_all_ones(self, report):
        curve = analysis.layer_ratio_curve([report])[report.run_id]
        assert np.all(curve[0] == 1.0)

    def test_global_is_weighted_mean(self, report):
        curve = analysis.layer_ratio_curve([report])[report.run_id]
        sizes = np.array([16 * 4, 8 * 16, 2 * 8])
        for rec, row in zip(report.records, curve):
            assert rec.frac_remaining == pytest.approx(float((row * sizes).sum() / sizes.sum()))

    def test_csv(self, report, tmp_path):
        analysis.write_layer_ratios(tmp_path / "layer_ratios.csv", [report])
        rows = list(csv.DictReader((tmp_path / "layer_ratios.csv").open()))
        assert list(rows[0]) == ["run_id", "iteration", "layer", "remaining"]
        assert len(rows) == 4 * 3


class TestSparsityLevels:
    def test_moderate_is_latest_above_threshold(self):
        rep = fake_report([100.0, 95.0, 91.0, 80.0, 92.0, 10.0])
        assert analysis.moderate_sparsity_iteration(rep, 0.9) == 4
        assert analysis.first_drop_iteration(rep, 0.9) == 3

    def test_none_when_never_dropping(self):
        assert analysis.first_drop_iteration(fake_report([1.0, 1.0]), 0.9) is None


class TestMaskTransfer:
    cfg = ImpConfig(hidden=(16, 16), budget=1024, eval_points=2, eval_episodes=3)

    def test_empty_keep_rejected(self):
        with pytest.raises(ValueError):
            analysis.mask_transfer_train(self.cfg, [])

    def test_full_keep_equals_dense(self):
        _, dense = train_dense(self.cfg)
        assert analysis.mask_transfer_train(self.cfg, range(4)) == dense.curve

    def test_cart_position_alone_fails(self):
        cfg = ImpConfig(budget=80_000)
        _, dense = train_dense(cfg)
        only_pos = analysis.mask_transfer_train(cfg, [0])
        assert max(v for _, v in only_pos) < 0.9 * dense.best_return


class TestInputSummaryCSV:
    def test_header_and_rows(self, tmp_path):
        s = summary_for([[0.5, -0.5], [0.0, 1.0]], [[1, 0], [1, 0]])
        analysis.write_input_summary(tmp_path / "input_summary.csv", [("r", s)])
        rows = list(csv.DictReader((tmp_path / "input_summary.csv").open()))
        assert list(rows[0]) == ["run_id", "dim", "channel", "alive_count", "cum_magnitude", "eliminated"]
        assert [r["eliminated"] for r in rows] == ["0", "1"]

import json

import numpy as np
import pytest

from helpers import contract_violations
from rlticket import harness
from rlticket.checkpoint import load_checkpoint, save_checkpoint
from rlticket.errors import NumericError, PreconditionError
from rlticket.harness import (ImpConfig, ImpRunReport, IterationRecord, late_rewind, normalized_performance,
                              random_policy_return, run_imp)
from rlticket.netcore import MaskSet, NetworkSpec, init_network
from rlticket.pruning import CONDITIONS, schedule_alive_counts

TINY = dict(hidden=(16, 16), budget=512, eval_points=2, eval_episodes=2, iterations=4)


def tiny(**kw):
    return ImpConfig(**{**TINY, **kw})


class TestConfig:
    def test_hash_stable_and_sensitive(self):
        a, b = tiny(), tiny()
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != tiny(seed=1).config_hash()

    def test_dict_roundtrip(self):
        cfg = tiny(condition="mask_permuted", input_keep=(2, 3))
        assert ImpConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    @pytest.mark.parametrize("kw", [dict(env_id="pong"), dict(algorithm="sac"), dict(condition="x"),
                                    dict(prune_fraction=1.0), dict(iterations=0), dict(input_keep=())])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            tiny(**kw)


class TestNormalization:
    def report(self, returns):
        recs = [IterationRecord(k, 0.8 ** k, [], 0, r, 0, [], 0.0) for k, r in enumerate(returns)]
        return ImpRunReport("r", {}, "", "", 20.0, recs)

    def test_dense_is_one_and_random_is_zero(self):
        rep = self.report([200.0, 20.0, 110.0])
        assert rep.normalized() == [1.0, 0.0, 0.5]

    def test_degenerate_denominator(self):
        with pytest.raises(ValueError):
            normalized_performance(self.report([20.0]), 20.0, 20.0)

    def test_cartpole_random_return_fixture(self):
        assert random_policy_return("cartpole", seed=0) == pytest.approx(21.52)


class TestRunImp:
    @pytest.fixture(scope="class")
    @classmethod
    def reports(cls):
        out = {}
        for cond in CONDITIONS:
            arts = []
            rep = run_imp(tiny(condition=cond), on_iteration=arts.append, random_return=21.52)
            out[cond] = (rep, arts)
        return out

    def test_iteration_zero_dense(self, reports):
        for rep, _ in reports.values():
            assert rep.records[0].frac_remaining == 1.0
            assert rep.normalized()[0] == 1.0

    def test_schedule(self, reports):
        for rep, _ in reports.values():
            total = rep.records[0].alive_count
            expected = schedule_alive_counts(total, len(rep.records) - 1)
            assert [r.alive_count for r in rep.records] == expected

    @pytest.mark.parametrize("cond", CONDITIONS)
    def test_condition_contracts(self, reports, cond):
        _, arts = reports[cond]
        assert len(arts) == TINY["iterations"]
        for art in arts:
            assert contract_violations(cond, art) == []

    def test_critic_not_pruned_by_default(self, reports):
        _, arts = reports["mask_weights"]
        critic_masks = arts[-1].masks[1]
        assert sum(critic_masks.alive_counts()) == sum(critic_masks.sizes())

    def test_best_is_max_of_curve(self, reports):
        for rep, _ in reports.values():
            for rec in rep.records:
                assert rec.best_return == max(v for _, v in rec.curve)

    def test_reproducible(self, reports):
        rep = run_imp(tiny(condition="mask_permuted"), random_return=21.52)
        a, b = rep.to_dict(), reports["mask_permuted"][0].to_dict()
        for d in (a, b):
            for r in d["records"]:
                r.pop("wall_clock")
        assert a == b

    def test_prune_critic_joint(self):
        arts = []
        run_imp(tiny(condition="mask_weights", iterations=2, prune_critic=True), on_iteration=arts.append,
                random_return=21.52)
        critic = arts[0].next_masks[1]
        assert sum(critic.alive_counts()) < sum(critic.sizes())

    def test_out_dir_artifacts(self, tmp_path):
        cfg = tiny(iterations=2)
        rep = run_imp(cfg, out_dir=tmp_path, random_return=21.52)
        assert ImpRunReport.load(tmp_path / f"{cfg.run_id}.json").to_dict() == rep.to_dict()
        specs, params, masks, meta, _ = load_checkpoint(tmp_path / cfg.run_id / "iter_01.npz")
        assert meta["iteration"] == 1 and len(specs) == 2
        assert masks[0] is not None


class TestFailures:
    def test_missing_expert(self):
        with pytest.raises(PreconditionError):
            run_imp(tiny(algorithm="bc", expert_path=""), random_return=21.52)

    def test_missing_expert_file(self, tmp_path):
        with pytest.raises(PreconditionError):
            run_imp(tiny(algorithm="bc", expert_path=str(tmp_path / "nope.npz")), random_return=21.52)

    def test_rewind_beyond_budget(self):
        with pytest.raises(PreconditionError):
            late_rewind(tiny(rewind_step=10_000), random_return=21.52)

    def test_numeric_error_marks_failed(self, monkeypatch):
        calls = {"n": 0}
        original = harness.PPOTrainer.train

        def flaky(self, *a, **kw):
            calls["n"] += 1
            if calls["n"] == 2:
                raise NumericError("boom", layer=1)
            return original(self, *a, **kw)
        monkeypatch.setattr(harness.PPOTrainer, "train", flaky)
        rep = run_imp(tiny(), random_return=21.52)
        assert rep.status == "failed"
        assert len(rep.records) == 2 and rep.records[1].failed
        assert not rep.records[0].failed


class TestLateRewind:
    def test_step_zero_matches_standard(self):
        a = run_imp(tiny(iterations=2), random_return=21.52)
        b = late_rewind(tiny(iterations=2, rewind_step=0), random_return=21.52)
        assert [r.best_return for r in a.records] == [r.best_return for r in b.records]

    def test_monotone_masks_with_late_target(self):
        arts = []
        late_rewind(tiny(iterations=3, rewind_step=256), on_iteration=arts.append, random_return=21.52)
        for art in arts[:-1]:
            assert contract_violations("mask_weights", art) == []
        # the rewind target is the early checkpoint, not the initialization
        standard = []
        run_imp(tiny(iterations=2), on_iteration=standard.append, random_return=21.52)
        assert not arts[0].rewind_target[0].equals(standard[0].rewind_target[0])


class TestBC:
    def test_bc_imp_with_expert_file(self, tmp_path):
        spec = NetworkSpec((4, 8, 2), output_head="softmax-logits")
        params, _ = init_network(spec, seed=0)
        path = tmp_path / "expert.npz"
        save_checkpoint(path, [spec], [params], None, {"note": "untrained"})
        rep = run_imp(tiny(algorithm="bc", expert_path=str(path), iterations=2), random_return=21.52)
        assert rep.status == "ok" and len(rep.records) == 2


class TestInputKeep:
    def test_dense_transfer_reads_only_kept_inputs(self):
        cfg = tiny(input_keep=(2, 3), iterations=1)
        arts = []
        run_imp(cfg, on_iteration=arts.append, random_return=21.52)
        first = arts[0].trained[0].weights[0]
        assert np.all(first[:, [0, 1]] == 0)
        assert np.any(first[:, [2, 3]] != 0)
        assert harness.eliminated_inputs(arts[0].masks[0]) == [0, 1]

    def test_input_keep_masks_shape(self):
        spec = NetworkSpec((4, 3, 2))
        (m,) = harness.input_keep_masks([spec], [1])
        assert isinstance(m, MaskSet)
        assert m.masks[0][:, 1].all() and not m.masks[0][:, [0, 2, 3]].any()

"""Tests for the model-learning planning loop."""

import csv

import numpy as np
import pytest

from tnmdp.contraction import expected_return
from tnmdp.fmdp import PolicySet, uniform_policy, validate
from tnmdp.optimize import optimize_sarl
from tnmdp.planning import (PlanConfig, init_uniform_model, plan, update_model,
                            write_plan_csv)
from tnmdp.walker import WalkerConfig, build_sarl_walker, sample_trajectories

# optimum of the noisy (sigma=1) T=20 walker, computed once by optimizing against
# the true model; re-derived in test_noisy_optimum_fixture
NOISY_OPTIMUM = -5.531671695979687


@pytest.fixture(scope="module")
def walker20():
    return build_sarl_walker(WalkerConfig(20))


class TestUniformModel:
    def test_entries_and_structure(self, walker20):
        spec, _, _ = walker20
        model = init_uniform_model(spec)
        assert np.all(model[1] == 1 / (41 * 4))
        assert model.tensors[0] is model.tensors[18]
        assert model.tensors[19] is not model.tensors[0]
        assert validate(model) == []

    def test_minus_fifty_for_any_policy(self, walker20):
        spec, _, p0 = walker20
        model = init_uniform_model(spec)
        rng = np.random.default_rng(0)
        for pol in [uniform_policy(spec)] + [PolicySet([rng.dirichlet([1, 1], 41).T] * 20)
                                             for _ in range(3)]:
            assert expected_return(spec, model, pol, p0) == pytest.approx(-50.0, abs=1e-9)


class TestUpdateModel:
    def _one_step(self, spec, model):
        up = np.zeros((2, spec.n_states))
        up[1] = 1.0
        return sample_trajectories(spec, model, PolicySet([up] * spec.horizon), 5, 0.0, 0)

    def test_alpha_one_point_mass(self, walker20):
        spec, model, _ = walker20
        recs = self._one_step(spec, model)
        new = update_model(spec, init_uniform_model(spec), recs, 1.0)
        col = new[1][:, :, spec.state_index(0), spec.action_index(1)]
        assert col[spec.state_index(1), spec.reward_index(0)] == 1.0
        assert col.sum() == pytest.approx(1.0)

    def test_alpha_zero_unchanged(self, walker20):
        spec, model, _ = walker20
        start = init_uniform_model(spec)
        new = update_model(spec, start, self._one_step(spec, model), 0.0)
        assert all(np.array_equal(a, b) for a, b in zip(new.tensors, start.tensors))

    def test_alpha_point_four(self, walker20):
        spec, model, _ = walker20
        new = update_model(spec, init_uniform_model(spec), self._one_step(spec, model), 0.4)
        v = new[1][spec.state_index(1), spec.reward_index(0), spec.state_index(0),
                   spec.action_index(1)]
        u = 1 / (41 * 4)
        assert v == pytest.approx(u + 0.4 * (1 - u))
        assert v == pytest.approx(0.4037, abs=1e-4)

    def test_unvisited_slices_kept(self, walker20):
        spec, model, _ = walker20
        new = update_model(spec, init_uniform_model(spec), self._one_step(spec, model), 0.4)
        assert np.all(new[1][:, :, spec.state_index(-3), :] == 1 / (41 * 4))
        assert np.all(new[1][:, :, spec.state_index(0), spec.action_index(-1)] == 1 / (41 * 4))
        assert validate(new) == []

    def test_final_step_separate(self, walker20):
        spec, model, _ = walker20
        new = update_model(spec, init_uniform_model(spec), self._one_step(spec, model), 1.0)
        # only the last transition (19 -> 20) lands in M_T
        assert new[20][spec.state_index(20), spec.reward_index(-10), spec.state_index(19),
                       spec.action_index(1)] == 1.0
        assert np.all(new[20][:, :, spec.state_index(0)] == 1 / (41 * 4))
        assert new.tensors[0] is new.tensors[18]

    def test_pooled_empirical(self):
        spec, model, p0 = build_sarl_walker(WalkerConfig(4, sigma=1.0))
        recs = sample_trajectories(spec, model, uniform_policy(spec), 200, 0.0, 1)
        new = update_model(spec, init_uniform_model(spec), recs, 1.0)
        counts = np.zeros(spec.transition_shape())
        for r in recs:
            for k in range(3):
                s, a, sp, rw = r.states[0][k], r.actions[0][k], r.states[0][k + 1], r.rewards[0][k]
                counts[spec.state_index(sp), spec.reward_index(rw), spec.state_index(s),
                       spec.action_index(a)] += 1
        visits = counts.sum(axis=(0, 1))
        seen = visits > 0
        assert np.allclose(new[1][:, :, seen], counts[:, :, seen] / visits[seen])


class TestPlan:
    def test_epoch_zero(self, walker20):
        spec, model, p0 = walker20
        logs = plan(spec, model, PlanConfig(n_epochs=0), p0)
        assert len(logs) == 1
        assert logs[0].e_return_model == pytest.approx(-50.0, abs=1e-9)

    def test_no_trajectories(self, walker20):
        spec, model, p0 = walker20
        logs = plan(spec, model, PlanConfig(n_traj=0, n_epochs=3), p0)
        assert len({(l.e_return_model, l.e_return_true) for l in logs}) == 1

    def test_deterministic_converges(self, walker20):
        spec, model, p0 = walker20
        logs = plan(spec, model, PlanConfig(0.4, 0.2, 30, 2, seed=1), p0)
        assert any(l.e_return_true == pytest.approx(1.0, abs=1e-9) for l in logs[1:])

    def test_reproducible(self, walker20):
        spec, model, p0 = walker20
        cfg = PlanConfig(0.4, 0.2, 10, 3, seed=4)
        assert plan(spec, model, cfg, p0) == plan(spec, model, cfg, p0)

    def test_intermediate_minus_ten_reachable(self, walker20):
        spec, model, p0 = walker20
        seen = set()
        for seed in range(30):
            logs = plan(spec, model, PlanConfig(0.4, 0.2, 5, 2, seed=seed), p0)
            seen.update(round(l.e_return_true, 9) for l in logs)
        assert -10.0 in seen

    def test_config_errors(self):
        with pytest.raises(ValueError):
            PlanConfig(alpha=1.5)
        with pytest.raises(ValueError):
            PlanConfig(epsilon=-0.1)
        with pytest.raises(ValueError):
            PlanConfig(n_traj=-1)

    def test_csv(self, tmp_path, walker20):
        spec, model, p0 = walker20
        logs = plan(spec, model, PlanConfig(n_epochs=1), p0)
        write_plan_csv(logs, tmp_path / "plan.csv")
        rows = list(csv.reader(open(tmp_path / "plan.csv")))
        assert rows[0] == ["epoch", "e_model", "e_true"]
        assert len(rows) == 3


class TestNoisyPlanning:
    def test_noisy_optimum_fixture(self):
        spec, model, p0 = build_sarl_walker(WalkerConfig(20, sigma=1.0))
        pol, _ = optimize_sarl(spec, model, uniform_policy(spec), p0)
        assert expected_return(spec, model, pol, p0) == pytest.approx(NOISY_OPTIMUM, abs=1e-9)

    @pytest.mark.parametrize("seed", range(3))
    def test_curves_approach_optimum(self, seed):
        spec, model, p0 = build_sarl_walker(WalkerConfig(20, sigma=1.0))
        logs = plan(spec, model, PlanConfig(0.4, 0.2, 30, 12, seed=seed), p0)
        assert any(abs(l.e_return_model - NOISY_OPTIMUM) <= 0.5 for l in logs)
        assert any(abs(l.e_return_true - NOISY_OPTIMUM) <= 0.5 for l in logs)
        assert all(l.e_return_true <= NOISY_OPTIMUM + 1e-9 for l in logs)

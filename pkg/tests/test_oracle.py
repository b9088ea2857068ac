"""Sanity checks on the brute-force references themselves."""

import numpy as np
import pytest

from tnmdp.fmdp import FmdpSpec, InitialDistribution, PolicySet, TransitionModel, uniform_policy
from tnmdp.optimize import optimize_sarl
from tnmdp.walker import WalkerConfig, build_sarl_walker

from instances import random_instance
from oracle import (OracleTooLarge, oracle_expected_return, oracle_optimal_policy,
                    trajectory_count)


class TestExpectedReturnOracle:
    def test_zero_rewards(self):
        spec, model, pol, p0 = random_instance(np.random.default_rng(0), 3, 2, 1, 2)
        spec = FmdpSpec(3, 2, 2, (0.0,))
        assert oracle_expected_return(spec, model, pol, p0).expected_return == 0.0

    def test_single_step_formula(self):
        spec, model, pol, p0 = random_instance(np.random.default_rng(1), 3, 2, 3, 1)
        m, pi, p = model[1], pol[1], p0.p0
        direct = sum(p[s] * pi[a, s] * m[sp, r, s, a] * spec.reward_values[r]
                     for s in range(3) for a in range(2) for sp in range(3) for r in range(3))
        assert oracle_expected_return(spec, model, pol, p0).expected_return == pytest.approx(direct)

    def test_term_count(self):
        spec, model, pol, p0 = random_instance(np.random.default_rng(2), 3, 2, 2, 3)
        res = oracle_expected_return(spec, model, pol, p0)
        assert res.n_terms == 3 * (3 * 2 * 2) ** 3
        assert trajectory_count(spec) == res.n_terms

    def test_too_large(self):
        spec = FmdpSpec(41, 2, 20, (-10, -1, 0, 1))
        with pytest.raises(OracleTooLarge) as err:
            oracle_expected_return(spec, None, None, None)
        assert err.value.count == trajectory_count(spec)


class TestPolicyOracle:
    def test_equal_rewards(self):
        spec = FmdpSpec(2, 2, 2, (3.0,))
        m = np.full((2, 1, 2, 2), 0.5)
        _, v = oracle_optimal_policy(spec, TransitionModel([m, m]), InitialDistribution([1.0, 0.0]))
        assert v == pytest.approx(6.0)

    def test_single_action(self):
        spec, model, pol, p0 = random_instance(np.random.default_rng(3), 3, 1, 2, 2)
        best_pol, v = oracle_optimal_policy(spec, model, p0)
        assert np.all(best_pol[1] == 1.0)
        assert v == pytest.approx(oracle_expected_return(spec, model, pol, p0).expected_return)

    def test_tiny_walker(self):
        # T=3 would need 2**21 policies; T=2 keeps the search at 2**10
        spec, model, p0 = build_sarl_walker(WalkerConfig(2))
        _, v = oracle_optimal_policy(spec, model, p0)
        _, rep = optimize_sarl(spec, model, uniform_policy(spec), p0)
        assert v == pytest.approx(rep.returns_after_each_update[-1]) == pytest.approx(1.0)

    def test_too_large(self):
        spec = FmdpSpec(10, 2, 2, (0.0,))
        with pytest.raises(OracleTooLarge):
            oracle_optimal_policy(spec, None, None)

"""Tests for SVD factorization of joint two-agent tensors."""

import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tnmdp.contraction import expected_return
from tnmdp.decompose import (decompose_initial, decompose_joint, decompose_policy,
                             expected_return_decomposed, first_exact, reconstruct,
                             reconstruction_error, svd_scan, write_scan_csv)
from tnmdp.fmdp import FmdpSpec, InitialDistribution, PolicySet, TransitionModel, uniform_policy
from tnmdp.walker import WalkerConfig, build_marl_walker

from instances import random_instance


def _separable(rng, ns=3, nr=2, na=2):
    singles = []
    for _ in range(2):
        m = rng.random((ns, nr, ns, na))
        singles.append(m / m.sum(axis=(0, 1), keepdims=True))
    return np.einsum("upxi,vqyj->uvpqxyij", *singles)


def _full_chi(mj):
    s = mj.shape
    return min(s[0] * s[2] * s[4] * s[6], s[1] * s[3] * s[5] * s[7])


def _decomposed_eval(spec, model, pol, p0, chi=None):
    dm = [decompose_joint(m, chi or _full_chi(m)) for m in model.tensors]
    pf = [decompose_policy(pol.joint_tensor(t), chi or 64) for t in range(1, spec.horizon + 1)]
    return expected_return_decomposed(spec, dm, pf, decompose_initial(p0.p0, chi or 64))


class TestDecomposeJoint:
    def test_separable_chi_one(self):
        mj = _separable(np.random.default_rng(0))
        d = decompose_joint(mj, 1)
        assert d.chi == 1
        assert d.m1.shape == (3, 2, 3, 2, 1) and d.m2.shape == (1, 3, 2, 3, 2)
        assert reconstruction_error(mj, d) <= 1e-10

    def test_non_separable_chi_one(self):
        _, model, _, _ = random_instance(np.random.default_rng(1), 2, 2, 2, 1, n_agents=2)
        assert reconstruction_error(model[1], decompose_joint(model[1], 1)) > 1e-3

    def test_full_rank_exact(self):
        _, model, _, _ = random_instance(np.random.default_rng(2), 3, 2, 2, 1, n_agents=2)
        mj = model[1]
        assert reconstruction_error(mj, decompose_joint(mj, _full_chi(mj))) <= 1e-8

    @pytest.mark.parametrize("split", ["left", "right"])
    def test_split_conventions_agree(self, split):
        _, model, _, _ = random_instance(np.random.default_rng(3), 2, 2, 2, 1, n_agents=2)
        a = reconstruct(decompose_joint(model[1], 5, "sqrt"))
        b = reconstruct(decompose_joint(model[1], 5, split))
        assert np.allclose(a, b, atol=1e-12)

    def test_factors_not_probabilities(self):
        _, model, _, _ = random_instance(np.random.default_rng(4), 3, 2, 2, 1, n_agents=2)
        d = decompose_joint(model[1], 4)
        assert (d.m1 < 0).any() or (d.m2 < 0).any()

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            decompose_joint(np.ones((2, 2, 2, 2)), 1)
        with pytest.raises(ValueError):
            reconstruction_error(np.ones((1,) * 8), decompose_joint(np.ones((2,) * 8), 1))


class TestScan:
    def test_rows(self):
        _, model, _, _ = random_instance(np.random.default_rng(5), 2, 2, 2, 1, n_agents=2)
        rows = svd_scan(model[1], [1, 2, 3, 16, 17])
        assert [r[0] for r in rows] == [1, 2, 3, 16, 17]
        # per-agent side is N_S * N_R * N_S * N_A = 16
        assert rows[0][2] == 2 * 1 * 16 and rows[3][2] == 2 * 16 * 16
        alphas = [r[1] for r in rows]
        assert all(b <= a + 1e-10 for a, b in zip(alphas, alphas[1:]))
        assert rows[0][1] > 0
        assert first_exact(rows) <= 16

    def test_scan_matches_decompose(self):
        _, model, _, _ = random_instance(np.random.default_rng(6), 2, 2, 2, 1, n_agents=2)
        rows = svd_scan(model[1], [2, 4])
        for chi, alpha, _ in rows:
            assert alpha == pytest.approx(reconstruction_error(model[1], decompose_joint(model[1], chi)),
                                          abs=1e-10)

    def test_empty(self):
        with pytest.raises(ValueError):
            svd_scan(np.ones((2,) * 8), [])

    def test_walker_t3_rank(self):
        _, model, _ = build_marl_walker(WalkerConfig(3, n_agents=2))
        rows = svd_scan(model[1], range(1, 20))
        alphas = [r[1] for r in rows]
        assert all(b <= a + 1e-8 for a, b in zip(alphas, alphas[1:]))
        assert first_exact(rows) is not None

    def test_csv(self, tmp_path):
        write_scan_csv([(1, 0.5, 10), (2, 0.0, 20)], tmp_path / "svd.csv")
        rows = list(csv.reader(open(tmp_path / "svd.csv")))
        assert rows == [["chi", "alpha", "elements"], ["1", "0.5", "10"], ["2", "0.0", "20"]]


class TestDecomposedReturn:
    def test_walker_t3_full_chi(self):
        spec, model, p0 = build_marl_walker(WalkerConfig(3, n_agents=2))
        rng = np.random.default_rng(7)
        pol = PolicySet([rng.dirichlet([1] * 4, size=(7, 7)).transpose(2, 0, 1).reshape(2, 2, 7, 7)
                         for _ in range(3)])
        want = expected_return(spec, model, pol, p0)
        assert _decomposed_eval(spec, model, pol, p0) == pytest.approx(want, abs=1e-8)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 5), st.integers(1, 3))
    def test_random_full_chi(self, seed, ns, T):
        spec, model, pol, p0 = random_instance(np.random.default_rng(seed), ns, 2, 2, T,
                                               n_agents=2)
        want = expected_return(spec, model, pol, p0)
        assert _decomposed_eval(spec, model, pol, p0) == pytest.approx(want, abs=1e-8)

    def test_separable_chi_one(self):
        rng = np.random.default_rng(8)
        spec = FmdpSpec(3, 2, 2, (-1.0, 2.0), n_agents=2)
        model = TransitionModel([_separable(rng), _separable(rng)])
        p1 = rng.dirichlet([1, 1], size=3).T
        p2 = rng.dirichlet([1, 1], size=3).T
        pol = PolicySet([np.einsum("ix,jy->ijxy", p1, p2)] * 2)
        p0 = InitialDistribution(np.outer([0.2, 0.3, 0.5], [0.6, 0.1, 0.3]))
        want = expected_return(spec, model, pol, p0)
        assert _decomposed_eval(spec, model, pol, p0, chi=1) == pytest.approx(want, abs=1e-10)

    def test_truncation_error_shrinks(self):
        spec, model, pol, p0 = random_instance(np.random.default_rng(9), 3, 2, 2, 2, n_agents=2)
        want = expected_return(spec, model, pol, p0)
        errs = [abs(_decomposed_eval(spec, model, pol, p0, chi) - want) for chi in (1, 4, 36)]
        assert errs[-1] <= 1e-8
        assert errs[-1] <= min(errs[:-1])

    def test_length_mismatch(self):
        spec, model, pol, p0 = random_instance(np.random.default_rng(0), 2, 2, 2, 2, n_agents=2)
        with pytest.raises(ValueError):
            expected_return_decomposed(spec, [decompose_joint(model[1], 4)], [], decompose_initial(p0.p0, 2))


@pytest.mark.parametrize("T", [2, 3, 4])
def test_noise_does_not_change_walker_rank(T):
    # the joint tensor factors through the reward coupling of next states, and
    # both motion maps have independent rows, so the rank cannot depend on sigma
    ranks = []
    for sigma in (0.0, 1.0):
        _, model, _ = build_marl_walker(WalkerConfig(T, sigma=sigma, n_agents=2))
        side = (2 * T + 1) * 6 * (2 * T + 1) * 2
        ranks.append(first_exact(svd_scan(model[1], range(1, min(side, 40) + 1))))
    assert ranks[0] == ranks[1]

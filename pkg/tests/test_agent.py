import numpy as np
import pytest

from qreps.agent import AgentConfig, QrepsPolicy, policy_probs, policy_update, run_qreps, run_qreps_exact
from qreps.envs import CartPole, load_env, two_state_stochastic
from qreps.features import random_relu_features, tabular_features
from qreps.saddle import InnerOptConfig


def _policy(S=3, A=2, alpha=1.0, seed=0):
    rng = np.random.default_rng(seed)
    fmap = tabular_features(S, A)
    return QrepsPolicy(np.log(rng.dirichlet(np.ones(A), size=S)), np.zeros(fmap.dim), alpha, fmap)


class TestPolicy:
    def test_zero_theta_is_prior(self):
        pol = _policy()
        for x in range(3):
            np.testing.assert_allclose(policy_probs(pol, x), np.exp(pol.prior_log[x]), atol=1e-15)

    def test_constant_q_row_is_prior(self):
        pol = policy_update(_policy(), np.repeat([4.0, -1.0, 2.5], 2))
        np.testing.assert_allclose(pol.table(), np.exp(pol.prior_log), atol=1e-12)

    def test_softmax_value(self):
        fmap = tabular_features(1, 2)
        pol = QrepsPolicy.uniform(fmap, 1.0, 1)
        np.testing.assert_allclose(policy_probs(policy_update(pol, [1.0, 0.0]), 0), [0.7311, 0.2689], atol=5e-5)

    def test_rows_normalized_extreme_alpha(self, rng):
        fmap = tabular_features(6, 4)
        pol = QrepsPolicy.uniform(fmap, 1e4, 6)
        pol = policy_update(pol, rng.normal(scale=50, size=24))
        t = pol.table()
        assert np.all(t >= 0) and np.max(np.abs(t.sum(axis=1) - 1)) <= 1e-12

    def test_relu_policy(self, rng):
        fmap = random_relu_features(4, 20, 2)
        pol = policy_update(QrepsPolicy.uniform(fmap, 0.5), rng.normal(size=fmap.dim))
        p = policy_probs(pol, rng.normal(size=4))
        assert p.shape == (2,) and p.sum() == pytest.approx(1.0, abs=1e-12)


class TestUpdate:
    def test_zero_update(self):
        pol = _policy()
        np.testing.assert_array_equal(policy_update(pol, np.zeros(6)).table(), pol.table())

    def test_additive(self, rng):
        pol = _policy()
        a, b = rng.normal(size=(2, 6))
        np.testing.assert_allclose(policy_update(policy_update(pol, a), b).table(), policy_update(pol, a + b).table(), atol=1e-12)

    def test_explicit_table(self, rng):
        pol = _policy(alpha=0.7)
        q = rng.normal(size=6)
        w = pol.table() * np.exp(0.7 * q.reshape(3, 2))
        np.testing.assert_allclose(policy_update(pol, q).table(), w / w.sum(axis=1, keepdims=True), atol=1e-12)

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            policy_update(_policy(), np.zeros(5))


class TestRuns:
    def test_exact_two_state_within_30_updates(self):
        rec = run_qreps(two_state_stochastic(), AgentConfig(loss="exact", iterations=30), 0)
        assert rec.complete and max(rec.returns_normalized) >= 0.99

    def test_zero_iterations(self):
        rec = run_qreps(two_state_stochastic(), AgentConfig(iterations=0), 0)
        assert rec.iterations == [0] and rec.complete
        assert rec.returns_raw[0] == pytest.approx(0.26625, abs=1e-12)

    def test_bitwise_repeatable(self):
        cfg = AgentConfig(iterations=5, horizon=50)
        a, b = (run_qreps(load_env("wide-tree"), cfg, 4) for _ in range(2))
        assert a.returns_raw == b.returns_raw

    def test_seeds_differ(self):
        cfg = AgentConfig(iterations=5, horizon=50)
        assert run_qreps(load_env("wide-tree"), cfg, 1).returns_raw != run_qreps(load_env("wide-tree"), cfg, 2).returns_raw

    @pytest.mark.parametrize("name", ["two-state-stochastic", "single-chain"])
    def test_exact_monotone_improvement(self, name):
        rec = run_qreps_exact(load_env(name), AgentConfig(iterations=40), 0)
        assert np.all(np.diff(rec.returns_normalized) >= -1e-6)

    def test_exact_needs_tabular(self):
        with pytest.raises(TypeError):
            run_qreps_exact(CartPole(0), AgentConfig(iterations=1))

    def test_abort_is_flagged(self):
        cfg = AgentConfig(iterations=3, exact_tol=1e-300, loss="exact")
        rec = run_qreps(two_state_stochastic(), cfg, 0)
        assert not rec.complete and rec.error and rec.iterations[0] == 0

    def test_normalized_at_most_one(self):
        rec = run_qreps(load_env("two-state-deterministic"), AgentConfig(iterations=20, loss="exact"), 0)
        assert max(rec.returns_normalized) <= 1 + 1e-9

    def test_cart_pole_runs(self):
        cfg = AgentConfig(eta=0.01, alpha=0.01, gamma=0.99, iterations=2, episodes_per_update=2,
                          inner=InnerOptConfig(beta=0.08, learner="adam", sampler="br", steps=20))
        rec = run_qreps(CartPole(0), cfg, 0)
        assert rec.complete and len(rec.returns_raw) == 2
        assert all(0 < r <= 200 for r in rec.returns_raw)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            AgentConfig(eta=0)
        with pytest.raises(ValueError):
            AgentConfig(loss="mse")

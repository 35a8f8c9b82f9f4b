import numpy as np
import pytest

from qreps import lbe as L
from qreps import oracle
from qreps.envs import two_state_deterministic, two_state_stochastic
from qreps.harness.checks import two_state_context

from conftest import context_for, random_context


class TestTiltedDistribution:
    def test_constant_delta_returns_reference(self, rng):
        ctx = random_context(rng)
        c = ctx.replace(mdp=ctx.mdp.replace(reward=np.full(ctx.mdp.reward.shape, -0.3)))
        np.testing.assert_allclose(oracle.tilted_distribution(np.zeros(c.fmap.dim), c), c.p_ref, atol=1e-15)

    def test_normalized(self, rng):
        for _ in range(20):
            ctx = random_context(rng)
            q = oracle.tilted_distribution(rng.normal(scale=3, size=ctx.fmap.dim), ctx)
            assert abs(q.sum() - 1) <= 1e-12

    def test_hand_enumeration(self, rng):
        ctx = context_for(two_state_stochastic(discount=0.9), eta=0.5)
        theta = rng.normal(size=4)
        w = np.array([[ctx.p_ref[x, a] * np.exp(0.5 * L.bellman_error_exact(theta, ctx, x, a)) for a in range(2)] for x in range(2)])
        np.testing.assert_allclose(oracle.tilted_distribution(theta, ctx), w / w.sum(), atol=1e-12)


class TestMinimizer:
    def test_coordinate_probe(self, rng):
        ctx = random_context(rng)
        theta = oracle.exact_lbe_minimizer(ctx)
        f0 = L.lbe(theta, ctx)
        for e in np.eye(ctx.fmap.dim):
            assert f0 <= L.lbe(theta + 0.01 * e, ctx) and f0 <= L.lbe(theta - 0.01 * e, ctx)

    def test_matches_grid_search(self):
        ctx = context_for(two_state_deterministic(discount=0.9))
        theta = oracle.exact_lbe_minimizer(ctx)
        _, grid_best = oracle.grid_search_minimum(ctx)
        assert abs(L.lbe(theta, ctx) - grid_best) <= 1e-3
        assert L.lbe(theta, ctx) <= grid_best + 1e-12

    def test_restarts_agree(self, rng):
        ctx = random_context(rng)
        vals = [L.lbe(oracle.exact_lbe_minimizer(ctx, rng.normal(scale=3, size=ctx.fmap.dim)), ctx) for _ in range(10)]
        assert max(vals) - min(vals) <= 1e-9

    def test_large_eta_alpha(self):
        ctx = two_state_context(eta=10.0, alpha=10.0)
        theta = oracle.exact_lbe_minimizer(ctx, tol=1e-9)
        assert np.max(np.abs(L.grad_lbe(theta, ctx))) <= 1e-9


class TestDecomposition:
    def test_zero_at_optimum(self):
        ctx = two_state_context()
        star = oracle.exact_lbe_minimizer(ctx)
        rep = oracle.decomposition_check(star, ctx, star)
        assert max(abs(rep.loss_gap), abs(rep.kl_term), abs(rep.cond_term)) <= 1e-9

    def test_identity_and_signs(self, rng):
        ctx = two_state_context()
        star = oracle.exact_lbe_minimizer(ctx)
        for _ in range(20):
            rep = oracle.decomposition_check(star + rng.normal(size=4), ctx, star)
            assert rep.residual <= 1e-6
            assert rep.kl_term >= -1e-12 and rep.cond_term >= -1e-12


class TestBias:
    def test_deterministic_mdp_no_bias(self):
        ctx = context_for(two_state_deterministic(discount=0.99))
        for _, gap, at_min in oracle.elbe_bias_curve(ctx, (0.1, 1.0, 10.0)):
            assert abs(gap) <= 1e-8 and abs(at_min) <= 1e-10

    def test_stochastic_mdp_bias_grows(self):
        rows = oracle.elbe_bias_curve(two_state_context(), (0.1, 0.5, 2.0, 10.0))
        for col in (1, 2):
            bias = np.array([r[col] for r in rows])
            assert np.all(bias >= -1e-10) and np.all(np.diff(bias) >= -1e-10)
            assert bias[0] <= bias[-1]


class TestActionGap:
    def test_direct(self):
        assert oracle.action_gap([2.0, 1.0], 0) == 1.0
        assert oracle.action_gap([0.5, 0.5, 0.5], 1) == 0.0
        assert oracle.action_gap([1.0, 2.0], 0) == -1.0

    def test_needs_two_actions(self):
        with pytest.raises(ValueError):
            oracle.action_gap([1.0], 0)

    def test_slope(self):
        xs = np.array([1.0, 10.0, 100.0])
        assert oracle.loglog_slope(xs, 3.0 / xs) == pytest.approx(-1.0, abs=1e-12)

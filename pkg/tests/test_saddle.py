import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qreps import lbe as L
from qreps import oracle, saddle
from qreps.envs import two_state_deterministic
from qreps.features import DimensionMismatch
from qreps.mdp import sample_batch
from qreps.prepared import evaluate

from conftest import context_for, random_context


def _setup(rng, n=20, **kw):
    ctx = random_context(rng, **kw)
    pb = L.prepare(sample_batch(ctx.mdp, ctx.prior, n, rng), ctx)
    return ctx, pb, rng.normal(size=ctx.fmap.dim)


class TestObjective:
    def test_single_transition(self, rng):
        ctx, pb, theta = _setup(rng, n=1)
        assert saddle.s_objective(theta, [1.0], pb) == pytest.approx(L.elbe(theta, pb), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_best_response_attains_elbe(self, seed):
        rng = np.random.default_rng(seed)
        _, pb, theta = _setup(rng, n=int(rng.integers(1, 60)))
        z = saddle.best_response(theta, pb)
        assert saddle.s_objective(theta, z, pb) == pytest.approx(L.elbe(theta, pb), abs=1e-10)

    def test_uniform_z_constant_delta(self, rng):
        ctx, pb, theta = _setup(rng)
        terms = evaluate(theta, pb)
        pb_const = pb.with_params(rewards=pb.rewards - terms.deltas + 0.25)
        z = saddle.uniform_sampler(pb.n)
        assert saddle.s_objective(theta, z, pb_const) == pytest.approx(0.25 + terms.nu_term, abs=1e-12)

    def test_z_length_checked(self, rng):
        _, pb, theta = _setup(rng)
        with pytest.raises(DimensionMismatch):
            saddle.s_objective(theta, np.ones(3) / 3, pb)


class TestLearnerGradient:
    def test_zero_discount(self, rng):
        ctx, _, theta = _setup(rng)
        c = ctx.replace(gamma=0.0)
        pb = L.prepare(sample_batch(ctx.mdp, ctx.prior, 1, rng), c)
        g = saddle.learner_grad_sampled(theta, [1.0], pb, rng=3)
        assert g[pb.sa_idx[0, 0]] <= 0 and np.sum(g) == pytest.approx(0.0, abs=1e-15)
        assert np.abs(g).sum() in (0.0, pytest.approx(2.0))

    def test_estimates_bounded(self, rng):
        _, pb, theta = _setup(rng)
        z = rng.dirichlet(np.ones(pb.n))
        for seed in range(200):
            assert np.abs(saddle.learner_grad_sampled(theta, z, pb, rng=seed)).sum() <= 2 + 1e-12

    def test_unbiased(self, rng):
        from qreps import _kernel_py

        _, pb, theta = _setup(rng, n=8)
        z = rng.dirichlet(np.ones(pb.n))
        terms = evaluate(theta, pb)
        draws = np.array([_kernel_py.sampled_gradient(u, z, terms, pb) for u in rng.random((100_000, 5))])
        mean, se = draws.mean(axis=0), draws.std(axis=0) / np.sqrt(len(draws))
        exact = saddle.learner_grad_exact(theta, z, pb)
        assert np.all(np.abs(mean - exact) <= 3 * se + 1e-12)

    def test_matches_finite_differences(self, rng):
        _, pb, theta = _setup(rng)
        z = rng.dirichlet(np.ones(pb.n))
        h = 1e-5
        fd = np.array([(saddle.s_objective(theta + h * e, z, pb) - saddle.s_objective(theta - h * e, z, pb)) / (2 * h) for e in np.eye(len(theta))])
        np.testing.assert_allclose(saddle.learner_grad_exact(theta, z, pb), fd, rtol=1e-5, atol=1e-7)

    def test_envelope_at_best_response(self, rng):
        _, pb, theta = _setup(rng)
        z = saddle.best_response(theta, pb)
        np.testing.assert_allclose(saddle.learner_grad_exact(theta, z, pb), L.grad_elbe(theta, pb), atol=1e-8)

    def test_symmetric_batch(self):
        ctx = context_for(two_state_deterministic(discount=0.9))
        from qreps.mdp import TransitionBatch

        b = TransitionBatch(np.array([0, 1]), np.array([0, 0]), np.array([1.0, 2.0]), np.array([0, 1]), np.zeros(2, bool), np.array([0]))
        pb = L.prepare(b, ctx.replace(nu0=np.array([0.5, 0.5])))
        g = saddle.learner_grad_exact(np.zeros(4), np.array([0.5, 0.5]), pb)
        assert g[1] == pytest.approx(g[3], abs=1e-15)


class TestSampler:
    def test_uniform_zero_delta(self, rng):
        _, pb, theta = _setup(rng)
        pb0 = pb.with_params(rewards=pb.rewards - evaluate(theta, pb).deltas)
        np.testing.assert_allclose(saddle.sampler_grad(theta, saddle.uniform_sampler(pb.n), pb0), 0.0, atol=1e-12)

    def test_two_point_value(self):
        # N = 2, z = (0.75, 0.25), zero Bellman errors, eta = 1
        from qreps.prepared import PreparedBatch

        pb = PreparedBatch(
            rewards=np.zeros(2), sa_idx=np.zeros((2, 1)), sa_val=np.zeros((2, 1)), next_prob=np.ones((2, 1)),
            next_idx=np.zeros((2, 1, 1, 1)), next_val=np.zeros((2, 1, 1, 1)), next_logprior=np.zeros((2, 1, 1)),
            init_weight=np.ones(1), init_idx=np.zeros((1, 1, 1)), init_val=np.zeros((1, 1, 1)),
            init_logprior=np.zeros((1, 1)), gamma=0.9, eta=1.0, alpha=1.0, dim=1,
        )
        np.testing.assert_allclose(saddle.sampler_grad(np.zeros(1), [0.75, 0.25], pb), [-np.log(1.5), -np.log(0.5)], atol=1e-15)
        z = saddle.best_response(np.zeros(1), pb.with_params(rewards=np.array([np.log(3.0), 0.0])))
        np.testing.assert_allclose(z, [0.75, 0.25], atol=1e-15)

    def test_eg_fixed_point(self, rng):
        _, pb, theta = _setup(rng)
        z = saddle.best_response(theta, pb)
        np.testing.assert_allclose(saddle.eg_update(z, saddle.sampler_grad(theta, z, pb), 0.3), z, atol=1e-12)

    def test_eg_identities(self, rng):
        z = rng.dirichlet(np.ones(7))
        np.testing.assert_allclose(saddle.eg_update(z, np.full(7, 3.2), 0.5), z, atol=1e-15)
        np.testing.assert_allclose(saddle.eg_update(z, rng.normal(size=7), 0.0), z, atol=1e-15)

    def test_eg_converges_to_best_response(self, rng):
        for _ in range(5):
            _, pb, theta = _setup(rng)
            z = saddle.uniform_sampler(pb.n)
            step = 0.5 * pb.eta
            for _ in range(10_000):
                z = saddle.eg_update(z, saddle.sampler_grad(theta, z, pb), step)
            assert 0.5 * np.abs(z - saddle.best_response(theta, pb)).sum() <= 1e-6

    def test_constant_delta_uniform(self, rng):
        _, pb, theta = _setup(rng)
        pb_const = pb.with_params(rewards=pb.rewards - evaluate(theta, pb).deltas + 1.7)
        np.testing.assert_allclose(saddle.best_response(theta, pb_const), 1.0 / pb.n, atol=1e-15)

    def test_zero_weight_rejected(self, rng):
        _, pb, theta = _setup(rng, n=3)
        with pytest.raises(saddle.ZeroWeight):
            saddle.sampler_grad(theta, [1.0, 0.0, 0.0], pb)


class TestMinmax:
    def test_no_movement(self, rng):
        _, pb, theta = _setup(rng)
        res = saddle.minmax_solve(pb, None, saddle.InnerOptConfig(beta=0.0, steps=1), theta, rng=0)
        np.testing.assert_array_equal(res.theta, theta)

    def test_near_elbe_minimum_deterministic_mdp(self):
        mdp = two_state_deterministic(discount=0.995)
        ctx = context_for(mdp)
        pb = L.prepare(sample_batch(mdp, ctx.prior, 200, 0), ctx)
        from scipy.optimize import minimize

        # oracle: run plain minimization of the empirical loss to a tiny gradient
        ref = minimize(lambda t: L.elbe(t, pb), np.zeros(4), jac=lambda t: L.grad_elbe(t, pb), method="BFGS", options={"gtol": 1e-10})
        cfg = saddle.InnerOptConfig(grad_mode="exact")
        res = saddle.minmax_solve(pb, None, cfg, np.zeros(4), rng=0)
        assert L.elbe(res.theta, pb) - ref.fun <= 1e-2

    def test_frozen_best_response_decreases_elbe(self, rng):
        _, pb, theta = _setup(rng, n=50)
        cfg = saddle.InnerOptConfig(beta=0.05, sampler="br", grad_mode="exact", steps=200)
        res = saddle.minmax_solve(pb, None, cfg, theta, rng=0)
        assert res.trace[-1, 0] <= res.trace[0, 0]
        assert L.elbe(res.theta, pb) <= L.elbe(theta, pb)

    def test_average_of_iterates(self, rng):
        _, pb, theta = _setup(rng)
        cfg = saddle.InnerOptConfig(steps=1, grad_mode="exact", sampler="uniform")
        res = saddle.minmax_solve(pb, None, cfg, theta, rng=0)
        np.testing.assert_allclose(res.theta, 0.5 * (theta + res.last_theta), atol=1e-15)

    def test_deterministic_given_seed(self, rng):
        _, pb, theta = _setup(rng)
        a, b = (saddle.minmax_solve(pb, None, saddle.InnerOptConfig(), theta, rng=5).theta for _ in range(2))
        np.testing.assert_array_equal(a, b)

    def test_init_shape_checked(self, rng):
        _, pb, _ = _setup(rng)
        with pytest.raises(DimensionMismatch):
            saddle.minmax_solve(pb, None, saddle.InnerOptConfig(), np.zeros(pb.dim + 1))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            saddle.InnerOptConfig(sampler="nope")

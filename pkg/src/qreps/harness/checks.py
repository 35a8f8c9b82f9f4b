"""Self-check battery behind ``qreps check``.

Each check draws its own random instances from a fixed seed and returns a
:class:`CheckResult`. ``grad_fault`` adds a constant to every analytic LBE
gradient, which the gradient checks must catch.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .. import _kernel_py, oracle, saddle
from .. import lbe as L
from ..agent import AgentConfig, QrepsPolicy, policy_probs, run_qreps
from ..envs import two_state_stochastic
from ..features import tabular_features
from ..kernels import available_backends
from ..mdp import TabularMdp, effective_discount, exact_occupancy, sample_batch
from ..prepared import evaluate

__all__ = ["CheckResult", "CHECKS", "random_mdp", "random_context", "run_checks", "report_json"]


@dataclass
class CheckResult:
    name: str
    criterion: int
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0


def random_mdp(rng: np.random.Generator, n_states=None, n_actions=None, discount=None) -> TabularMdp:
    S = n_states or int(rng.integers(2, 6))
    A = n_actions or int(rng.integers(2, 4))
    gamma = discount if discount is not None else float(rng.uniform(0.5, 0.99))
    P = rng.dirichlet(np.full(S, 0.5), size=(S, A))
    r = rng.normal(size=(S, A))
    nu0 = rng.dirichlet(np.ones(S))
    return TabularMdp(P, r, gamma, nu0, name="random")


def random_context(rng: np.random.Generator, eta=None, alpha=None, **mdp_kw) -> L.LossContext:
    mdp = random_mdp(rng, **mdp_kw)
    prior = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
    fmap = tabular_features(mdp.n_states, mdp.n_actions)
    eta = eta if eta is not None else float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
    alpha = alpha if alpha is not None else float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
    return L.LossContext(mdp, fmap, prior, eta, alpha, p_ref=exact_occupancy(mdp, prior))


def _instance(rng, n=20):
    ctx = random_context(rng)
    batch = sample_batch(ctx.mdp, ctx.prior, n, rng)
    theta = rng.normal(size=ctx.fmap.dim)
    return ctx, batch, theta


def _central_diff(f, theta, h=1e-6):
    g = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def _rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


# criterion 1


def check_dv_equality(rng, grad_fault=0.0):
    worst = 0.0
    for _ in range(100):
        ctx, batch, theta = _instance(rng, n=int(rng.integers(5, 50)))
        pb = L.prepare(batch, ctx)
        z = saddle.best_response(theta, pb)
        worst = max(worst, abs(saddle.s_objective(theta, z, pb) - L.elbe(theta, pb)))
    return worst, 1e-6


def check_br_maximizes_s(rng, grad_fault=0.0):
    """No random sampler distribution beats the best response."""
    worst = -np.inf
    for _ in range(50):
        ctx, batch, theta = _instance(rng)
        pb = L.prepare(batch, ctx)
        top = saddle.s_objective(theta, saddle.best_response(theta, pb), pb)
        for z in rng.dirichlet(np.ones(pb.n), size=10):
            worst = max(worst, saddle.s_objective(theta, z, pb) - top)
    return max(worst, 0.0), 1e-9


# criterion 2


def check_grad_lbe_fd(rng, grad_fault=0.0):
    worst = 0.0
    for _ in range(50):
        ctx, _, theta = _instance(rng)
        analytic = L.grad_lbe(theta, ctx) + grad_fault
        worst = max(worst, _rel_err(analytic, _central_diff(lambda t: L.lbe(t, ctx), theta)))
    return worst, 1e-5


def check_grad_elbe_fd(rng, grad_fault=0.0):
    worst = 0.0
    for _ in range(50):
        ctx, batch, theta = _instance(rng)
        pb = L.prepare(batch, ctx)
        analytic = L.grad_elbe(theta, pb) + grad_fault
        worst = max(worst, _rel_err(analytic, _central_diff(lambda t: L.elbe(t, pb), theta)))
    return worst, 1e-5


def check_learner_grad_fd(rng, grad_fault=0.0):
    worst = 0.0
    for _ in range(50):
        ctx, batch, theta = _instance(rng)
        pb = L.prepare(batch, ctx)
        z = rng.dirichlet(np.ones(pb.n))
        analytic = saddle.learner_grad_exact(theta, z, pb) + grad_fault
        worst = max(worst, _rel_err(analytic, _central_diff(lambda t: saddle.s_objective(t, z, pb), theta)))
    return worst, 1e-5


def check_sampled_grad_unbiased(rng, grad_fault=0.0, draws=100_000):
    """Worst componentwise |mean - exact| in standard errors."""
    worst = 0.0
    for _ in range(3):
        ctx, batch, theta = _instance(rng)
        pb = L.prepare(batch, ctx)
        z = rng.dirichlet(np.ones(pb.n))
        terms = evaluate(theta, pb)
        exact = saddle.learner_grad_exact(theta, z, pb) + grad_fault
        u = rng.random((draws, 5))
        s = np.zeros(pb.dim)
        s2 = np.zeros(pb.dim)
        for row in u:
            g = _kernel_py.sampled_gradient(row, z, terms, pb)
            s += g
            s2 += g * g
        mean = s / draws
        se = np.sqrt(np.maximum(s2 / draws - mean**2, 0.0) / draws)
        dev = np.abs(mean - exact)
        worst = max(worst, float(np.max(np.where(se > 0, dev / np.maximum(se, 1e-300), dev * 1e12))))
    return worst, 3.0


# criterion 3


def check_grad_bound(rng, grad_fault=0.0):
    worst = 0.0
    for _ in range(100):
        ctx, _, theta = _instance(rng)
        worst = max(worst, float(np.abs(L.grad_lbe_q(theta * 3, ctx)).sum()))
    return worst, 2.0 + 1e-9


# criterion 4


def _midpoint_violation(f, rng, dim):
    t1, t2 = rng.normal(scale=2.0, size=(2, dim))
    lam = rng.random()
    return f(lam * t1 + (1 - lam) * t2) - (lam * f(t1) + (1 - lam) * f(t2))


def check_convexity_lbe(rng, grad_fault=0.0):
    worst = -np.inf
    for _ in range(100):
        ctx = random_context(rng)
        worst = max(worst, _midpoint_violation(lambda t: L.lbe(t, ctx), rng, ctx.fmap.dim))
    return max(worst, 0.0), 1e-10


def check_convexity_elbe(rng, grad_fault=0.0):
    worst = -np.inf
    for _ in range(100):
        ctx, batch, _ = _instance(rng)
        pb = L.prepare(batch, ctx)
        worst = max(worst, _midpoint_violation(lambda t: L.elbe(t, pb), rng, ctx.fmap.dim))
    return max(worst, 0.0), 1e-10


# criterion 5


def two_state_context(eta=0.5, alpha=0.5, horizon=200) -> L.LossContext:
    """Evaluation context of the uniform policy on the two-state stochastic MDP."""
    mdp = two_state_stochastic(discount=effective_discount(1.0, horizon))
    fmap = tabular_features(2, 2)
    prior = np.full((2, 2), 0.5)
    return L.LossContext(mdp, fmap, prior, eta, alpha, p_ref=exact_occupancy(mdp, prior))


def check_decomposition(rng, grad_fault=0.0):
    ctx = two_state_context()
    theta_star = oracle.exact_lbe_minimizer(ctx)
    worst = 0.0
    for _ in range(20):
        theta_k = theta_star + rng.normal(scale=1.0, size=4)
        worst = max(worst, oracle.decomposition_check(theta_k, ctx, theta_star).residual)
    return worst, 1e-6


# criterion 10


def check_flow_constraint(rng, grad_fault=0.0):
    worst = 0.0
    for _ in range(50):
        mdp = random_mdp(rng)
        pi = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
        d = exact_occupancy(mdp, pi)
        inflow = mdp.discount * np.einsum("xa,xay->y", d, mdp.transition) + (1 - mdp.discount) * mdp.initial_dist
        worst = max(worst, float(np.max(np.abs(d.sum(axis=1) - inflow))))
    return worst, 1e-9


def check_policy_normalized(rng, grad_fault=0.0):
    worst = 0.0
    for _ in range(50):
        S, A = int(rng.integers(2, 8)), int(rng.integers(2, 5))
        fmap = tabular_features(S, A)
        alpha = float(10 ** rng.uniform(-2, 3))
        prior = rng.dirichlet(np.ones(A), size=S)
        pol = QrepsPolicy(np.log(prior), rng.normal(scale=5.0, size=fmap.dim), alpha, fmap)
        for x in range(S):
            p = policy_probs(pol, x)
            worst = max(worst, abs(p.sum() - 1.0), float(max(0.0, -p.min())))
    return worst, 1e-10


def check_sampler_normalized(rng, grad_fault=0.0):
    worst = 0.0
    for _ in range(50):
        ctx, batch, theta = _instance(rng)
        pb = L.prepare(batch, ctx)
        z = saddle.uniform_sampler(pb.n)
        for _ in range(5):
            z = saddle.eg_update(z, saddle.sampler_grad(theta, z, pb), float(rng.uniform(0.01, 0.5)))
            worst = max(worst, abs(z.sum() - 1.0))
        worst = max(worst, abs(saddle.best_response(theta * 10, pb).sum() - 1.0))
    return worst, 1e-10


def check_value_bound(rng, grad_fault=0.0):
    """``max Q - log|A|/alpha <= V <= max Q`` for a uniform prior; reported as the worst excess."""
    worst = -np.inf
    for _ in range(200):
        A = int(rng.integers(2, 6))
        q = rng.normal(scale=3.0, size=A)
        alpha = float(10 ** rng.uniform(-1, 4))
        v = L.soft_value(q, np.full(A, 1.0 / A), alpha)
        worst = max(worst, abs(v - q.max()) - np.log(A) / alpha, v - q.max())
    return max(worst, 0.0), 1e-12


def check_seed_determinism(rng, grad_fault=0.0):
    from .records import format_row

    cfg = AgentConfig(iterations=3, horizon=50, keep_policies=False)
    env = two_state_stochastic()

    def once():
        rec = run_qreps(env, cfg, 7)
        return "\n".join(",".join(format_row(r)) for r in rec.rows())

    a, b = once(), once()
    return (0.0 if a == b else 1.0), 0.0


def check_backends_agree(rng, grad_fault=0.0):
    backends = available_backends()
    if len(backends) < 2:
        return 0.0, 0.0
    ctx, batch, theta = _instance(rng, n=40)
    pb = L.prepare(batch, ctx)
    worst = 0.0
    for sampler in saddle.SAMPLERS:
        for mode in saddle.GRAD_MODES:
            cfg = saddle.InnerOptConfig(steps=50, sampler=sampler, grad_mode=mode)
            res = [saddle.minmax_solve(pb, None, cfg, theta, rng=3, backend=b).theta for b in backends]
            worst = max(worst, float(np.max(np.abs(res[0] - res[1]))))
    return worst, 1e-10


CHECKS = (
    ("dv_equality", 1, check_dv_equality),
    ("best_response_maximizes_s", 1, check_br_maximizes_s),
    ("grad_lbe_finite_difference", 2, check_grad_lbe_fd),
    ("grad_elbe_finite_difference", 2, check_grad_elbe_fd),
    ("learner_grad_finite_difference", 2, check_learner_grad_fd),
    ("sampled_grad_unbiased", 2, check_sampled_grad_unbiased),
    ("grad_l1_bound", 3, check_grad_bound),
    ("convexity_lbe", 4, check_convexity_lbe),
    ("convexity_elbe", 4, check_convexity_elbe),
    ("decomposition_identity", 5, check_decomposition),
    ("flow_constraint", 10, check_flow_constraint),
    ("policy_rows_normalized", 10, check_policy_normalized),
    ("sampler_normalized", 10, check_sampler_normalized),
    ("value_operator_bound", 10, check_value_bound),
    ("seed_determinism", 10, check_seed_determinism),
    ("backends_agree", 10, check_backends_agree),
)


def run_checks(names=None, seed=0, grad_fault=0.0, fail_fast=False) -> list[CheckResult]:
    out = []
    for i, (name, crit, fn) in enumerate(CHECKS):
        if names and name not in names:
            continue
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        try:
            worst, tol = fn(rng, grad_fault=grad_fault)
            res = CheckResult(name, crit, bool(worst <= tol), float(worst), float(tol))
        except Exception as exc:
            res = CheckResult(name, crit, False, float("nan"), float("nan"), f"{type(exc).__name__}: {exc}")
        res.seconds = round(time.perf_counter() - t0, 3)
        out.append(res)
        if fail_fast and not res.passed:
            break
    return out


def report_json(results) -> str:
    failed = [r.name for r in results if not r.passed]
    return json.dumps(
        {"passed": not failed, "failed": failed, "checks": [asdict(r) for r in results]},
        indent=2,
        allow_nan=True,
    )

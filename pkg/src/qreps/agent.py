"""Outer Q-REPS loop: evaluate the current policy, then tilt it by ``exp(alpha Q)``.

Policies are stored as a prior plus accumulated parameters,
``pi_k(a|x) ∝ pi_0(a|x) exp(alpha <theta_acc, phi(x, a)>)``, so a policy
update is a vector addition and memory stays ``O(m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import lbe as L
from . import oracle
from .envs import CartPole
from .features import FeatureMap, TabularFeatures, random_relu_features, tabular_features
from .mdp import (
    DEFAULT_HORIZON,
    TabularMdp,
    effective_discount,
    exact_occupancy,
    expected_return,
    optimal_return,
    rollout_batch,
    sample_batch,
)
from .prepared import PreparedBatch
from .saddle import InnerOptConfig, minmax_solve

__all__ = [
    "QrepsPolicy",
    "AgentConfig",
    "RunRecord",
    "policy_probs",
    "policy_update",
    "run_qreps",
    "run_qreps_exact",
    "LOSS_MODES",
]

LOSS_MODES = ("elbe", "selbe", "exact")


@dataclass(frozen=True, eq=False)
class QrepsPolicy:
    """Softmax-product policy. ``prior_log`` is ``(S, A)`` for tabular maps or ``(A,)`` for all states."""

    prior_log: np.ndarray
    theta_acc: np.ndarray
    alpha: float
    fmap: FeatureMap

    @classmethod
    def uniform(cls, fmap: FeatureMap, alpha: float, n_states: int | None = None):
        A = fmap.n_actions
        shape = (n_states, A) if n_states is not None else (A,)
        return cls(np.full(shape, -np.log(A)), np.zeros(fmap.dim), alpha, fmap)

    def logits(self, states) -> np.ndarray:
        idx, val = self.fmap.encode(states)
        q = np.sum(self.theta_acc[idx] * val, axis=-1)
        prior = self.prior_log if self.prior_log.ndim == 1 else self.prior_log[np.asarray(states, dtype=np.int64)]
        return prior + self.alpha * q

    def probs(self, states) -> np.ndarray:
        z = self.logits(states)
        w = np.exp(z - z.max(axis=-1, keepdims=True))
        return w / w.sum(axis=-1, keepdims=True)

    def table(self) -> np.ndarray:
        """Full ``(S, A)`` table; tabular feature maps only."""
        return self.probs(np.arange(self.fmap.n_states))


def policy_probs(policy: QrepsPolicy, state) -> np.ndarray:
    states = np.asarray([state]) if np.ndim(state) == (0 if isinstance(policy.fmap, TabularFeatures) else 1) else state
    return policy.probs(states)[0]


def policy_update(policy: QrepsPolicy, theta_k) -> QrepsPolicy:
    theta_k = np.asarray(theta_k, dtype=np.float64)
    if theta_k.shape != policy.theta_acc.shape:
        raise ValueError(f"theta has shape {theta_k.shape}, policy expects {policy.theta_acc.shape}")
    return replace(policy, theta_acc=policy.theta_acc + theta_k)


@dataclass(frozen=True)
class AgentConfig:
    eta: float = 0.5
    alpha: float = 0.5
    gamma: float = 1.0
    iterations: int = 200
    episodes_per_update: int = 1
    horizon: int = DEFAULT_HORIZON
    inner: InnerOptConfig = field(default_factory=InnerOptConfig)
    loss: str = "elbe"
    batch_size: int | None = None  # defaults to episodes_per_update * horizon
    warm_start: bool = True
    exact_tol: float = 1e-9
    keep_policies: bool = True

    def __post_init__(self):
        if self.eta <= 0 or self.alpha <= 0:
            raise ValueError("eta and alpha must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.iterations < 0 or self.episodes_per_update < 1 or self.horizon < 1:
            raise ValueError("iterations, episodes and horizon must be positive")
        if self.loss not in LOSS_MODES:
            raise ValueError(f"loss must be one of {LOSS_MODES}")

    @property
    def loss_discount(self) -> float:
        """Discount used inside the loss; episodic runs use the matching restart chain."""
        return effective_discount(self.gamma, self.horizon)

    @property
    def n_samples(self) -> int:
        return self.batch_size or self.episodes_per_update * self.horizon


@dataclass
class RunRecord:
    env: str
    algorithm: str
    seed: int
    iterations: list = field(default_factory=list)
    episodes: list = field(default_factory=list)
    returns_raw: list = field(default_factory=list)
    returns_normalized: list = field(default_factory=list)
    policies: list = field(default_factory=list)
    thetas: list = field(default_factory=list)
    complete: bool = False
    error: str | None = None
    optimal: float | None = None

    def log(self, iteration, episodes, raw, normalized):
        self.iterations.append(int(iteration))
        self.episodes.append(int(episodes))
        self.returns_raw.append(float(raw))
        self.returns_normalized.append(float(normalized))

    @property
    def mixture_return(self) -> float:
        """Normalized return of the uniform mixture over the iterates ``pi_0 .. pi_{K-1}``."""
        vals = self.returns_normalized[:-1] if len(self.returns_normalized) > 1 else self.returns_normalized
        return float(np.mean(vals))

    def rows(self):
        for it, ep, raw, norm in zip(self.iterations, self.episodes, self.returns_raw, self.returns_normalized):
            yield (self.env, self.algorithm, self.seed, it, ep, raw, norm)


def _tabular_context(mdp: TabularMdp, fmap, policy: QrepsPolicy, cfg: AgentConfig) -> L.LossContext:
    table = policy.table()
    gamma = cfg.loss_discount
    p_ref = exact_occupancy(mdp.replace(discount=gamma), table)
    return L.LossContext(mdp, fmap, table, cfg.eta, cfg.alpha, p_ref=p_ref, gamma=gamma)


def _collect(mdp: TabularMdp, table: np.ndarray, cfg: AgentConfig, seed):
    """Episodic tasks learn from whole rollouts, discounted ones from occupancy draws."""
    if mdp.episodic:
        episodes = -(-cfg.n_samples // cfg.horizon)
        return rollout_batch(mdp, table, episodes, seed, horizon=cfg.horizon, n=cfg.n_samples)
    return sample_batch(mdp, table, cfg.n_samples, seed, horizon=cfg.horizon)


def _run_tabular(mdp: TabularMdp, cfg: AgentConfig, rng_seed, algorithm: str, exact: bool) -> RunRecord:
    mdp = mdp if mdp.discount == cfg.gamma else mdp.replace(discount=cfg.gamma)
    fmap = tabular_features(mdp.n_states, mdp.n_actions)
    policy = QrepsPolicy.uniform(fmap, cfg.alpha, mdp.n_states)
    best, _ = optimal_return(mdp, horizon=cfg.horizon)
    rec = RunRecord(mdp.name, algorithm, int(rng_seed) if rng_seed is not None else -1, optimal=best)
    seeds = np.random.SeedSequence(rng_seed).spawn(2 * max(cfg.iterations, 1))

    def log(k):
        table = policy.table()
        ret = expected_return(mdp, table, cfg.horizon)
        rec.log(k, k * cfg.episodes_per_update, ret, ret / best)
        if cfg.keep_policies:
            rec.policies.append(table)

    theta = np.zeros(fmap.dim)
    log(0)
    try:
        for k in range(cfg.iterations):
            ctx = _tabular_context(mdp, fmap, policy, cfg)
            start = theta if cfg.warm_start else np.zeros(fmap.dim)
            if exact:
                theta = oracle.exact_lbe_minimizer(ctx, start, tol=cfg.exact_tol)
            else:
                batch = _collect(mdp, ctx.prior, cfg, seeds[2 * k])
                pb = L.prepare(batch, ctx, semi_empirical=cfg.loss == "selbe")
                theta = minmax_solve(pb, ctx, cfg.inner, start, rng=seeds[2 * k + 1]).theta
            rec.thetas.append(theta.copy())
            policy = policy_update(policy, theta)
            log(k + 1)
    except Exception as exc:  # the record is still emitted, flagged incomplete
        rec.error = f"{type(exc).__name__}: {exc}"
        return rec
    rec.complete = True
    return rec


def _episode_batch(episodes, fmap: FeatureMap, policy: QrepsPolicy, cfg: AgentConfig) -> PreparedBatch:
    states = np.concatenate([e["states"] for e in episodes])
    actions = np.concatenate([e["actions"] for e in episodes])
    rewards = np.concatenate([e["rewards"] for e in episodes])
    nexts = np.concatenate([e["next_states"] for e in episodes])
    terms = np.concatenate([e["terminals"] for e in episodes])
    starts = np.stack([e["start"] for e in episodes])
    n = len(rewards)
    sa_idx, sa_val = fmap.encode(states)
    sa_idx, sa_val = sa_idx[np.arange(n), actions], sa_val[np.arange(n), actions]
    nx_idx, nx_val = fmap.encode(nexts, terms)
    i_idx, i_val = fmap.encode(starts)
    norm = lambda z: z - logsumexp(z, axis=-1, keepdims=True)
    return PreparedBatch(
        rewards=rewards,
        sa_idx=sa_idx,
        sa_val=sa_val,
        next_prob=np.ones((n, 1)),
        next_idx=nx_idx[:, None],
        next_val=nx_val[:, None],
        next_logprior=norm(policy.logits(nexts))[:, None],
        init_weight=np.full(len(starts), 1.0 / len(starts)),
        init_idx=i_idx,
        init_val=i_val,
        init_logprior=norm(policy.logits(starts)),
        gamma=cfg.loss_discount,
        eta=cfg.eta,
        alpha=cfg.alpha,
        dim=fmap.dim,
    )


def _run_simulator(env: CartPole, cfg: AgentConfig, rng_seed, feature_seed=None) -> RunRecord:
    seed = 0 if rng_seed is None else int(rng_seed)
    fmap = random_relu_features(env.state_dim, 200, env.n_actions, seed if feature_seed is None else feature_seed)
    policy = QrepsPolicy.uniform(fmap, cfg.alpha)
    rng = np.random.default_rng(seed)
    rec = RunRecord("cart-pole", "qreps", seed, optimal=float(env.max_steps))
    theta = np.zeros(fmap.dim)

    def act(state):
        p = policy.probs(state[None])[0]
        return int(rng.random() >= p[0]) if len(p) == 2 else int(rng.choice(len(p), p=p))

    try:
        for k in range(cfg.iterations):
            episodes = [env.rollout(act) for _ in range(cfg.episodes_per_update)]
            raw = float(np.mean([e["rewards"].sum() for e in episodes]))
            rec.log(k, (k + 1) * cfg.episodes_per_update, raw, raw / env.max_steps)
            pb = _episode_batch(episodes, fmap, policy, cfg)
            start = theta if cfg.warm_start else np.zeros(fmap.dim)
            theta = minmax_solve(pb, None, cfg.inner, start, rng=rng.integers(2**63)).theta
            if cfg.keep_policies:
                rec.thetas.append(theta.copy())
            policy = policy_update(policy, theta)
    except Exception as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        return rec
    rec.complete = True
    return rec


def run_qreps(env, cfg: AgentConfig, rng_seed=0) -> RunRecord:
    """Sample-based Q-REPS on a tabular MDP or an episodic simulator."""
    if isinstance(env, TabularMdp):
        if cfg.loss == "exact":
            return _run_tabular(env, cfg, rng_seed, "qreps-exact", exact=True)
        return _run_tabular(env, cfg, rng_seed, "qreps", exact=False)
    if cfg.loss != "elbe":
        raise ValueError("simulator environments support only the empirical loss")
    return _run_simulator(env, cfg, rng_seed)


def run_qreps_exact(env: TabularMdp, cfg: AgentConfig, rng_seed=0) -> RunRecord:
    """Q-REPS with every evaluation step solved exactly on the true LBE."""
    if not isinstance(env, TabularMdp):
        raise TypeError("exact Q-REPS needs a tabular MDP")
    return _run_tabular(env, cfg, rng_seed, "qreps-exact", exact=True)

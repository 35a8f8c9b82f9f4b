"""Batch arrays in the layout consumed by the saddle-point kernels.

A :class:`PreparedBatch` freezes everything about a batch of transitions that
does not depend on ``theta``: rewards, sparse features of the sampled pairs,
sparse features and prior log-probabilities of every action at each possible
next state, and the same for the initial-state set used by the
``(1 - gamma) <nu0, V>`` term.

Each transition carries ``J`` next-state slots with probabilities
``next_prob``. A sampled transition has one slot of probability 1. The
semi-empirical variant lists every successor with its exact probability and
averages the continuation value inside the exponent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .features import FeatureMap, TabularFeatures

__all__ = ["PreparedBatch", "BatchTerms", "prepare_tabular", "evaluate", "scatter", "log_prior"]


@dataclass(frozen=True, eq=False)
class PreparedBatch:
    rewards: np.ndarray  # (N,)
    sa_idx: np.ndarray  # (N, k) int64
    sa_val: np.ndarray  # (N, k)
    next_prob: np.ndarray  # (N, J)
    next_idx: np.ndarray  # (N, J, A, k)
    next_val: np.ndarray  # (N, J, A, k)
    next_logprior: np.ndarray  # (N, J, A)
    init_weight: np.ndarray  # (M,)
    init_idx: np.ndarray  # (M, A, k)
    init_val: np.ndarray  # (M, A, k)
    init_logprior: np.ndarray  # (M, A)
    gamma: float
    eta: float
    alpha: float
    dim: int

    def __post_init__(self):
        for name in ("sa_idx", "next_idx", "init_idx"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.int64))
        for name in (
            "rewards",
            "sa_val",
            "next_prob",
            "next_val",
            "next_logprior",
            "init_weight",
            "init_val",
            "init_logprior",
        ):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        if self.eta <= 0 or self.alpha <= 0:
            raise ValueError("eta and alpha must be positive")
        if len(self.rewards) == 0:
            raise ValueError("empty batch")

    @property
    def n(self) -> int:
        return len(self.rewards)

    @property
    def n_actions(self) -> int:
        return self.next_logprior.shape[-1]

    def with_params(self, **changes) -> "PreparedBatch":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return PreparedBatch(**fields)


@dataclass(frozen=True)
class BatchTerms:
    deltas: np.ndarray  # empirical Bellman errors, (N,)
    nu_term: float  # (1 - gamma) <nu0, V>
    next_policy: np.ndarray  # pi_theta at next-state slots, (N, J, A)
    init_policy: np.ndarray  # pi_theta at initial states, (M, A)


def log_prior(policy_rows: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(policy_rows)


def scatter(idx: np.ndarray, weights: np.ndarray, dim: int) -> np.ndarray:
    """Sum of ``weights`` into a ``dim`` vector at positions ``idx``."""
    return np.bincount(idx.ravel(), weights=weights.ravel(), minlength=dim)


def _soft_values(q, logprior, alpha):
    logits = logprior + alpha * q
    lse = logsumexp(logits, axis=-1)
    policy = np.exp(logits - lse[..., None])
    return lse / alpha, policy


def evaluate(theta: np.ndarray, pb: PreparedBatch) -> BatchTerms:
    """Empirical Bellman errors and soft policies at ``theta``."""
    q_sa = np.sum(theta[pb.sa_idx] * pb.sa_val, axis=-1)
    q_next = np.sum(theta[pb.next_idx] * pb.next_val, axis=-1)
    v_next, pi_next = _soft_values(q_next, pb.next_logprior, pb.alpha)
    deltas = pb.rewards + pb.gamma * np.sum(pb.next_prob * v_next, axis=1) - q_sa
    if pb.gamma < 1.0 and len(pb.init_weight):
        q_init = np.sum(theta[pb.init_idx] * pb.init_val, axis=-1)
        v_init, pi_init = _soft_values(q_init, pb.init_logprior, pb.alpha)
        nu_term = (1.0 - pb.gamma) * float(pb.init_weight @ v_init)
    else:
        pi_init = np.exp(pb.init_logprior - logsumexp(pb.init_logprior, axis=-1, keepdims=True))
        nu_term = 0.0
    return BatchTerms(deltas, nu_term, pi_next, pi_init)


def prepare_tabular(
    states,
    actions,
    next_states,
    fmap: FeatureMap,
    prior: np.ndarray,
    reward: np.ndarray,
    gamma: float,
    eta: float,
    alpha: float,
    init_states=None,
    init_weight=None,
    terminals=None,
    transition: np.ndarray | None = None,
) -> PreparedBatch:
    """Prepare a batch over a finite state space.

    With ``transition`` given, each pair's slots are its exact successors
    (semi-empirical mode) and ``next_states`` is ignored.
    """
    states = np.asarray(states, dtype=np.int64)
    actions = np.asarray(actions, dtype=np.int64)
    n = len(states)
    A = prior.shape[1]
    sa_idx, sa_val = fmap.encode(states)
    sa_idx, sa_val = sa_idx[np.arange(n), actions], sa_val[np.arange(n), actions]
    if transition is None:
        nxt = np.asarray(next_states, dtype=np.int64)[:, None]
        prob = np.ones((n, 1))
    else:
        succ = transition[states, actions]
        J = int((succ > 0).sum(axis=1).max())
        order = np.argsort(-succ, axis=1, kind="stable")[:, :J]
        nxt = order
        prob = np.take_along_axis(succ, order, axis=1)
    J = nxt.shape[1]
    term = np.zeros((n, J), dtype=bool) if terminals is None else np.repeat(np.asarray(terminals, bool)[:, None], J, 1)
    n_idx, n_val = fmap.encode(nxt.ravel(), term.ravel())
    k = n_idx.shape[-1]
    if init_states is None:
        init_states = np.arange(prior.shape[0])
    init_states = np.asarray(init_states, dtype=np.int64)
    if init_weight is None:
        init_weight = np.full(len(init_states), 1.0 / len(init_states))
    i_idx, i_val = fmap.encode(init_states)
    lp = log_prior(prior)
    return PreparedBatch(
        rewards=np.asarray(reward, dtype=np.float64)[states, actions],
        sa_idx=sa_idx,
        sa_val=sa_val,
        next_prob=prob,
        next_idx=n_idx.reshape(n, J, A, k),
        next_val=n_val.reshape(n, J, A, k),
        next_logprior=lp[nxt],
        init_weight=init_weight,
        init_idx=i_idx,
        init_val=i_val,
        init_logprior=lp[init_states],
        gamma=gamma,
        eta=eta,
        alpha=alpha,
        dim=fmap.dim,
    )


def exact_init(nu0: np.ndarray):
    """Support and weights of an exact initial distribution."""
    support = np.flatnonzero(nu0 > 0)
    return support, nu0[support]


def is_tabular(fmap: FeatureMap) -> bool:
    return isinstance(fmap, TabularFeatures)

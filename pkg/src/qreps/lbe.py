"""Logistic value functions and the logistic Bellman error (LBE).

Exact-mode functions work on a tabular MDP through a :class:`LossContext`;
the empirical (ELBE) and semi-empirical (SELBE) losses work on a batch of
transitions. Every exponential sum goes through a max-shifted log-sum-exp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import prepared
from .features import DimensionMismatch, FeatureMap, q_values
from .mdp import TabularMdp, TransitionBatch, occupancy, uniform_policy
from .prepared import PreparedBatch

__all__ = [
    "LossContext",
    "ZeroPriorSupport",
    "EmptyBatch",
    "NoModelAccess",
    "soft_value",
    "value_function",
    "q_table",
    "bellman_error_table",
    "bellman_error_exact",
    "bellman_error_empirical",
    "lbe",
    "grad_lbe",
    "grad_lbe_q",
    "hess_lbe",
    "lbe_weights",
    "elbe",
    "selbe",
    "expectation_elbe",
    "grad_elbe",
    "prepare",
]


class ZeroPriorSupport(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


class NoModelAccess(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LossContext:
    """Everything the k-th evaluation step needs besides ``theta``.

    ``prior`` is the current policy (used inside the soft value function) and
    ``p_ref`` the occupancy measure that weights the exact loss. ``gamma``
    and ``nu0`` default to the MDP's.
    """

    mdp: TabularMdp
    fmap: FeatureMap
    prior: np.ndarray
    eta: float
    alpha: float
    p_ref: np.ndarray | None = None
    gamma: float | None = None
    nu0: np.ndarray | None = None

    def __post_init__(self):
        if self.eta <= 0 or self.alpha <= 0:
            raise ValueError("eta and alpha must be strictly positive")
        if self.gamma is None:
            object.__setattr__(self, "gamma", self.mdp.discount)
        if self.nu0 is None:
            object.__setattr__(self, "nu0", self.mdp.initial_dist)
        prior = np.asarray(self.prior, dtype=np.float64)
        object.__setattr__(self, "prior", prior)
        if self.p_ref is not None:
            p = np.asarray(self.p_ref, dtype=np.float64)
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError("p_ref must be a probability distribution")
            object.__setattr__(self, "p_ref", p)

    @classmethod
    def for_policy(cls, mdp, fmap, policy=None, eta=0.5, alpha=0.5, horizon=200):
        """Context whose reference distribution is the occupancy of ``policy``."""
        policy = uniform_policy(mdp) if policy is None else np.asarray(policy, dtype=np.float64)
        return cls(mdp, fmap, policy, eta, alpha, p_ref=occupancy(mdp, policy, horizon))

    @property
    def features(self) -> np.ndarray:
        return self.fmap.dense(np.arange(self.mdp.n_states))

    def replace(self, **changes) -> "LossContext":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return LossContext(**fields)


def soft_value(q_row, prior_row, alpha: float) -> float:
    """``(1/alpha) log sum_a prior(a) exp(alpha q(a))`` without overflow."""
    q_row = np.asarray(q_row, dtype=np.float64)
    prior_row = np.asarray(prior_row, dtype=np.float64)
    support = prior_row > 0
    if not np.any(support & np.isfinite(q_row)):
        raise ZeroPriorSupport("prior puts no mass on any action")
    q, w = q_row[support], prior_row[support]
    top = q.max()
    return float(top + np.log(np.sum(w * np.exp(alpha * (q - top)))) / alpha)


def value_function(theta, fmap: FeatureMap, prior_row, alpha: float, state) -> float:
    return soft_value(q_values(theta, fmap, state), prior_row, alpha)


def _theta(theta, ctx: LossContext) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (ctx.fmap.dim,):
        raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({ctx.fmap.dim},)")
    return theta


def q_table(theta, ctx: LossContext) -> np.ndarray:
    return ctx.features @ _theta(theta, ctx)


def _values_and_policy(Q: np.ndarray, prior: np.ndarray, alpha: float):
    logits = prepared.log_prior(prior) + alpha * Q
    lse = logsumexp(logits, axis=1)
    return lse / alpha, np.exp(logits - lse[:, None])


def bellman_error_table(theta, ctx: LossContext) -> np.ndarray:
    """``Delta(x, a) = r + gamma P V - Q`` for every pair."""
    Q = q_table(theta, ctx)
    V, _ = _values_and_policy(Q, ctx.prior, ctx.alpha)
    return ctx.mdp.reward + ctx.gamma * (ctx.mdp.transition @ V) - Q


def bellman_error_exact(theta, ctx: LossContext, x: int, a: int) -> float:
    return float(bellman_error_table(theta, ctx)[x, a])


def bellman_error_empirical(theta, ctx: LossContext, transition) -> float:
    """Single-sample Bellman error of ``(x, a, r, x', terminal)``."""
    x, a, r, x_next, terminal = transition
    q = q_values(theta, ctx.fmap, x)[a]
    if terminal:
        v_next = 0.0
    else:
        v_next = value_function(theta, ctx.fmap, ctx.prior[x_next], ctx.alpha, x_next)
    return float(r + ctx.gamma * v_next - q)


def _nu_term(V: np.ndarray, ctx: LossContext) -> float:
    return (1.0 - ctx.gamma) * float(ctx.nu0 @ V) if ctx.gamma < 1.0 else 0.0


def _exact_terms(theta, ctx: LossContext):
    if ctx.p_ref is None:
        raise ValueError("exact mode needs p_ref")
    Q = q_table(theta, ctx)
    V, pi = _values_and_policy(Q, ctx.prior, ctx.alpha)
    delta = ctx.mdp.reward + ctx.gamma * (ctx.mdp.transition @ V) - Q
    with np.errstate(divide="ignore"):
        logits = np.log(ctx.p_ref) + ctx.eta * delta
    lse = logsumexp(logits)
    return Q, V, pi, delta, logits, lse


def lbe(theta, ctx: LossContext) -> float:
    """``(1/eta) log sum p_ref exp(eta Delta) + (1 - gamma) <nu0, V>``."""
    _, V, _, _, _, lse = _exact_terms(theta, ctx)
    return float(lse / ctx.eta + _nu_term(V, ctx))


def lbe_weights(theta, ctx: LossContext) -> np.ndarray:
    """The tilted distribution ``p_ref exp(eta Delta) / normalizer``."""
    *_, logits, lse = _exact_terms(theta, ctx)
    return np.exp(logits - lse)


def grad_lbe_q(theta, ctx: LossContext) -> np.ndarray:
    """Gradient of the LBE with respect to the Q-table."""
    _, _, pi, _, logits, lse = _exact_terms(theta, ctx)
    w = np.exp(logits - lse)
    state_mass = ctx.gamma * np.einsum("xa,xay->y", w, ctx.mdp.transition)
    if ctx.gamma < 1.0:
        state_mass = state_mass + (1.0 - ctx.gamma) * ctx.nu0
    return state_mass[:, None] * pi - w


def grad_lbe(theta, ctx: LossContext) -> np.ndarray:
    return np.einsum("xa,xam->m", grad_lbe_q(theta, ctx), ctx.features)


def hess_lbe(theta, ctx: LossContext) -> np.ndarray:
    """Analytic Hessian in ``theta``."""
    _, _, pi, _, logits, lse = _exact_terms(theta, ctx)
    S, A = pi.shape
    w = np.exp(logits - lse).ravel()
    P = ctx.mdp.transition
    # Jacobian of Delta with respect to the flattened Q-table
    dV = np.zeros((S, S * A))
    for x in range(S):
        dV[x, x * A : (x + 1) * A] = pi[x]
    J = ctx.gamma * P.reshape(S * A, S) @ dV - np.eye(S * A)
    H = ctx.eta * (J.T * w) @ J - ctx.eta * np.outer(J.T @ w, J.T @ w)
    state_mass = ctx.gamma * (w @ P.reshape(S * A, S))
    if ctx.gamma < 1.0:
        state_mass = state_mass + (1.0 - ctx.gamma) * ctx.nu0
    for x in range(S):
        block = ctx.alpha * (np.diag(pi[x]) - np.outer(pi[x], pi[x]))
        H[x * A : (x + 1) * A, x * A : (x + 1) * A] += state_mass[x] * block
    Phi = ctx.features.reshape(S * A, -1)
    return Phi.T @ H @ Phi


def prepare(batch, ctx: LossContext, semi_empirical: bool = False) -> PreparedBatch:
    """Encode a :class:`TransitionBatch` against the context's prior and features.

    The initial-state term uses the exact initial distribution, as the MDP is known.
    """
    if isinstance(batch, PreparedBatch):
        return batch
    if len(batch) == 0:
        raise EmptyBatch("batch is empty")
    support, weight = prepared.exact_init(ctx.nu0)
    return prepared.prepare_tabular(
        batch.states,
        batch.actions,
        batch.next_states,
        ctx.fmap,
        ctx.prior,
        ctx.mdp.reward,
        ctx.gamma,
        ctx.eta,
        ctx.alpha,
        init_states=support,
        init_weight=weight,
        terminals=batch.terminals,
        transition=ctx.mdp.transition if semi_empirical else None,
    )


def _log_mean_exp_loss(deltas: np.ndarray, nu_term: float, eta: float) -> float:
    return float((logsumexp(eta * deltas) - np.log(len(deltas))) / eta + nu_term)


def elbe(theta, batch, ctx: LossContext | None = None) -> float:
    """Empirical LBE: ``(1/eta) log mean exp(eta Delta_hat) + (1 - gamma) <nu0, V>``."""
    if not isinstance(batch, PreparedBatch) and len(batch) == 0:
        raise EmptyBatch("batch is empty")
    pb = prepare(batch, ctx)
    terms = prepared.evaluate(np.asarray(theta, dtype=np.float64), pb)
    return _log_mean_exp_loss(terms.deltas, terms.nu_term, pb.eta)


def grad_elbe(theta, batch, ctx: LossContext | None = None) -> np.ndarray:
    pb = prepare(batch, ctx)
    terms = prepared.evaluate(np.asarray(theta, dtype=np.float64), pb)
    z = np.exp(pb.eta * terms.deltas - logsumexp(pb.eta * terms.deltas))
    from .saddle import exact_gradient_terms

    return exact_gradient_terms(z, terms, pb)


def selbe(theta, batch, ctx: LossContext | None = None) -> float:
    """Semi-empirical LBE: exact Bellman errors of the sampled pairs in the exponent."""
    if isinstance(batch, PreparedBatch):
        pb = batch
    else:
        if ctx is None or ctx.mdp is None:
            raise NoModelAccess("semi-empirical loss needs the transition model")
        if len(batch) == 0:
            raise EmptyBatch("batch is empty")
        pb = prepare(batch, ctx, semi_empirical=True)
    terms = prepared.evaluate(np.asarray(theta, dtype=np.float64), pb)
    return _log_mean_exp_loss(terms.deltas, terms.nu_term, pb.eta)


def expectation_elbe(theta, ctx: LossContext, pairs=None) -> float:
    """ELBE with the inner average replaced by its expectation over next states.

    ``pairs`` is an optional ``(states, actions)`` sample; by default the pairs
    are weighted exactly by ``p_ref``.
    """
    Q = q_table(theta, ctx)
    V, _ = _values_and_policy(Q, ctx.prior, ctx.alpha)
    P = ctx.mdp.transition
    # per-pair log E_{x'} exp(eta (r + gamma V(x') - Q))
    with np.errstate(divide="ignore"):
        inner = logsumexp(np.log(P) + ctx.eta * ctx.gamma * V[None, None, :], axis=2)
    per_pair = ctx.eta * (ctx.mdp.reward - Q) + inner
    if pairs is None:
        with np.errstate(divide="ignore"):
            total = logsumexp(np.log(ctx.p_ref) + per_pair)
    else:
        states, actions = pairs
        total = logsumexp(per_pair[states, actions]) - np.log(len(states))
    return float(total / ctx.eta + _nu_term(V, ctx))

"""Learner/sampler game whose saddle point minimizes the empirical LBE.

The learner descends ``S(theta, z)`` in ``theta`` and the sampler ascends it
over distributions ``z`` on the batch, where

    S(theta, z) = sum_n z_n (Delta_hat_n - log(N z_n) / eta) + (1 - gamma) <nu0, V>.

Maximizing over ``z`` gives back the empirical LBE, attained at
``z ∝ exp(eta Delta_hat)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, prepared
from .features import DimensionMismatch
from .prepared import BatchTerms, PreparedBatch

__all__ = [
    "InnerOptConfig",
    "InnerResult",
    "ZeroWeight",
    "s_objective",
    "learner_grad_sampled",
    "learner_grad_exact",
    "exact_gradient_terms",
    "sampler_grad",
    "eg_update",
    "best_response",
    "uniform_sampler",
    "minmax_solve",
    "LEARNERS",
    "SAMPLERS",
    "GRAD_MODES",
]

LEARNERS = ("sgd", "adam")
SAMPLERS = ("eg", "br", "uniform")
GRAD_MODES = ("sampled", "exact")


class ZeroWeight(ValueError):
    pass


@dataclass(frozen=True)
class InnerOptConfig:
    beta: float = 0.1
    beta_prime: float = 0.1
    steps: int = 300
    learner: str = "sgd"
    sampler: str = "eg"
    grad_mode: str = "sampled"
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learner not in LEARNERS:
            raise ValueError(f"learner must be one of {LEARNERS}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.beta < 0 or (self.sampler == "eg" and self.beta_prime < 0):
            raise ValueError("stepsizes must be nonnegative")


@dataclass(frozen=True, eq=False)
class InnerResult:
    theta: np.ndarray  # average of the stored iterates
    last_theta: np.ndarray
    z: np.ndarray
    trace: np.ndarray  # per step: elbe(theta), S(theta, z), |g|_2


def _check_z(z, n: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (n,):
        raise DimensionMismatch(f"z has shape {z.shape}, batch has {n} transitions")
    return z


def _prepared(batch, ctx) -> PreparedBatch:
    if isinstance(batch, PreparedBatch):
        return batch
    from .lbe import prepare

    return prepare(batch, ctx)


def s_objective(theta, z, batch, ctx=None) -> float:
    pb = _prepared(batch, ctx)
    z = _check_z(z, pb.n)
    terms = prepared.evaluate(np.asarray(theta, dtype=np.float64), pb)
    pos = z > 0
    entropy = np.sum(z[pos] * np.log(pb.n * z[pos])) / pb.eta
    return float(z @ terms.deltas - entropy + terms.nu_term)


def exact_gradient_terms(z: np.ndarray, terms: BatchTerms, pb: PreparedBatch) -> np.ndarray:
    """``grad_theta S`` with action expectations taken exactly."""
    w_next = (pb.gamma * z)[:, None, None] * pb.next_prob[:, :, None] * terms.next_policy
    g = prepared.scatter(pb.next_idx, w_next[..., None] * pb.next_val, pb.dim)
    g -= prepared.scatter(pb.sa_idx, z[:, None] * pb.sa_val, pb.dim)
    if pb.gamma < 1.0:
        w_init = (1.0 - pb.gamma) * pb.init_weight[:, None] * terms.init_policy
        g += prepared.scatter(pb.init_idx, w_init[..., None] * pb.init_val, pb.dim)
    return g


def learner_grad_exact(theta, z, batch, ctx=None) -> np.ndarray:
    pb = _prepared(batch, ctx)
    z = _check_z(z, pb.n)
    terms = prepared.evaluate(np.asarray(theta, dtype=np.float64), pb)
    return exact_gradient_terms(z, terms, pb)


def learner_grad_sampled(theta, z, batch, ctx=None, rng=None) -> np.ndarray:
    """One-sample unbiased estimate ``gamma phi(X', A') - phi(X, A) + (1 - gamma) phi(Xbar, Abar)``."""
    pb = _prepared(batch, ctx)
    z = _check_z(z, pb.n)
    rng = np.random.default_rng(rng)
    terms = prepared.evaluate(np.asarray(theta, dtype=np.float64), pb)
    u = rng.random(5)
    return kernels.sampled_gradient(u, z, terms, pb)


def sampler_grad(theta, z, batch, ctx=None) -> np.ndarray:
    """``h(n) = Delta_hat_n - log(N z_n) / eta``.

    The exact partial derivative carries an extra ``-1/eta``; it is a constant
    shift and cancels in the exponentiated-gradient normalization.
    """
    pb = _prepared(batch, ctx)
    z = _check_z(z, pb.n)
    if np.any(z <= 0):
        raise ZeroWeight("sampler gradient needs strictly positive weights")
    terms = prepared.evaluate(np.asarray(theta, dtype=np.float64), pb)
    return terms.deltas - np.log(pb.n * z) / pb.eta


def _softmax(logits: np.ndarray) -> np.ndarray:
    w = np.exp(logits - logits.max())
    return w / w.sum()


def eg_update(z, h, beta_prime: float) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logits = np.log(z) + beta_prime * np.asarray(h, dtype=np.float64)
    return _softmax(logits)


def best_response(theta, batch, ctx=None) -> np.ndarray:
    pb = _prepared(batch, ctx)
    terms = prepared.evaluate(np.asarray(theta, dtype=np.float64), pb)
    return _softmax(pb.eta * terms.deltas)


def uniform_sampler(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def minmax_solve(batch, ctx, cfg: InnerOptConfig, theta_init, rng=None, backend: str | None = None) -> InnerResult:
    """Run ``cfg.steps`` simultaneous learner/sampler steps from ``theta_init``.

    Returns the uniform average of the ``steps + 1`` iterates
    ``theta_0, ..., theta_T``. ``rng`` seeds the action/index draws of the
    sampled gradient; all draws are made up front so both kernel backends
    consume identical randomness.
    """
    pb = _prepared(batch, ctx)
    theta0 = np.array(theta_init, dtype=np.float64)
    if theta0.shape != (pb.dim,):
        raise DimensionMismatch(f"theta_init has shape {theta0.shape}, expected ({pb.dim},)")
    uniforms = np.random.default_rng(rng).random((cfg.steps, 5))
    avg, last, z, trace = kernels.run_inner(pb, theta0, cfg, uniforms, backend=backend)
    return InnerResult(avg, last, z, trace)

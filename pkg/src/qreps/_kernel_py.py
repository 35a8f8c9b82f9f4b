"""NumPy implementation of the inner saddle-point loop.

Semantics shared with the compiled kernel in ``_kernel.pyx``:

* step ``t`` evaluates the empirical Bellman errors at ``theta_t``;
* the best-response sampler sets ``z_t = softmax(eta * Delta_hat)`` before the
  learner step, the exponentiated-gradient sampler updates ``z`` after it
  (simultaneous play);
* ``uniforms[t]`` drives, in order: the batch index, the next-state slot, the
  next action, the initial state and the initial action;
* the returned ``theta`` is the mean of ``theta_0 .. theta_T``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .prepared import BatchTerms, PreparedBatch, evaluate, scatter

SGD, ADAM = 0, 1
EG, BR, UNIFORM = 0, 1, 2
SAMPLED, EXACT = 0, 1


def pick(u: float, probs: np.ndarray) -> int:
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, len(probs) - 1)


def sampled_gradient(u, z, terms: BatchTerms, pb: PreparedBatch) -> np.ndarray:
    i = pick(u[0], z)
    j = pick(u[1], pb.next_prob[i])
    a_next = pick(u[2], terms.next_policy[i, j])
    g = np.zeros(pb.dim)
    np.add.at(g, pb.next_idx[i, j, a_next], pb.gamma * pb.next_val[i, j, a_next])
    np.add.at(g, pb.sa_idx[i], -pb.sa_val[i])
    if pb.gamma < 1.0:
        s = pick(u[3], pb.init_weight)
        a_init = pick(u[4], terms.init_policy[s])
        np.add.at(g, pb.init_idx[s, a_init], (1.0 - pb.gamma) * pb.init_val[s, a_init])
    return g


def exact_gradient(z, terms: BatchTerms, pb: PreparedBatch) -> np.ndarray:
    w_next = (pb.gamma * z)[:, None, None] * pb.next_prob[:, :, None] * terms.next_policy
    g = scatter(pb.next_idx, w_next[..., None] * pb.next_val, pb.dim)
    g -= scatter(pb.sa_idx, z[:, None] * pb.sa_val, pb.dim)
    if pb.gamma < 1.0:
        w_init = (1.0 - pb.gamma) * pb.init_weight[:, None] * terms.init_policy
        g += scatter(pb.init_idx, w_init[..., None] * pb.init_val, pb.dim)
    return g


def run_inner(pb: PreparedBatch, theta0, steps, beta, beta_prime, learner, sampler, grad_mode, uniforms, b1, b2, eps):
    theta = np.array(theta0, dtype=np.float64)
    n = pb.n
    log_n = np.log(n)
    logz = np.full(n, -log_n)
    total = theta.copy()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    trace = np.empty((steps, 3))
    for t in range(steps):
        terms = evaluate(theta, pb)
        scaled = pb.eta * terms.deltas
        lse = logsumexp(scaled)
        if sampler == BR:
            logz = scaled - lse
        z = np.exp(logz)
        trace[t, 0] = (lse - log_n) / pb.eta + terms.nu_term
        trace[t, 1] = z @ terms.deltas - z @ (log_n + logz) / pb.eta + terms.nu_term
        if grad_mode == EXACT:
            g = exact_gradient(z, terms, pb)
        else:
            g = sampled_gradient(uniforms[t], z, terms, pb)
        trace[t, 2] = np.sqrt(g @ g)
        if sampler == EG:
            h = terms.deltas - (log_n + logz) / pb.eta
            logz = logz + beta_prime * h
            logz -= logsumexp(logz)
        if learner == ADAM:
            m1 = b1 * m1 + (1.0 - b1) * g
            m2 = b2 * m2 + (1.0 - b2) * g * g
            m1_hat = m1 / (1.0 - b1 ** (t + 1))
            m2_hat = m2 / (1.0 - b2 ** (t + 1))
            theta = theta - beta * m1_hat / (np.sqrt(m2_hat) + eps)
        else:
            theta = theta - beta * g
        total += theta
    return total / (steps + 1), theta, np.exp(logz), trace

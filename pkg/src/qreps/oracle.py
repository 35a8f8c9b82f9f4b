"""Exact tabular computations used to check the algorithm.

These routines solve the exact logistic Bellman error to high precision and
evaluate the quantities around it: the exponentially tilted reference
distribution, the loss-gap decomposition into a relative-entropy part and a
conditional-entropy part, the bias of the empirical loss, and action gaps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import lbe as L
from .lbe import LossContext
from .mdp import NoConvergence, optimal_return

__all__ = [
    "DecompositionReport",
    "tilted_distribution",
    "exact_lbe_minimizer",
    "decomposition_check",
    "expectation_elbe_grad",
    "expectation_elbe_minimizer",
    "elbe_bias_curve",
    "action_gap",
    "action_gap_at",
    "loglog_slope",
    "grid_search_minimum",
]


def tilted_distribution(theta, ctx: LossContext) -> np.ndarray:
    """``p_ref * exp(eta * (Delta - rho))`` with ``rho`` the log-normalizer over eta."""
    return L.lbe_weights(theta, ctx)


def exact_lbe_minimizer(ctx: LossContext, theta_init=None, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Minimize the exact LBE until the sup-norm of the gradient is at most ``tol``.

    Uses Newton steps regularized by the gradient norm, ``(H + |g| I)^-1 g``,
    with Armijo backtracking. The shift keeps the system well posed along the
    flat directions of the undiscounted loss and where the tilted weights
    collapse onto one pair, and vanishes at the optimum.
    """
    theta = np.zeros(ctx.fmap.dim) if theta_init is None else np.array(theta_init, dtype=np.float64)
    eye = np.eye(len(theta))
    f = L.lbe(theta, ctx)
    g = L.grad_lbe(theta, ctx)
    for _ in range(max_iter):
        gnorm = np.max(np.abs(g))
        if gnorm <= tol:
            return theta
        H = L.hess_lbe(theta, ctx)
        step = np.linalg.solve(H + np.sqrt(g @ g) * eye, -g)
        slope = g @ step
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            f_new = L.lbe(cand, ctx)
            if f_new <= f + 1e-4 * t * slope:
                break
            # near the optimum the loss stops resolving; accept steps that still shrink the gradient
            if f_new <= f + 1e-13 * max(1.0, abs(f)):
                g_new = L.grad_lbe(cand, ctx)
                if np.max(np.abs(g_new)) < gnorm:
                    break
            t *= 0.5
        else:
            raise NoConvergence("line search failed in exact LBE minimization", float(gnorm))
        theta, f = cand, f_new
        g = L.grad_lbe(theta, ctx)
    raise NoConvergence("exact LBE minimization hit the iteration cap", float(np.max(np.abs(g))))


def grid_search_minimum(ctx: LossContext, lo: float = -20.0, hi: float = 20.0, resolutions=(2.0, 0.5, 0.1, 0.01)):
    """Brute-force minimum of the LBE over the box ``[lo, hi]^m`` by zooming grids.

    The first level is a full grid over the box; each later level is a full
    grid at the next resolution over a window of two previous cells on either
    side of the previous winner. Returns ``(best_theta, best_loss)``.
    """
    m = ctx.fmap.dim
    center = None
    best_theta, best = None, np.inf
    prev = None
    for res in resolutions:
        if center is None:
            axes = [np.arange(lo, hi + 1e-9, res)] * m
        else:
            axes = [np.clip(np.arange(c - 2 * prev, c + 2 * prev + 1e-9, res), lo, hi) for c in center]
        # evaluate one slab of the first axis at a time to bound memory
        rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, m - 1)
        for v0 in axes[0]:
            thetas = np.column_stack([np.full(len(rest), v0), rest])
            vals = _lbe_many(thetas, ctx)
            i = int(np.argmin(vals))
            if vals[i] < best:
                best, best_theta = float(vals[i]), thetas[i].copy()
        center, prev = best_theta, res
    return best_theta, best


def _lbe_many(thetas: np.ndarray, ctx: LossContext) -> np.ndarray:
    """Vectorized exact LBE for a stack of parameter vectors."""
    Q = np.einsum("xam,nm->nxa", ctx.features, thetas)
    with np.errstate(divide="ignore"):
        logits = np.log(ctx.prior)[None] + ctx.alpha * Q
        log_p = np.log(ctx.p_ref)
    V = logsumexp(logits, axis=2) / ctx.alpha
    delta = ctx.mdp.reward[None] + ctx.gamma * np.einsum("xay,ny->nxa", ctx.mdp.transition, V) - Q
    out = logsumexp((log_p[None] + ctx.eta * delta).reshape(len(thetas), -1), axis=1) / ctx.eta
    if ctx.gamma < 1.0:
        out += (1.0 - ctx.gamma) * V @ ctx.nu0
    return out


@dataclass(frozen=True)
class DecompositionReport:
    loss_gap: float
    kl_term: float
    cond_term: float
    residual: float
    theta_star: np.ndarray


def decomposition_check(theta_k, ctx: LossContext, theta_star=None) -> DecompositionReport:
    """Compare the loss gap at ``theta_k`` with its two divergence terms.

    Valid for one-hot features, where the ideal state-action distribution
    equals the ideal occupancy measure.
    """
    theta_k = np.asarray(theta_k, dtype=np.float64)
    if theta_star is None:
        theta_star = exact_lbe_minimizer(ctx)
    q_tilde = tilted_distribution(theta_k, ctx)
    p_star = tilted_distribution(theta_star, ctx)
    pi_k = _soft_policy(theta_k, ctx)
    pi_star = _soft_policy(theta_star, ctx)
    pos = p_star > 0
    kl = float(np.sum(p_star[pos] * (np.log(p_star[pos]) - np.log(q_tilde[pos])))) / ctx.eta
    cond = float(np.sum(p_star[pos] * (np.log(pi_star[pos]) - np.log(pi_k[pos])))) / ctx.alpha
    gap = L.lbe(theta_k, ctx) - L.lbe(theta_star, ctx)
    return DecompositionReport(gap, kl, cond, abs(gap - kl - cond), theta_star)


def _soft_policy(theta, ctx: LossContext) -> np.ndarray:
    Q = L.q_table(theta, ctx)
    with np.errstate(divide="ignore"):
        logits = np.log(ctx.prior) + ctx.alpha * Q
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def _expectation_weights(theta, ctx: LossContext):
    Q = L.q_table(theta, ctx)
    pi = _soft_policy(theta, ctx)
    with np.errstate(divide="ignore"):
        logpi = np.log(ctx.prior) + ctx.alpha * Q
    V = logsumexp(logpi, axis=1) / ctx.alpha
    with np.errstate(divide="ignore"):
        logw = (
            np.log(ctx.p_ref)[:, :, None]
            + np.log(ctx.mdp.transition)
            + ctx.eta * (ctx.mdp.reward - Q)[:, :, None]
            + ctx.eta * ctx.gamma * V[None, None, :]
        )
    return np.exp(logw - logsumexp(logw)), pi


def expectation_elbe_grad(theta, ctx: LossContext) -> np.ndarray:
    w, pi = _expectation_weights(theta, ctx)
    mass = ctx.gamma * w.sum(axis=(0, 1))
    if ctx.gamma < 1.0:
        mass = mass + (1.0 - ctx.gamma) * ctx.nu0
    grad_q = mass[:, None] * pi - w.sum(axis=2)
    return np.einsum("xa,xam->m", grad_q, ctx.features)


def expectation_elbe_minimizer(ctx: LossContext, theta_init=None, tol: float = 1e-9) -> np.ndarray:
    theta0 = np.zeros(ctx.fmap.dim) if theta_init is None else np.asarray(theta_init, dtype=np.float64)
    res = minimize(
        L.expectation_elbe,
        theta0,
        args=(ctx,),
        jac=expectation_elbe_grad,
        method="BFGS",
        options={"gtol": tol, "maxiter": 10_000},
    )
    return res.x


def elbe_bias_curve(ctx: LossContext, eta_grid, pairs=None):
    """Bias of the expectation-ELBE over the LBE for each ``eta``.

    Returns rows ``(eta, min_gap, bias_at_lbe_min)``: the gap between the two
    minimum values, and the pointwise bias at the LBE minimizer. Pointwise
    bias at the expectation-ELBE's own minimizer is not used because that
    minimizer drifts with ``eta`` toward where the noise matters less.
    ``pairs`` optionally fixes a sample of (state, action) pairs; by default
    pairs are weighted exactly by ``p_ref``.
    """
    rows = []
    for eta in eta_grid:
        c = ctx.replace(eta=float(eta))
        theta_e = expectation_elbe_minimizer(c)
        theta_l = exact_lbe_minimizer(c)
        lbe_min = L.lbe(theta_l, c)
        min_gap = L.expectation_elbe(theta_e, c, pairs) - lbe_min
        at_lbe_min = L.expectation_elbe(theta_l, c, pairs) - lbe_min
        rows.append((float(eta), float(min_gap), float(at_lbe_min)))
    return rows


def action_gap(q_row, a_opt: int) -> float:
    """``Q(a_opt) - max_{a != a_opt} Q(a)``; negative when ``a_opt`` is not the argmax."""
    q_row = np.asarray(q_row, dtype=np.float64)
    if len(q_row) < 2:
        raise ValueError("action gap needs at least two actions")
    others = np.delete(q_row, a_opt)
    return float(q_row[a_opt] - others.max())


def action_gap_at(theta, ctx: LossContext, state: int, horizon: int = 200) -> float:
    """Action gap of ``Q_theta`` at ``state`` relative to the MDP's optimal action there."""
    _, greedy = optimal_return(ctx.mdp, horizon=horizon)
    a_opt = int(np.argmax(greedy[state]))
    return action_gap(L.q_table(theta, ctx)[state], a_opt)


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])

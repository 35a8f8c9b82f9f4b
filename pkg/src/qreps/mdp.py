"""Finite MDPs: validation, exact occupancy measures, returns and sampling.

Arrays follow the layout ``P[x, a, x']``, ``r[x, a]`` and ``policy[x, a]``.
A discount of exactly 1 means a fixed-horizon episodic task; every function
that needs a horizon in that case takes it as a keyword argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "TabularMdp",
    "TransitionBatch",
    "MdpError",
    "NonStochasticRow",
    "NegativeProbability",
    "BadInitialDist",
    "SingularSystem",
    "NoConvergence",
    "validate",
    "validate_policy",
    "uniform_policy",
    "rollout_batch",
    "effective_discount",
    "exact_occupancy",
    "finite_horizon_occupancy",
    "occupancy",
    "expected_return",
    "optimal_return",
    "policy_values",
    "sample_batch",
    "save_mdp",
    "load_mdp",
]

DEFAULT_HORIZON = 200


class MdpError(ValueError):
    """Base class for invalid MDP or policy data."""


class NonStochasticRow(MdpError):
    def __init__(self, x: int, a: int, total: float):
        super().__init__(f"P[{x}][{a}] sums to {total!r}, not 1")
        self.x, self.a, self.total = x, a, total


class NegativeProbability(MdpError):
    pass


class BadInitialDist(MdpError):
    pass


class SingularSystem(RuntimeError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: np.ndarray
    reward: np.ndarray
    discount: float
    initial_dist: np.ndarray
    name: str = "mdp"

    def __post_init__(self):
        for attr in ("transition", "reward", "initial_dist"):
            arr = np.array(getattr(self, attr), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "discount", float(self.discount))
        validate(self)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def episodic(self) -> bool:
        return self.discount >= 1.0

    def replace(self, **changes) -> "TabularMdp":
        fields = dict(
            transition=self.transition,
            reward=self.reward,
            discount=self.discount,
            initial_dist=self.initial_dist,
            name=self.name,
        )
        fields.update(changes)
        return TabularMdp(**fields)


@dataclass(frozen=True, eq=False)
class TransitionBatch:
    """Sampled transitions ``(x, a, r, x', terminal)`` plus draws from the initial distribution."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    initial_states: np.ndarray
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rewards)

    def entries(self):
        return list(
            zip(
                self.states.tolist(),
                self.actions.tolist(),
                self.rewards.tolist(),
                self.next_states.tolist(),
                self.terminals.tolist(),
            )
        )


def validate(mdp: TabularMdp, atol: float = 1e-12) -> None:
    """Raise an :class:`MdpError` subclass describing the first violated invariant."""
    P, r, nu0 = mdp.transition, mdp.reward, mdp.initial_dist
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        raise MdpError(f"transition must have shape (S, A, S), got {P.shape}")
    S, A, _ = P.shape
    if S < 1 or A < 1:
        raise MdpError("need at least one state and one action")
    if r.shape != (S, A):
        raise MdpError(f"reward must have shape {(S, A)}, got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise MdpError("reward contains non-finite entries")
    if not 0.0 < mdp.discount <= 1.0:
        raise MdpError(f"discount must lie in (0, 1], got {mdp.discount}")
    if np.any(P < 0):
        x, a, y = np.argwhere(P < 0)[0]
        raise NegativeProbability(f"P[{x}][{a}][{y}] = {P[x, a, y]!r} is negative")
    sums = P.sum(axis=2)
    bad = np.argwhere(np.abs(sums - 1.0) > atol)
    if len(bad):
        x, a = bad[0]
        raise NonStochasticRow(int(x), int(a), float(sums[x, a]))
    if nu0.shape != (S,) or np.any(nu0 < 0) or abs(nu0.sum() - 1.0) > atol:
        raise BadInitialDist(f"initial distribution {nu0!r} is not a probability vector")


def validate_policy(policy: np.ndarray, n_states: int, n_actions: int, atol: float = 1e-12) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (n_states, n_actions):
        raise MdpError(f"policy must have shape {(n_states, n_actions)}, got {policy.shape}")
    if np.any(policy < 0) or np.any(np.abs(policy.sum(axis=1) - 1.0) > atol):
        raise MdpError("policy rows must be probability vectors")
    return policy


def uniform_policy(mdp: TabularMdp) -> np.ndarray:
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def _state_transition(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    return np.einsum("xa,xay->xy", policy, mdp.transition)


def exact_occupancy(mdp: TabularMdp, policy) -> np.ndarray:
    """Normalized discounted state-action occupancy of ``policy`` (requires discount < 1)."""
    policy = validate_policy(policy, mdp.n_states, mdp.n_actions)
    gamma = mdp.discount
    if gamma >= 1.0:
        raise ValueError("exact_occupancy needs discount < 1; use finite_horizon_occupancy")
    P_pi = _state_transition(mdp, policy)
    lhs = np.eye(mdp.n_states) - gamma * P_pi.T
    try:
        nu = np.linalg.solve(lhs, (1.0 - gamma) * mdp.initial_dist)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    nu = np.clip(nu, 0.0, None)
    return nu[:, None] * policy


def finite_horizon_occupancy(mdp: TabularMdp, policy, horizon: int = DEFAULT_HORIZON) -> np.ndarray:
    """Average state-action distribution over steps ``0 .. horizon - 1``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    policy = validate_policy(policy, mdp.n_states, mdp.n_actions)
    P_pi = _state_transition(mdp, policy)
    nu = mdp.initial_dist.copy()
    total = np.zeros(mdp.n_states)
    for _ in range(horizon):
        total += nu
        nu = nu @ P_pi
    return (total / horizon)[:, None] * policy


def effective_discount(discount: float, horizon: int = DEFAULT_HORIZON) -> float:
    """Discount of the restart chain that matches an episodic task of length ``horizon``.

    Restarting from the initial distribution with probability ``1 / horizon``
    after every step gives a mean episode length of ``horizon`` and keeps the
    initial distribution in the flow constraint, which plain ``discount = 1``
    drops.
    """
    return discount if discount < 1.0 else 1.0 - 1.0 / horizon


def occupancy(mdp: TabularMdp, policy, horizon: int = DEFAULT_HORIZON) -> np.ndarray:
    """Discounted occupancy for discount < 1, finite-horizon average otherwise."""
    if mdp.episodic:
        return finite_horizon_occupancy(mdp, policy, horizon)
    return exact_occupancy(mdp, policy)


def expected_return(mdp: TabularMdp, policy, horizon: int = DEFAULT_HORIZON) -> float:
    """Normalized return ``<p, r>``: discounted for discount < 1, per-step average otherwise."""
    return float(np.sum(occupancy(mdp, policy, horizon) * mdp.reward))


def policy_values(mdp: TabularMdp, policy, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Unnormalized state values of ``policy`` by fixed-point iteration (discount < 1)."""
    policy = validate_policy(policy, mdp.n_states, mdp.n_actions)
    P_pi = _state_transition(mdp, policy)
    r_pi = np.sum(policy * mdp.reward, axis=1)
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        V_new = r_pi + mdp.discount * P_pi @ V
        if np.max(np.abs(V_new - V)) <= tol:
            return V_new
        V = V_new
    raise NoConvergence("policy evaluation did not converge", float(np.max(np.abs(V_new - V))))


def optimal_return(
    mdp: TabularMdp,
    horizon: int = DEFAULT_HORIZON,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
) -> tuple[float, np.ndarray]:
    """Optimal normalized return and a greedy deterministic policy.

    Discounted tasks use value iteration until the sup-norm residual drops
    below ``tol``. Episodic tasks use backward induction over ``horizon`` steps
    and report the best return over a few stationary candidates: its
    first-step greedy policy and the greedy policies of discounted surrogates,
    which break the ties that a finite horizon creates. Learned policies are
    stationary, and the nonstationary optimum can exploit the final steps in
    ways no stationary policy can.
    """
    P, r, gamma = mdp.transition, mdp.reward, mdp.discount
    if mdp.episodic:
        V = np.zeros(mdp.n_states)
        for _ in range(horizon):
            Q = r + P @ V
            V = Q.max(axis=1)
        value = None
    else:
        V = np.zeros(mdp.n_states)
        residual = np.inf
        for _ in range(max_iter):
            Q = r + gamma * (P @ V)
            V_new = Q.max(axis=1)
            residual = float(np.max(np.abs(V_new - V)))
            V = V_new
            if residual <= tol:
                break
        else:
            raise NoConvergence("value iteration hit the step cap", residual)
        Q = r + gamma * (P @ V)
        value = (1.0 - gamma) * float(mdp.initial_dist @ V)
    greedy = np.zeros_like(r)
    greedy[np.arange(mdp.n_states), Q.argmax(axis=1)] = 1.0
    if value is None:
        candidates = [greedy] + [optimal_return(mdp.replace(discount=g), tol=tol)[1] for g in (0.9, 0.99, 0.999)]
        scores = [expected_return(mdp, pol, horizon) for pol in candidates]
        best = int(np.argmax(scores))
        value, greedy = scores[best], candidates[best]
    return value, greedy


def _draw(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``probs`` by inverse CDF."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1]) * cdf[..., -1]
    out = (u[..., None] >= cdf).sum(axis=-1)
    return np.minimum(out, probs.shape[-1] - 1)


def sample_batch(
    mdp: TabularMdp,
    policy,
    n: int,
    rng_seed=None,
    horizon: int = DEFAULT_HORIZON,
) -> TransitionBatch:
    """Draw ``n`` i.i.d. transitions from the occupancy measure of ``policy``.

    For discount < 1 each chain restarts from the initial distribution and
    stops after every step with probability ``1 - discount``; the pair at the
    stopping step is recorded. For episodic tasks the recorded step is uniform
    over ``0 .. horizon - 1``. The next state is always drawn from ``P``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    policy = validate_policy(policy, mdp.n_states, mdp.n_actions)
    rng = np.random.default_rng(rng_seed)
    P = mdp.transition
    if mdp.episodic:
        stop = rng.integers(0, horizon, size=n)
    else:
        # number of transitions before the recorded one is geometric on {0, 1, ...}
        stop = rng.geometric(1.0 - mdp.discount, size=n) - 1 if mdp.discount > 0 else np.zeros(n, int)
    x = _draw(rng, np.broadcast_to(mdp.initial_dist, (n, mdp.n_states)))
    for t in range(int(stop.max(initial=0))):
        live = stop > t
        idx = np.flatnonzero(live)
        a = _draw(rng, policy[x[idx]])
        x[idx] = _draw(rng, P[x[idx], a])
    a = _draw(rng, policy[x])
    x_next = _draw(rng, P[x, a])
    initial = _draw(rng, np.broadcast_to(mdp.initial_dist, (n, mdp.n_states)))
    return TransitionBatch(
        states=x,
        actions=a,
        rewards=mdp.reward[x, a].copy(),
        next_states=x_next,
        terminals=np.zeros(n, dtype=bool),
        initial_states=initial,
    )


def rollout_batch(
    mdp: TabularMdp,
    policy,
    episodes: int,
    rng_seed=None,
    horizon: int = DEFAULT_HORIZON,
    n: int | None = None,
) -> TransitionBatch:
    """Every transition of ``episodes`` rollouts of length ``horizon``, in time order.

    ``n`` truncates the concatenation to its first ``n`` transitions. Within a
    rollout the next state of one transition is the state of the following
    one, so the empirical flow balance holds up to the episode ends.
    """
    if episodes < 1 or horizon < 1:
        raise ValueError("episodes and horizon must be >= 1")
    policy = validate_policy(policy, mdp.n_states, mdp.n_actions)
    rng = np.random.default_rng(rng_seed)
    P = mdp.transition
    xs = np.empty((horizon, episodes), dtype=np.int64)
    acts = np.empty_like(xs)
    nexts = np.empty_like(xs)
    x = _draw(rng, np.broadcast_to(mdp.initial_dist, (episodes, mdp.n_states)))
    initial = x.copy()
    for t in range(horizon):
        a = _draw(rng, policy[x])
        x_next = _draw(rng, P[x, a])
        xs[t], acts[t], nexts[t] = x, a, x_next
        x = x_next
    states, actions, next_states = (arr.T.reshape(-1)[:n] for arr in (xs, acts, nexts))
    return TransitionBatch(
        states=states,
        actions=actions,
        rewards=mdp.reward[states, actions].copy(),
        next_states=next_states,
        terminals=np.zeros(len(states), dtype=bool),
        initial_states=initial,
    )


def save_mdp(mdp: TabularMdp, path) -> None:
    """Write the plain-text format read by :func:`load_mdp`."""
    fmt = lambda arr: " ".join(repr(float(v)) for v in np.ravel(arr))
    lines = [
        f"name = {mdp.name}",
        f"n_states = {mdp.n_states}",
        f"n_actions = {mdp.n_actions}",
        f"discount = {mdp.discount!r}",
        f"transition = {fmt(mdp.transition)}",
        f"reward = {fmt(mdp.reward)}",
        f"initial_dist = {fmt(mdp.initial_dist)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mdp(path) -> TabularMdp:
    """Read an MDP from ``key = value`` lines; arrays are flattened row-major."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    try:
        S, A = int(values["n_states"]), int(values["n_actions"])
        arr = lambda key: np.array(values[key].split(), dtype=np.float64)
        return TabularMdp(
            transition=arr("transition").reshape(S, A, S),
            reward=arr("reward").reshape(S, A),
            discount=float(values["discount"]),
            initial_dist=arr("initial_dist").reshape(S),
            name=values.get("name", Path(path).stem),
        )
    except KeyError as exc:
        raise MdpError(f"{path}: missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, MdpError):
            raise
        raise MdpError(f"{path}: {exc}") from None

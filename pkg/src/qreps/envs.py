"""Benchmark environments.

The tabular instances are pinned substitutes for the literature benchmarks;
their full tables ship under ``qreps/data`` and :func:`load_env` reads them
from there. Rewards are per (state, action). Every episodic task here is
continuing within its horizon: goal or leaf states send the agent back to
the start.
"""

from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

import numpy as np

from .mdp import TabularMdp, load_mdp, save_mdp

__all__ = [
    "two_state_stochastic",
    "two_state_deterministic",
    "single_chain",
    "double_chain",
    "river_swim",
    "wide_tree",
    "windy_gridworld",
    "chain_environments",
    "TABULAR_ENVS",
    "load_env",
    "CartPole",
    "cart_pole",
    "WINDY_COLUMNS",
]


def _point(n: int, s: int = 0) -> np.ndarray:
    nu0 = np.zeros(n)
    nu0[s] = 1.0
    return nu0


def two_state_stochastic(discount: float = 1.0, r_stay: float = 1.0, r_go: float = 6.0, r_stochastic: float = -3.0) -> TabularMdp:
    """x0: stay (loop) or go (to x1); x1: one stochastic action, duplicated so both states have two actions."""
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = 1.0
    P[0, 1, 1] = 1.0
    P[1, :, :] = 0.5
    r = np.array([[r_stay, r_go], [r_stochastic, r_stochastic]])
    return TabularMdp(P, r, discount, _point(2), name="two-state-stochastic")


def two_state_deterministic(discount: float = 1.0) -> TabularMdp:
    """Action 0 stays, action 1 switches; staying in x1 pays more than staying in x0."""
    P = np.zeros((2, 2, 2))
    for x in range(2):
        P[x, 0, x] = 1.0
        P[x, 1, 1 - x] = 1.0
    r = np.array([[1.0, 0.0], [2.0, 0.0]])
    return TabularMdp(P, r, discount, _point(2), name="two-state-deterministic")


def single_chain(discount: float = 1.0, n: int = 5, slip: float = 0.1) -> TabularMdp:
    """Action 0 moves forward, action 1 returns to the start; each slips to the other with prob ``slip``."""
    P = np.zeros((n, 2, n))
    r = np.zeros((n, 2))
    for x in range(n):
        fwd = min(x + 1, n - 1)
        P[x, 0, fwd] += 1.0 - slip
        P[x, 0, 0] += slip
        P[x, 1, 0] += 1.0 - slip
        P[x, 1, fwd] += slip
        r[x, 1] = 0.2
    r[n - 1, 0] = 1.0
    return TabularMdp(P, r, discount, _point(n), name="single-chain")


def double_chain(discount: float = 1.0, slip: float = 0.1) -> TabularMdp:
    """Hub 0 leads into chain A (1-4) or chain B (5-8); chain A's end pays more."""
    n = 9
    P = np.zeros((n, 2, n))
    r = np.zeros((n, 2))
    P[0, 0, 1], P[0, 0, 5] = 1.0 - slip, slip
    P[0, 1, 5], P[0, 1, 1] = 1.0 - slip, slip
    for chain, end_reward in (((1, 2, 3, 4), 1.0), ((5, 6, 7, 8), 0.5)):
        for i, x in enumerate(chain):
            fwd = chain[min(i + 1, len(chain) - 1)]
            P[x, 0, fwd] += 1.0 - slip
            P[x, 0, 0] += slip
            P[x, 1, 0] += 1.0 - slip
            P[x, 1, fwd] += slip
            r[x, 1] = 0.1
        r[chain[-1], 0] = end_reward
    return TabularMdp(P, r, discount, _point(n), name="double-chain")


def river_swim(discount: float = 1.0, n: int = 6) -> TabularMdp:
    """Action 0 swims left (deterministic), action 1 swims right against the current."""
    P = np.zeros((n, 2, n))
    r = np.zeros((n, 2))
    for x in range(n):
        P[x, 0, max(x - 1, 0)] = 1.0
        if x == 0:
            P[x, 1, 1], P[x, 1, 0] = 0.3, 0.7
        elif x == n - 1:
            P[x, 1, x], P[x, 1, x - 1] = 0.9, 0.1
        else:
            P[x, 1, x + 1], P[x, 1, x], P[x, 1, x - 1] = 0.3, 0.6, 0.1
    r[0, 0] = 5.0 / 1000.0
    r[n - 1, 1] = 1.0
    return TabularMdp(P, r, discount, _point(n), name="river-swim")


WIDE_TREE_LEAF_REWARDS = (0.2, 0.1, 0.3, 0.5, 1.0, 0.4, 0.0, 0.6, 0.3)


def wide_tree(discount: float = 1.0) -> TabularMdp:
    """Depth-2 tree of width 3; the reward is paid on the move into a leaf, leaves return to the root."""
    n = 1 + 3 + 9
    P = np.zeros((n, 3, n))
    r = np.zeros((n, 3))
    for a in range(3):
        P[0, a, 1 + a] = 1.0
    for c in range(3):
        for a in range(3):
            leaf = 4 + 3 * c + a
            P[1 + c, a, leaf] = 1.0
            r[1 + c, a] = WIDE_TREE_LEAF_REWARDS[3 * c + a]
    P[4:, :, 0] = 1.0
    return TabularMdp(P, r, discount, _point(n), name="wide-tree")


WINDY_COLUMNS = (0, 0, 0, 1, 1, 1, 2, 2, 1, 0)
WINDY_START = (3, 0)
WINDY_GOAL = (3, 7)
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right


def windy_gridworld(discount: float = 1.0) -> TabularMdp:
    """7x10 grid with upward column winds; reaching the goal pays 1, the goal resets to the start."""
    rows, cols = 7, len(WINDY_COLUMNS)
    n = rows * cols
    sid = lambda rc: rc[0] * cols + rc[1]
    P = np.zeros((n, 4, n))
    r = np.zeros((n, 4))
    for row in range(rows):
        for col in range(cols):
            x = sid((row, col))
            for a, (dr, dc) in enumerate(_MOVES):
                if (row, col) == WINDY_GOAL:
                    P[x, a, sid(WINDY_START)] = 1.0
                    continue
                nr = min(max(row + dr - WINDY_COLUMNS[col], 0), rows - 1)
                nc = min(max(col + dc, 0), cols - 1)
                P[x, a, sid((nr, nc))] = 1.0
                if (nr, nc) == WINDY_GOAL:
                    r[x, a] = 1.0
    return TabularMdp(P, r, discount, _point(n, sid(WINDY_START)), name="windy-gridworld")


TABULAR_ENVS = {
    "two-state-stochastic": two_state_stochastic,
    "two-state-deterministic": two_state_deterministic,
    "single-chain": single_chain,
    "double-chain": double_chain,
    "river-swim": river_swim,
    "wide-tree": wide_tree,
    "windy-gridworld": windy_gridworld,
}


def chain_environments(discount: float = 1.0) -> dict[str, TabularMdp]:
    names = ("single-chain", "double-chain", "river-swim", "wide-tree", "two-state-deterministic", "windy-gridworld")
    return {name: load_env(name, discount) for name in names}


def _data_dir() -> Path:
    return Path(str(resources.files("qreps") / "data"))


def load_env(name: str, discount: float | None = None) -> TabularMdp:
    """Load a shipped tabular instance, optionally overriding its discount."""
    if name not in TABULAR_ENVS:
        raise KeyError(f"unknown tabular environment {name!r}; choose from {sorted(TABULAR_ENVS)}")
    mdp = load_mdp(_data_dir() / f"{name}.mdp")
    return mdp if discount is None else mdp.replace(discount=discount)


def write_data_files(directory=None) -> None:
    directory = Path(directory) if directory else _data_dir()
    directory.mkdir(parents=True, exist_ok=True)
    for name, build in TABULAR_ENVS.items():
        save_mdp(build(), directory / f"{name}.mdp")


class CartPole:
    """Classic cart-pole with Euler integration, 200-step cap and unit reward per step."""

    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    length = 0.5  # half the pole length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12 * 2 * math.pi / 360
    x_threshold = 2.4
    state_dim = 4
    n_actions = 2

    def __init__(self, rng_seed=None, max_steps: int = 200):
        self.rng = np.random.default_rng(rng_seed)
        self.max_steps = max_steps

    def reset(self) -> np.ndarray:
        return self.rng.uniform(-0.05, 0.05, size=4)

    def step(self, state, action: int):
        """Return ``(next_state, reward, terminal)``; truncation at the cap is the caller's job."""
        x, x_dot, theta, theta_dot = state
        force = self.force_mag if action == 1 else -self.force_mag
        total_mass = self.masspole + self.masscart
        polemass_length = self.masspole * self.length
        cos, sin = math.cos(theta), math.sin(theta)
        temp = (force + polemass_length * theta_dot**2 * sin) / total_mass
        theta_acc = (self.gravity * sin - cos * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * cos**2 / total_mass)
        )
        x_acc = temp - polemass_length * theta_acc * cos / total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * x_acc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * theta_acc
        nxt = np.array([x, x_dot, theta, theta_dot])
        terminal = bool(abs(x) > self.x_threshold or abs(theta) > self.theta_threshold)
        return nxt, 1.0, terminal

    def rollout(self, policy_fn, state=None):
        """One episode under ``policy_fn(state) -> action``; returns arrays of the transitions."""
        s = self.reset() if state is None else np.asarray(state, dtype=np.float64)
        start = s.copy()
        states, actions, rewards, nexts, terms = [], [], [], [], []
        for _ in range(self.max_steps):
            a = int(policy_fn(s))
            s_next, reward, terminal = self.step(s, a)
            states.append(s)
            actions.append(a)
            rewards.append(reward)
            nexts.append(s_next)
            terms.append(terminal)
            s = s_next
            if terminal:
                break
        return {
            "start": start,
            "states": np.array(states),
            "actions": np.array(actions),
            "rewards": np.array(rewards),
            "next_states": np.array(nexts),
            "terminals": np.array(terms),
        }


def cart_pole(rng_seed=None) -> CartPole:
    return CartPole(rng_seed)


if __name__ == "__main__":
    write_data_files()

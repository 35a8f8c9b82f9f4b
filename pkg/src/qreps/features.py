"""State-action feature maps for linear Q-functions ``Q(x, a) = <theta, phi(x, a)>``.

Feature vectors are stored sparsely with a fixed number of nonzeros per
(state, action): ``encode`` returns ``idx`` and ``val`` arrays of shape
``(n, n_actions, nnz)`` so that ``phi(x, a) = sum_j val[.., a, j] * e_{idx[.., a, j]}``.
One-hot features have ``nnz = 1``; the random-ReLU map has ``nnz = hidden``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "FeatureMap",
    "TabularFeatures",
    "ReluFeatures",
    "DimensionMismatch",
    "tabular_features",
    "random_relu_features",
    "q_values",
    "feature_map_from_dict",
]


class DimensionMismatch(ValueError):
    pass


class FeatureMap:
    dim: int
    n_actions: int
    nnz: int

    def encode(self, states, terminal=None):
        """Sparse features of every action at ``states``; terminal rows are zeroed."""
        idx, val = self._encode(states)
        if terminal is not None:
            keep = 1.0 - np.asarray(terminal, dtype=np.float64).reshape(-1)
            val = val * keep[:, None, None]
        return idx, val

    def dense(self, states, terminal=None) -> np.ndarray:
        """Dense features of shape ``(n, n_actions, dim)``."""
        idx, val = self.encode(states, terminal)
        n = idx.shape[0]
        out = np.zeros((n, self.n_actions, self.dim))
        rows = np.arange(n)[:, None, None]
        cols = np.arange(self.n_actions)[None, :, None]
        np.add.at(out, (rows, cols, idx), val)
        return out

    def __call__(self, state, action) -> np.ndarray:
        return self.dense(self._one(state))[0, action]

    def _one(self, state):
        return np.asarray([state])

    def to_dict(self) -> dict:
        raise NotImplementedError


class TabularFeatures(FeatureMap):
    def __init__(self, n_states: int, n_actions: int):
        if n_states < 1 or n_actions < 1:
            raise ValueError("dimensions must be positive")
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        self.dim = self.n_states * self.n_actions
        self.nnz = 1

    def _encode(self, states):
        states = np.asarray(states, dtype=np.int64).reshape(-1)
        if np.any((states < 0) | (states >= self.n_states)):
            raise DimensionMismatch("state index out of range")
        idx = states[:, None] * self.n_actions + np.arange(self.n_actions)[None, :]
        return idx[:, :, None], np.ones(idx.shape + (1,))

    def matrix(self) -> np.ndarray:
        """Dense ``(n_states, n_actions, dim)`` feature tensor (identity here)."""
        return np.eye(self.dim).reshape(self.n_states, self.n_actions, self.dim)

    def to_dict(self) -> dict:
        return {"kind": "tabular", "n_states": self.n_states, "n_actions": self.n_actions}


class ReluFeatures(FeatureMap):
    """Frozen random hidden layer ``max(0, W s + b)`` replicated per action block."""

    def __init__(self, state_dim: int, hidden: int = 200, n_actions: int = 2, rng_seed: int = 0):
        if state_dim < 1 or hidden < 1 or n_actions < 1:
            raise ValueError("dimensions must be positive")
        self.state_dim, self.hidden, self.n_actions = int(state_dim), int(hidden), int(n_actions)
        self.seed = int(rng_seed)
        rng = np.random.default_rng(self.seed)
        bound = 1.0 / np.sqrt(self.state_dim)
        self.weight = rng.uniform(-bound, bound, size=(self.hidden, self.state_dim))
        self.bias = rng.uniform(-bound, bound, size=self.hidden)
        self.weight.setflags(write=False)
        self.bias.setflags(write=False)
        self.dim = self.hidden * self.n_actions
        self.nnz = self.hidden

    def state_features(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64).reshape(-1, self.state_dim)
        return np.maximum(0.0, states @ self.weight.T + self.bias)

    def _encode(self, states):
        h = self.state_features(states)
        n = h.shape[0]
        idx = np.arange(self.n_actions)[:, None] * self.hidden + np.arange(self.hidden)[None, :]
        idx = np.broadcast_to(idx, (n, self.n_actions, self.hidden)).copy()
        val = np.broadcast_to(h[:, None, :], idx.shape).copy()
        return idx, val

    def _one(self, state):
        return np.asarray(state, dtype=np.float64).reshape(1, self.state_dim)

    def to_dict(self) -> dict:
        return {
            "kind": "random_relu",
            "state_dim": self.state_dim,
            "hidden": self.hidden,
            "n_actions": self.n_actions,
            "seed": self.seed,
        }


def tabular_features(n_states: int, n_actions: int) -> TabularFeatures:
    return TabularFeatures(n_states, n_actions)


def random_relu_features(state_dim: int, hidden: int = 200, n_actions: int = 2, rng_seed: int = 0) -> ReluFeatures:
    return ReluFeatures(state_dim, hidden, n_actions, rng_seed)


def feature_map_from_dict(spec: dict) -> FeatureMap:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "tabular":
        return TabularFeatures(**spec)
    if kind == "random_relu":
        spec["rng_seed"] = spec.pop("seed")
        return ReluFeatures(**spec)
    raise ValueError(f"unknown feature map kind {kind!r}")


def q_values(theta, fmap: FeatureMap, state) -> np.ndarray:
    """``Q(state, a)`` for every action."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (fmap.dim,):
        raise DimensionMismatch(f"theta has shape {theta.shape}, feature map has dim {fmap.dim}")
    idx, val = fmap.encode(fmap._one(state))
    return np.sum(theta[idx[0]] * val[0], axis=-1)

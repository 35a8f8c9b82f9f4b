"""Compiled vs pure-Python inner loop.

    python3 benchmarks/bench_kernels.py [--steps 300] [--repeat 5]

Times ``minmax_solve`` on a tabular batch and a cart-pole ReLU batch for every
sampler, once per backend, and prints the median wall time and the speedup.
"""

import argparse
import statistics
import time

import numpy as np

from qreps import lbe as L
from qreps.agent import AgentConfig, QrepsPolicy, _episode_batch
from qreps.envs import cart_pole
from qreps.features import random_relu_features
from qreps.harness.checks import random_context
from qreps.kernels import available_backends
from qreps.mdp import sample_batch
from qreps.saddle import SAMPLERS, InnerOptConfig, minmax_solve


def tabular_batch(n):
    rng = np.random.default_rng(0)
    ctx = random_context(rng, eta=0.5, alpha=0.5, n_states=10, n_actions=3)
    batch = sample_batch(ctx.mdp, ctx.prior, n, rng)
    return L.prepare(batch, ctx), ctx.fmap.dim


def relu_batch(episodes):
    env = cart_pole(0)
    fmap = random_relu_features(env.state_dim, 200, env.n_actions, 0)
    policy = QrepsPolicy.uniform(fmap, 0.01)
    rng = np.random.default_rng(0)
    eps = [env.rollout(lambda s: int(rng.integers(2))) for _ in range(episodes)]
    cfg = AgentConfig(eta=0.01, alpha=0.01, gamma=0.99)
    return _episode_batch(eps, fmap, policy, cfg), fmap.dim


def time_solve(pb, dim, cfg, backend, repeat):
    theta0 = np.zeros(dim)
    walls = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        minmax_solve(pb, None, cfg, theta0, rng=1, backend=backend)
        walls.append(time.perf_counter() - t0)
    return statistics.median(walls)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the Python backend is available")
    cases = [("tabular N=200", *tabular_batch(200), "sgd"), ("relu 4 episodes", *relu_batch(4), "adam")]
    print(f"{'case':18s} {'sampler':8s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup")
    for name, pb, dim, learner in cases:
        for sampler in SAMPLERS:
            cfg = InnerOptConfig(steps=args.steps, learner=learner, sampler=sampler)
            walls = {b: time_solve(pb, dim, cfg, b, args.repeat) for b in backends}
            speed = walls["python"] / walls["compiled"] if "compiled" in walls else float("nan")
            cells = " ".join(f"{walls[b] * 1e3:8.2f}ms" for b in backends)
            print(f"{name:18s} {sampler:8s} {cells}   {speed:6.1f}x")


if __name__ == "__main__":
    main()

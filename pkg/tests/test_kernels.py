import os
import subprocess
import sys

import numpy as np
import pytest

from qreps import lbe as L
from qreps import saddle
from qreps.agent import _episode_batch, AgentConfig, QrepsPolicy
from qreps.envs import CartPole
from qreps.features import random_relu_features
from qreps.kernels import BACKEND, available_backends
from qreps.mdp import sample_batch

from conftest import random_context

compiled = pytest.mark.skipif("compiled" not in available_backends(), reason="extension not built")


def test_default_backend_is_available():
    assert BACKEND in available_backends()
    assert "python" in available_backends()


def test_env_var_forces_fallback():
    out = subprocess.run(
        [sys.executable, "-c", "import qreps; print(qreps.BACKEND)"],
        env={**os.environ, "QREPS_BACKEND": "python"},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"


def test_env_var_rejects_unknown():
    out = subprocess.run(
        [sys.executable, "-c", "import qreps"], env={**os.environ, "QREPS_BACKEND": "gpu"}, capture_output=True, text=True
    )
    assert out.returncode != 0 and "QREPS_BACKEND" in out.stderr


@compiled
@pytest.mark.parametrize("learner", saddle.LEARNERS)
@pytest.mark.parametrize("sampler", saddle.SAMPLERS)
@pytest.mark.parametrize("mode", saddle.GRAD_MODES)
def test_backends_agree_tabular(learner, sampler, mode, rng):
    ctx = random_context(rng)
    pb = L.prepare(sample_batch(ctx.mdp, ctx.prior, 60, rng), ctx)
    cfg = saddle.InnerOptConfig(steps=120, learner=learner, sampler=sampler, grad_mode=mode)
    theta0 = rng.normal(size=pb.dim)
    a, b = (saddle.minmax_solve(pb, None, cfg, theta0, rng=9, backend=k) for k in ("python", "compiled"))
    np.testing.assert_allclose(a.theta, b.theta, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(a.z, b.z, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(a.trace, b.trace, rtol=1e-9, atol=1e-10)


@compiled
def test_backends_agree_relu():
    fmap = random_relu_features(4, 30, 2)
    pol = QrepsPolicy.uniform(fmap, 0.01)
    env = CartPole(3)
    rng = np.random.default_rng(0)
    eps = [env.rollout(lambda s: int(rng.random() < 0.5)) for _ in range(2)]
    pb = _episode_batch(eps, fmap, pol, AgentConfig(eta=0.01, alpha=0.01, gamma=0.99))
    cfg = saddle.InnerOptConfig(beta=0.08, learner="adam", sampler="br", steps=50)
    a, b = (saddle.minmax_solve(pb, None, cfg, np.zeros(pb.dim), rng=1, backend=k).theta for k in ("python", "compiled"))
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)

import json

import numpy as np
import pytest

from qreps.envs import CartPole
from qreps.features import (
    DimensionMismatch,
    feature_map_from_dict,
    q_values,
    random_relu_features,
    tabular_features,
)


class TestTabular:
    def test_one_hot_index(self):
        phi = tabular_features(2, 2)(1, 0)
        np.testing.assert_array_equal(phi, [0, 0, 1, 0])

    def test_q_is_theta_entry(self, rng):
        fmap = tabular_features(4, 3)
        theta = rng.normal(size=12)
        for x in range(4):
            np.testing.assert_array_equal(q_values(theta, fmap, x), theta[3 * x : 3 * x + 3])

    def test_features_sum_to_one(self):
        assert np.all(tabular_features(5, 3).dense(np.arange(5)).sum(axis=-1) == 1.0)

    def test_q_equals_reward(self, rng):
        r = rng.normal(size=(3, 2))
        fmap = tabular_features(3, 2)
        for x in range(3):
            np.testing.assert_array_equal(q_values(r.ravel(), fmap, x), r[x])

    def test_out_of_range_state(self):
        with pytest.raises(DimensionMismatch):
            tabular_features(2, 2)(5, 0)


class TestRelu:
    def test_zero_state_gives_positive_bias(self):
        fmap = random_relu_features(4, 200, 2, rng_seed=3)
        h = fmap.state_features(np.zeros(4))[0]
        pos = fmap.bias >= 0
        np.testing.assert_array_equal(h[pos], fmap.bias[pos])
        assert np.all(h[~pos] == 0)

    def test_init_range(self):
        fmap = random_relu_features(4, 200, 2, rng_seed=0)
        assert np.all(np.abs(fmap.weight) <= 0.5) and np.all(np.abs(fmap.bias) <= 0.5)

    def test_terminal_next_state_zeroed(self):
        fmap = random_relu_features(4)
        env = CartPole(rng_seed=0)
        ep = env.rollout(lambda s: 1)
        assert ep["terminals"][-1]
        _, val = fmap.encode(ep["next_states"], ep["terminals"])
        assert np.all(val[-1] == 0) and np.any(val[0] != 0)

    def test_one_active_block(self, rng):
        fmap = random_relu_features(4, 200, 2)
        s = rng.normal(size=4)
        for a in range(2):
            phi = fmap(s, a)
            other = phi[(1 - a) * 200 : (2 - a) * 200]
            assert np.all(other == 0)

    def test_q_matches_scalar_loop(self, rng):
        fmap = random_relu_features(4, 200, 2, rng_seed=9)
        theta = rng.normal(size=fmap.dim)
        s = rng.normal(size=4)
        expected = []
        for a in range(2):
            total = 0.0
            for i in range(200):
                pre = sum(fmap.weight[i, j] * s[j] for j in range(4)) + fmap.bias[i]
                total += theta[a * 200 + i] * max(0.0, pre)
            expected.append(total)
        np.testing.assert_allclose(q_values(theta, fmap, s), expected, rtol=1e-12, atol=1e-12)


def test_zero_theta_zero_q():
    assert np.all(q_values(np.zeros(400), random_relu_features(4), np.ones(4)) == 0)


def test_theta_dimension_checked():
    with pytest.raises(DimensionMismatch):
        q_values(np.zeros(3), tabular_features(2, 2), 0)


@pytest.mark.parametrize("fmap", [tabular_features(3, 2), random_relu_features(4, 16, 3, rng_seed=7)])
def test_serialization_round_trip(fmap):
    back = feature_map_from_dict(json.loads(json.dumps(fmap.to_dict())))
    states = np.arange(3) if fmap.to_dict()["kind"] == "tabular" else np.random.default_rng(0).normal(size=(5, 4))
    np.testing.assert_array_equal(back.dense(states), fmap.dense(states))

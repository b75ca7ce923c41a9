import itertools

import numpy as np
import pytest

from gradcheck import gradient_errors, projection

from vpm_sdk.core.config import NetworkConfig
from vpm_sdk.core.exceptions import CheckpointError, GradientError
from vpm_sdk.learning.autodiff import Tensor, no_grad, softmax
from vpm_sdk.learning.network import PolicyNet, action_log_probs, sample_actions
from vpm_sdk.observation.observations import normalization_constants

TOLERANCE = 1e-4


def small_net(seed=0, heads=2, use_gat=True, channels=1, obs_size=5):
    config = NetworkConfig(feature_dim=4, heads=heads, conv_channels=[2], use_gat=use_gat)
    return PolicyNet(channels, obs_size, config, rng=np.random.default_rng(seed))


def _observations(rng, n_agents, channels=1, size=5):
    return rng.uniform(0.0, 1.0, size=(n_agents, channels, size, size))


class TestEncoder:

    def test_zero_observation_gives_encoder_bias(self):
        net = small_net()
        bias = np.arange(4, dtype=np.float64)
        net.params["encoder.bias"].data = bias.copy()
        h = net.cnn_encode(np.zeros((1, 5, 5)))
        assert np.array_equal(h.data, bias)

    def test_identical_observations_identical_features(self, rng):
        net = small_net()
        obs = _observations(rng, 1)
        h = net.cnn_encode(np.repeat(obs, 3, axis=0))
        assert np.array_equal(h.data[0], h.data[1])
        assert np.array_equal(h.data[0], h.data[2])

    def test_batched_equals_per_agent(self, rng):
        net = small_net()
        obs = _observations(rng, 3)
        batched = net.cnn_encode(obs).data
        for i in range(3):
            assert np.allclose(batched[i], net.cnn_encode(obs[i]).data, rtol=0, atol=1e-12)

    def test_wrong_observation_shape(self, rng):
        net = small_net()
        with pytest.raises(GradientError):
            net.cnn_encode(_observations(rng, 2, size=7))

    def test_default_architecture_fits_25x25(self):
        net = PolicyNet(2, 25)
        logits, values = net.forward(np.zeros((4, 2, 25, 25)))
        assert logits.shape == (4, 5)
        assert values.shape == (4,)


class TestAttention:

    def test_singleton_neighborhood(self, rng):
        net = small_net()
        weights = net.gat_attention(rng.standard_normal(4), [(1, rng.standard_normal(4))], 0)
        assert weights == {1: 1.0}

    def test_identical_neighbors_share_weight(self, rng):
        net = small_net()
        h = rng.standard_normal(4)
        weights = net.gat_attention(rng.standard_normal(4), [(1, h), (2, h.copy()), (3, rng.standard_normal(4))], 1)
        assert weights[1] == weights[2]

    @pytest.mark.parametrize("seed", range(20))
    def test_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        net = small_net(seed)
        n = int(rng.integers(2, 6))
        h = Tensor(rng.standard_normal((n, 4)))
        _, alpha = net.communicate(h)
        assert alpha.shape == (2, n, n)
        assert np.allclose(alpha.data.sum(axis=-1), 1.0, atol=1e-6)
        assert not alpha.data[:, np.arange(n), np.arange(n)].any()
        for head in range(2):
            neighbors = [(j, h.data[j]) for j in range(1, n)]
            weights = net.gat_attention(h.data[0], neighbors, head)
            assert abs(sum(weights.values()) - 1.0) < 1e-6

    def test_batched_attention_matches_reference(self, rng):
        net = small_net(heads=3)
        h = rng.standard_normal((4, 4))
        h_prime, alpha = net.communicate(Tensor(h))
        features = list(enumerate(h))
        for i in range(4):
            reference = net.aggregate_for(i, features)
            assert np.allclose(h_prime.data[i], reference, rtol=0, atol=1e-12)
            for head in range(3):
                weights = net.gat_attention(h[i], [(j, h[j]) for j in range(4) if j != i], head)
                for j, w in weights.items():
                    assert abs(alpha.data[head, i, j] - w) < 1e-12


class TestAggregation:

    def test_one_neighbor(self, rng):
        net = small_net(heads=3)
        h_j = rng.standard_normal(4)
        weights = [net.gat_attention(rng.standard_normal(4), [(5, h_j)], m) for m in range(3)]
        expected = sum(net.params["gat.W"].data[m] @ h_j for m in range(3)) / 3
        assert np.allclose(net.gat_aggregate([(5, h_j)], weights), expected, rtol=0, atol=1e-12)

    def test_permutation_invariant_exactly(self, rng):
        net = small_net(heads=3)
        h_i = rng.standard_normal(4)
        neighbors = [(j, rng.standard_normal(4)) for j in range(1, 5)]
        reference = None
        for order in itertools.permutations(neighbors):
            weights = [net.gat_attention(h_i, list(order), m) for m in range(3)]
            h_prime = net.gat_aggregate(list(order), weights)
            if reference is None:
                reference = h_prime
            assert np.array_equal(h_prime, reference)

    def test_zero_neighbors_features(self, rng):
        net = small_net()
        neighbors = [(1, np.zeros(4)), (2, np.zeros(4))]
        weights = [net.gat_attention(rng.standard_normal(4), neighbors, m) for m in range(2)]
        assert not net.gat_aggregate(neighbors, weights).any()

    def test_single_agent_has_no_message(self, rng):
        net = small_net()
        h_prime, alpha = net.communicate(Tensor(rng.standard_normal((1, 4))))
        assert alpha is None
        assert not h_prime.data.any()

    def test_communication_ablation(self, rng):
        net = small_net(use_gat=False)
        h_prime, alpha = net.communicate(Tensor(rng.standard_normal((3, 4))))
        assert alpha is None
        assert not h_prime.data.any()
        logits, _ = net.forward(_observations(rng, 3))
        assert logits.shape == (3, 5)


class TestHeads:

    def test_zero_heads_uniform_policy(self, rng):
        net = small_net()
        net.params["actor.weight"].data[:] = 0.0
        net.params["critic.weight"].data[:] = 0.0
        net.params["critic.bias"].data[:] = 0.7
        logits, values = net.forward(_observations(rng, 3))
        assert np.all(logits.data == logits.data[:, :1])
        assert np.all(values.data == 0.7)

    def test_probabilities_sum_to_one(self, rng):
        net = small_net()
        logits, _ = net.forward(_observations(rng, 4))
        probs = softmax(logits, axis=-1).data
        assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-6)

    def test_any_agent_count(self, rng):
        net = small_net()
        for n in (1, 2, 4, 7):
            logits, values = net.forward(_observations(rng, n))
            assert logits.shape == (n, 5)
            assert values.shape == (n,)

    def test_batched_samples(self, rng):
        net = small_net()
        obs = rng.uniform(size=(6, 3, 1, 5, 5))
        logits, values = net.forward(obs)
        assert logits.shape == (6, 3, 5)
        single, _ = net.forward(obs[2])
        assert np.allclose(logits.data[2], single.data, rtol=0, atol=1e-12)


class TestGradients:

    @pytest.mark.parametrize("seed", range(20))
    def test_heads_and_attention(self, seed):
        rng = np.random.default_rng(seed)
        net = small_net(seed)
        h = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        p_logits, p_values = projection(rng, (3, 5)), projection(rng, (3,))

        def f():
            h_prime, _ = net.communicate(h)
            logits, values = net.actor_critic(h, h_prime)
            return (logits * p_logits).sum() + (values * p_values).sum()

        tensors = [h] + [net.params[name] for name in (
            "gat.W", "gat.a_src", "gat.a_dst", "gat.b",
            "actor.weight", "actor.bias", "critic.weight", "critic.bias",
        )]
        errors = gradient_errors(f, tensors, eps=1e-6)
        assert max(errors.values()) < TOLERANCE, errors

    def test_full_network(self, rng):
        net = small_net(3)
        obs = _observations(rng, 3)
        p_logits, p_values = projection(rng, (3, 5)), projection(rng, (3,))

        def f():
            logits, values = net.forward(obs)
            return (logits * p_logits).sum() + (values * p_values).sum()

        errors = gradient_errors(f, net.parameters(), eps=1e-6)
        assert max(errors.values()) < TOLERANCE, errors

    def test_one_parameter_set_for_all_agents(self, rng):
        net = small_net()
        before = [id(p) for p in net.parameters()]
        logits, values = net.forward(_observations(rng, 4))
        (logits.sum() + values.sum()).backward()
        assert [id(p) for p in net.parameters()] == before
        assert all(p.grad is not None and p.grad.shape == p.shape for p in net.parameters())


class TestCheckpoint:

    def _state(self, net, config_hash="abc"):
        return net.to_checkpoint(config_hash, 12, normalization_constants())

    def test_round_trip(self, rng):
        net = small_net(4)
        obs = _observations(rng, 3)
        restored = PolicyNet.from_checkpoint(self._state(net), "abc", normalization_constants())
        with no_grad():
            a, va = net.forward(obs)
            b, vb = restored.forward(obs)
        assert np.array_equal(a.data, b.data)
        assert np.array_equal(va.data, vb.data)

    def test_contents(self):
        state = self._state(small_net())
        assert state["format_version"] == 1
        assert state["episode"] == 12
        assert state["shapes"]["gat.W"] == [2, 4, 4]

    def test_config_hash_mismatch(self):
        with pytest.raises(CheckpointError):
            PolicyNet.from_checkpoint(self._state(small_net()), expected_hash="other")

    def test_format_version_mismatch(self):
        state = self._state(small_net())
        state["format_version"] = 99
        with pytest.raises(CheckpointError):
            PolicyNet.from_checkpoint(state)

    def test_normalization_mismatch(self):
        state = self._state(small_net())
        with pytest.raises(CheckpointError):
            PolicyNet.from_checkpoint(state, obs_normalization={"agent_code": 255})

    def test_parameter_shape_mismatch(self):
        state = self._state(small_net())
        state["parameters"]["actor.bias"] = np.zeros(7)
        with pytest.raises(CheckpointError):
            PolicyNet.from_checkpoint(state)


class TestSampling:

    def test_greedy_is_argmax(self, rng):
        logits = rng.standard_normal((6, 5))
        actions, log_probs = sample_actions(logits, rng, greedy=True)
        assert np.array_equal(actions, logits.argmax(axis=-1))
        assert np.allclose(log_probs, action_log_probs(logits)[np.arange(6), actions])

    def test_sampled_frequencies(self, rng):
        logits = np.log(np.array([[0.1, 0.2, 0.3, 0.25, 0.15]]))
        counts = np.zeros(5)
        for _ in range(20000):
            actions, _ = sample_actions(logits, rng)
            counts[actions[0]] += 1
        assert np.allclose(counts / 20000, [0.1, 0.2, 0.3, 0.25, 0.15], atol=0.015)

    def test_seeded(self):
        logits = np.zeros((4, 5))
        a, _ = sample_actions(logits, np.random.default_rng(3))
        b, _ = sample_actions(logits, np.random.default_rng(3))
        assert np.array_equal(a, b)

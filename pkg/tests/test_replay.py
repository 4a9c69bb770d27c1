"""Replay buffer, HER relabeling, and the running normalizer."""

import numpy as np
import pytest

from spred import envs, replay


def make_episode(n=6, seed=0):
    spec = envs.get_spec("point-reach-2d")
    rng = np.random.default_rng(seed)
    episodes, _ = envs.generate_demos(spec, "severe", 1, seed=seed)
    return spec, episodes[0][:n] if n else episodes[0]


def test_ring_buffer_fifo_wraparound():
    buf = replay.ReplayBuffer(3, 2, 1, 1)
    for k in range(5):
        buf.add(np.full(2, k), np.zeros(1), -1.0, np.zeros(2),
                np.zeros(1), np.zeros(1), False)
    assert buf.size == 3
    stored = sorted(buf.obs[:, 0].tolist())
    assert stored == [2.0, 3.0, 4.0]  # oldest entries evicted


def test_her_double_storage_and_relabeled_rewards():
    spec, episode = make_episode(0)
    buf = replay.ReplayBuffer(10_000, spec.obs_dim, spec.action_dim,
                              spec.goal_dim)
    replay.store_episode_with_her(buf, episode, spec.success_eps)
    n = len(episode)
    assert buf.size == 2 * n

    final_goal = episode[-1].achieved_goal
    # first copy: original rewards/goals
    for i, tr in enumerate(episode):
        assert np.array_equal(buf.desired_goal[i], tr.desired_goal)
        assert buf.reward[i] == tr.reward
    # second copy: relabeled to the final achieved goal, reward recomputed
    for i, tr in enumerate(episode):
        j = n + i
        assert np.array_equal(buf.desired_goal[j], final_goal)
        want = envs.compute_reward(tr.achieved_goal, final_goal,
                                   spec.success_eps)
        assert buf.reward[j] == want
    # the final relabeled transition achieved its own goal
    assert buf.reward[2 * n - 1] == 0.0


def test_her_rejects_oversized_episode():
    spec, episode = make_episode(0)
    buf = replay.ReplayBuffer(len(episode), spec.obs_dim, spec.action_dim,
                              spec.goal_dim)
    with pytest.raises(ValueError):
        replay.store_episode_with_her(buf, episode, spec.success_eps)


def test_sampling_uniform_and_errors():
    buf = replay.ReplayBuffer(8, 1, 1, 1)
    with pytest.raises(ValueError):
        replay.sample(buf, 4, np.random.default_rng(0))
    for k in range(8):
        buf.add([k], [0], -1.0, [0], [0], [0], False)
    batch = replay.sample(buf, 10_000, np.random.default_rng(0))
    assert len(batch) == 10_000
    counts = np.bincount(batch.obs[:, 0].astype(int), minlength=8)
    assert counts.min() > 0.8 * 10_000 / 8  # roughly uniform


def test_welford_matches_two_pass_oracle():
    rng = np.random.default_rng(3)
    data = rng.normal(-2.0, 3.0, size=(777, 5))
    norm = replay.Normalizer(5)
    for row in data:
        norm.update(row)
    assert np.max(np.abs(norm.mean - data.mean(axis=0))) < 1e-9
    assert np.max(np.abs(norm.std() - data.std(axis=0))) < 1e-9


def test_welford_permutation_stability():
    rng = np.random.default_rng(4)
    data = rng.normal(0, 1, size=(200, 3))
    a, b = replay.Normalizer(3), replay.Normalizer(3)
    for row in data:
        a.update(row)
    for row in data[rng.permutation(200)]:
        b.update(row)
    assert np.max(np.abs(a.mean - b.mean)) < 1e-12
    rel = np.abs(a.m2 - b.m2) / np.abs(a.m2)
    assert np.max(rel) < 1e-9


def test_normalize_range_and_degenerate_cases():
    norm = replay.Normalizer(2)
    with pytest.raises(ValueError):
        norm.normalize(np.zeros(2))
    norm.update(np.array([1.0, 1.0]))
    z = norm.normalize(np.array([[1e9, -1e9], [1.0, 1.0]]))
    assert np.all(z >= -5.0) and np.all(z <= 5.0)
    with pytest.raises(ValueError):
        norm.update(np.array([np.inf, 0.0]))
    with pytest.raises(ValueError):
        norm.update(np.zeros(3))


def test_init_normalizer_from_demos():
    spec, episode = make_episode(0)
    norm = replay.Normalizer(spec.obs_dim + spec.goal_dim)
    replay.init_normalizer_from_demos(norm, episode)
    assert norm.count == len(episode)
    stack = np.array([np.concatenate([t.obs, t.desired_goal])
                      for t in episode])
    assert np.max(np.abs(norm.mean - stack.mean(axis=0))) < 1e-9
    with pytest.raises(ValueError):
        replay.init_normalizer_from_demos(replay.Normalizer(6), [])


def test_constant_demo_stats():
    norm = replay.Normalizer(2)
    for _ in range(5):
        norm.update(np.array([2.5, -1.0]))
    assert np.array_equal(norm.mean, [2.5, -1.0])
    assert np.all(norm.std() == 0.0)

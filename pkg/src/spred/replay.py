"""Experience and demonstration buffers, HER relabeling, input normalization.

The replay buffer is a fixed-capacity FIFO ring over preallocated numpy
arrays; sampling is uniform with replacement.  Episodes enter through
``store_episode_with_her``, which stores every transition twice: once with
its original desired goal and once relabeled with the goal actually achieved
at the episode's final step ("final" relabeling strategy), with the reward
recomputed from the pure reward function.

The ``Normalizer`` keeps Welford running statistics (population variance)
over observation+goal vectors and applies the clipped normalization

    clip((clip(x, -200, 200) - mean) / (std + 1e-6), -5, 5).
"""

import numpy as np

from .envs import compute_reward


class ReplayBuffer:
    def __init__(self, capacity, obs_dim, action_dim, goal_dim):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.achieved_goal = np.zeros((capacity, goal_dim))
        self.desired_goal = np.zeros((capacity, goal_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._cursor = 0

    def add(self, obs, action, reward, next_obs, achieved_goal, desired_goal, done):
        i = self._cursor
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.achieved_goal[i] = achieved_goal
        self.desired_goal[i] = desired_goal
        self.done[i] = done
        self._cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_transition(self, tr):
        self.add(tr.obs, tr.action, tr.reward, tr.next_obs,
                 tr.achieved_goal, tr.desired_goal, tr.done)


class Batch:
    """A sampled mini-batch: column arrays indexed together."""

    __slots__ = ("obs", "action", "reward", "next_obs", "desired_goal")

    def __init__(self, obs, action, reward, next_obs, desired_goal):
        self.obs = obs
        self.action = action
        self.reward = reward
        self.next_obs = next_obs
        self.desired_goal = desired_goal

    def __len__(self):
        return self.obs.shape[0]


def store_episode_with_her(buffer, episode, success_eps):
    """Double storage: each transition once as collected and once relabeled
    with the episode's final achieved goal, reward recomputed."""
    if 2 * len(episode) > buffer.capacity:
        raise ValueError("episode does not fit in the buffer")
    for tr in episode:
        buffer.add_transition(tr)
    final_goal = episode[-1].achieved_goal
    for tr in episode:
        r = compute_reward(tr.achieved_goal, final_goal, success_eps)
        buffer.add(tr.obs, tr.action, r, tr.next_obs, tr.achieved_goal,
                   final_goal, tr.done)


def sample(buffer, n, rng):
    """n i.i.d. uniform draws with replacement from the stored transitions."""
    if buffer.size == 0:
        raise ValueError("cannot sample from an empty buffer")
    idx = rng.integers(0, buffer.size, size=n)
    return Batch(
        buffer.obs[idx], buffer.action[idx], buffer.reward[idx],
        buffer.next_obs[idx], buffer.desired_goal[idx],
    )


class Normalizer:
    """Welford running mean/variance over fixed-dimension vectors."""

    def __init__(self, dim):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != self.mean.shape:
            raise ValueError(f"expected dim {self.mean.shape[0]}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input to normalizer")
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def std(self):
        return np.sqrt(self.m2 / self.count)

    def normalize(self, x):
        """Applies the clipped normalization; x may be a vector or a batch."""
        if self.count == 0:
            raise ValueError("normalizer has no data")
        x = np.clip(x, -200.0, 200.0)
        z = (x - self.mean) / (self.std() + 1e-6)
        return np.clip(z, -5.0, 5.0)


def init_normalizer_from_demos(norm, transitions):
    """Seed the statistics with every demo observation+goal vector."""
    if not transitions:
        raise ValueError("empty demonstration set")
    for tr in transitions:
        norm.update(np.concatenate([tr.obs, tr.desired_goal]))

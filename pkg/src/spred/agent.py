"""Ensemble-critic TD3 with HER and uncertainty-weighted behaviour cloning.

One agent holds an actor (tanh head), m critics with stacked parameters
(see kernels.py), target copies of everything, Adam state, and the running
input normalizer.  Mode switches in AgentConfig reproduce the baselines:
``use_demos=False`` with m=2 is plain TD3+HER, with m=10 it is ensemble
TD3; ``weight_mode`` selects the binary Q-filter variants, the smooth
probabilistic/exponential weights, or the nonparametric comparisons.

Update rules per training iteration:

* critics (twice): one shared target vector over the concatenated
  replay+demo batch, y = r + gamma * min of two uniformly sampled target
  critics at the smoothed target-policy action; every critic takes one Adam
  step on the mean squared error to y.
* actor (once): loss = -l1 * (1/N_R) sum Q_mean(s, pi(s))
  + l2 * sum_demos p * ||pi(s_d) - a_d||^2, with the demo weights p treated
  as constants; then Polyak updates of all targets.

Episodes have a fixed horizon and never terminate early, so the bootstrap
term always applies (no terminal masking).
"""

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import kernels, nn, weighting
from .envs import get_spec, reset, step


@dataclass
class AgentConfig:
    gamma: float = 0.98
    lr: float = 1e-3
    tau: float = 1e-3
    n_replay_batch: int = 1024
    n_demo_batch: int = 128
    lambda1: float = 1e-3
    lambda2: float = 1.0 / 128.0
    explore_std: float = 0.1
    smooth_std: float = 0.2
    smooth_clip: float = 0.5
    critic_updates_per_iter: int = 2
    ensemble_m: int = 10
    hidden: int = 64
    weight_mode: str = "spred-p"
    alpha: float = 10.0
    use_demos: bool = True
    warmup: int = -1               # -1 -> 10 * n_replay_batch
    updates_per_episode: int = -1  # -1 -> one per collected env step

    def __post_init__(self):
        if self.warmup < 0:
            self.warmup = 10 * self.n_replay_batch
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.ensemble_m < 2:
            raise ValueError("ensemble_m must be >= 2")
        if self.weight_mode not in weighting.MODES:
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")


class CriticEnsemble:
    """m critics with identical (in_dim -> h -> h -> 1) topology, parameters
    stacked along a leading critic axis, plus targets and Adam moments."""

    ARRS = ("W1", "b1", "W2", "b2", "W3", "b3")

    def __init__(self, param_sets):
        self.m = len(param_sets)
        self.W1 = np.stack([p.weights[0] for p in param_sets])
        self.W2 = np.stack([p.weights[1] for p in param_sets])
        self.W3 = np.stack([p.weights[2] for p in param_sets])
        self.b1 = np.stack([p.biases[0] for p in param_sets])
        self.b2 = np.stack([p.biases[1] for p in param_sets])
        self.b3 = np.stack([p.biases[2] for p in param_sets])
        for name in self.ARRS:
            arr = getattr(self, name)
            setattr(self, "t" + name, arr.copy())       # target network
            setattr(self, "m" + name, np.zeros_like(arr))  # Adam moments
            setattr(self, "v" + name, np.zeros_like(arr))
        self.step_count = 0

    def stacks(self, target=False):
        pre = "t" if target else ""
        return tuple(getattr(self, pre + n) for n in self.ARRS)

    def q_values(self, x, target=False, subset=None):
        """Ensemble Q-values, shape (m, n) (or (len(subset), n))."""
        arrs = self.stacks(target)
        if subset is not None:
            arrs = tuple(np.ascontiguousarray(a[subset]) for a in arrs)
        return kernels.ens_forward(x, *arrs)

    def adam_step(self, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite critic gradient")
        self.step_count += 1
        t = self.step_count
        for name, g in zip(self.ARRS, grads):
            nn._adam_one(getattr(self, name), g, getattr(self, "m" + name),
                         getattr(self, "v" + name), lr, beta1, beta2, eps, t)

    def polyak(self, tau):
        for name in self.ARRS:
            tgt = getattr(self, "t" + name)
            tgt[...] = tau * getattr(self, name) + (1.0 - tau) * tgt

    def param_set(self, i, target=False):
        """View of critic i as a ParamSet (arrays are views into the stack)."""
        pre = "t" if target else ""
        return nn.ParamSet(
            [getattr(self, pre + "W1")[i], getattr(self, pre + "W2")[i],
             getattr(self, pre + "W3")[i]],
            [getattr(self, pre + "b1")[i], getattr(self, pre + "b2")[i],
             getattr(self, pre + "b3")[i]],
            "linear",
        )


@dataclass
class AgentState:
    spec: object
    config: AgentConfig
    actor: nn.ParamSet
    actor_target: nn.ParamSet
    actor_opt: nn.OptState
    critics: CriticEnsemble
    normalizer: object
    env_steps: int = 0

    @property
    def state_dim(self):
        return self.spec.obs_dim + self.spec.goal_dim


@dataclass
class TrainStreams:
    """Named rng sub-streams so components can be varied independently."""

    batch: np.random.Generator
    critic: np.random.Generator
    weight: np.random.Generator


def make_streams(seed):
    return TrainStreams(
        batch=np.random.default_rng(np.random.SeedSequence([seed, 1])),
        critic=np.random.default_rng(np.random.SeedSequence([seed, 2])),
        weight=np.random.default_rng(np.random.SeedSequence([seed, 3])),
    )


def make_agent(spec, config, seed):
    from .replay import Normalizer

    state_dim = spec.obs_dim + spec.goal_dim
    h = config.hidden
    actor = nn.init_params(
        [(state_dim, h), (h, h), (h, spec.action_dim)], "tanh",
        np.random.SeedSequence([seed, 100]),
    )
    critic_shapes = [(state_dim + spec.action_dim, h), (h, h), (h, 1)]
    critics = CriticEnsemble([
        nn.init_params(critic_shapes, "linear", np.random.SeedSequence([seed, 200 + i]))
        for i in range(config.ensemble_m)
    ])
    return AgentState(
        spec=spec, config=config,
        actor=actor, actor_target=actor.copy(),
        actor_opt=nn.init_opt_state(actor),
        critics=critics,
        normalizer=Normalizer(state_dim),
    )


def net_input(agent, obs, goal):
    """Normalized observation+goal network input.  Before any statistics
    exist (fresh no-demo agent) inputs pass through with the outer clip only."""
    x = np.concatenate([obs, goal], axis=-1)
    if agent.normalizer.count >= 1:
        return agent.normalizer.normalize(x)
    return np.clip(x, -5.0, 5.0)


def select_action(agent, goal_obs, explore, rng):
    """Greedy actor action, optionally with clipped exploration noise."""
    x = net_input(agent, goal_obs.obs, goal_obs.desired_goal)
    a, _ = nn.forward_batch(agent.actor, x[None, :])
    a = a[0]
    if explore:
        a = a + rng.normal(0.0, agent.config.explore_std, size=a.shape)
    return np.clip(a, -1.0, 1.0)


def critic_target(agent, batch, rng):
    """Shared TD target: y = r + gamma * min of two uniformly sampled target
    critics at the smoothed target-policy action."""
    cfg = agent.config
    pair = rng.choice(agent.critics.m, size=2, replace=False)
    s2 = net_input(agent, batch.next_obs, batch.desired_goal)
    a2, _ = nn.forward_batch(agent.actor_target, s2)
    noise = np.clip(
        rng.normal(0.0, cfg.smooth_std, size=a2.shape),
        -cfg.smooth_clip, cfg.smooth_clip,
    )
    a2 = np.clip(a2 + noise, -1.0, 1.0)
    q = agent.critics.q_values(np.concatenate([s2, a2], axis=1),
                               target=True, subset=pair)
    return batch.reward + cfg.gamma * np.minimum(q[0], q[1])


def update_critics(agent, replay_batch, demo_batch, rng):
    """One Adam step for every critic on the MSE to a shared target vector
    over the concatenated replay+demo batch.  Returns the mean critic loss."""
    if len(replay_batch) == 0:
        raise ValueError("empty replay batch")
    batch = replay_batch
    if demo_batch is not None:
        if not agent.config.use_demos:
            raise ValueError("demo batch given but use_demos is off")
        from .replay import Batch
        batch = Batch(
            np.concatenate([replay_batch.obs, demo_batch.obs]),
            np.concatenate([replay_batch.action, demo_batch.action]),
            np.concatenate([replay_batch.reward, demo_batch.reward]),
            np.concatenate([replay_batch.next_obs, demo_batch.next_obs]),
            np.concatenate([replay_batch.desired_goal, demo_batch.desired_goal]),
        )
    y = critic_target(agent, batch, rng)
    s = net_input(agent, batch.obs, batch.desired_goal)
    x = np.ascontiguousarray(np.concatenate([s, batch.action], axis=1))
    loss, *grads = kernels.ens_mse_grads(x, y, *agent.critics.stacks())
    agent.critics.adam_step(grads, agent.config.lr)
    return loss


def actor_gradient(agent, replay_batch, demo_batch, rng):
    """Combined deterministic-policy-gradient and weighted-BC gradient.

    Demo weights are recomputed fresh from the current critics and treated
    as constants (no gradient flows through them).  Returns
    (actor_loss, gradient ParamSet, demo weight vector)."""
    cfg = agent.config
    if demo_batch is not None and not cfg.use_demos:
        raise ValueError("demo batch given but use_demos is off")
    n_r = len(replay_batch)
    sd_state = agent.state_dim

    sr = net_input(agent, replay_batch.obs, replay_batch.desired_goal)
    a_pi, cache_r = nn.forward_batch(agent.actor, sr)
    xr = np.ascontiguousarray(np.concatenate([sr, a_pi], axis=1))
    q_bar = agent.critics.q_values(xr).mean(axis=0)
    dq_da = kernels.ens_mean_input_grad(xr, *agent.critics.stacks())[:, sd_state:]
    gout_r = -(cfg.lambda1 / n_r) * dq_da
    grads, _ = nn.backward_batch(agent.actor, cache_r, gout_r)
    loss = -(cfg.lambda1 / n_r) * float(q_bar.sum())

    weights = np.zeros(0)
    if demo_batch is not None:
        sd = net_input(agent, demo_batch.obs, demo_batch.desired_goal)
        pi_d, cache_d = nn.forward_batch(agent.actor, sd)
        qd = agent.critics.q_values(
            np.ascontiguousarray(np.concatenate([sd, demo_batch.action], axis=1)))
        qpi = agent.critics.q_values(
            np.ascontiguousarray(np.concatenate([sd, pi_d], axis=1)))
        weights = weighting.compute_weights(
            cfg.weight_mode, qd, qpi, cfg.alpha, rng)
        diff = pi_d - demo_batch.action
        gout_d = cfg.lambda2 * 2.0 * weights[:, None] * diff
        bc_grads, _ = nn.backward_batch(agent.actor, cache_d, gout_d)
        for gw, bw in zip(grads.weights, bc_grads.weights):
            gw += bw
        for gb, bb in zip(grads.biases, bc_grads.biases):
            gb += bb
        loss += cfg.lambda2 * float((weights * (diff * diff).sum(axis=1)).sum())

    return loss, grads, weights


def actor_update(agent, replay_batch, demo_batch, rng):
    """One Adam step on the combined actor gradient.  Returns
    (actor_loss, demo weight vector)."""
    loss, grads, weights = actor_gradient(agent, replay_batch, demo_batch, rng)
    nn.adam_step_inplace(agent.actor, grads, agent.actor_opt, agent.config.lr)
    return loss, weights


def train_iteration(agent, buffer, demo_buffer, streams):
    """critic_updates_per_iter critic updates on fresh batches, one actor
    update, then Polyak updates of all targets."""
    from .replay import sample

    cfg = agent.config
    metrics = {"critic_losses": [], "actor_loss": 0.0, "weights": np.zeros(0)}

    def draw():
        rb = sample(buffer, cfg.n_replay_batch, streams.batch)
        db = None
        if cfg.use_demos and demo_buffer is not None:
            db = sample(demo_buffer, cfg.n_demo_batch, streams.batch)
        return rb, db

    for _ in range(cfg.critic_updates_per_iter):
        rb, db = draw()
        metrics["critic_losses"].append(update_critics(agent, rb, db, streams.critic))

    rb, db = draw()
    loss, weights = actor_update(agent, rb, db, streams.weight)
    metrics["actor_loss"] = loss
    metrics["weights"] = weights

    agent.critics.polyak(cfg.tau)
    nn.polyak_inplace(agent.actor_target, agent.actor, cfg.tau)
    return metrics


def evaluate(agent, spec, n_episodes=25, seed=0):
    """Greedy success rate: fraction of episodes whose final step earns
    reward 0, over exploration-noise-free rollouts."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1]))
    successes = 0
    for _ in range(n_episodes):
        state, gobs = reset(spec, rng)
        reward = -1.0
        for _t in range(spec.horizon):
            a = select_action(agent, gobs, explore=False, rng=rng)
            state, gobs, reward, done = step(spec, state, a)
        successes += reward == 0.0
    return successes / n_episodes


# --- checkpointing -----------------------------------------------------------

def save_checkpoint(agent, path):
    """One JSON document with every network, optimizer state, the
    normalizer, the config and the env-step counter."""
    doc = {
        "env": agent.spec.name,
        "env_steps": agent.env_steps,
        "config": dataclasses.asdict(agent.config),
        "actor": nn.params_to_jsonable(agent.actor),
        "actor_target": nn.params_to_jsonable(agent.actor_target),
        "actor_opt": nn.opt_to_jsonable(agent.actor_opt),
        "critics": [nn.params_to_jsonable(agent.critics.param_set(i))
                    for i in range(agent.critics.m)],
        "critic_targets": [nn.params_to_jsonable(agent.critics.param_set(i, target=True))
                           for i in range(agent.critics.m)],
        "critic_moments": {
            pre + name: getattr(agent.critics, pre + name).tolist()
            for name in CriticEnsemble.ARRS for pre in ("m", "v")
        },
        "critic_step_count": agent.critics.step_count,
        "normalizer": {
            "count": agent.normalizer.count,
            "mean": agent.normalizer.mean.tolist(),
            "m2": agent.normalizer.m2.tolist(),
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    from .replay import Normalizer

    with open(path) as f:
        doc = json.load(f)
    spec = get_spec(doc["env"])
    config = AgentConfig(**doc["config"])
    agent = make_agent(spec, config, seed=0)
    agent.env_steps = doc["env_steps"]
    agent.actor = nn.params_from_jsonable(doc["actor"])
    agent.actor_target = nn.params_from_jsonable(doc["actor_target"])
    agent.actor_opt = nn.opt_from_jsonable(doc["actor_opt"])
    critics = CriticEnsemble([nn.params_from_jsonable(d) for d in doc["critics"]])
    tgt = [nn.params_from_jsonable(d) for d in doc["critic_targets"]]
    for k, name in enumerate(("W1", "W2", "W3")):
        getattr(critics, "t" + name)[...] = np.stack([p.weights[k] for p in tgt])
    for k, name in enumerate(("b1", "b2", "b3")):
        getattr(critics, "t" + name)[...] = np.stack([p.biases[k] for p in tgt])
    for key, arr in doc["critic_moments"].items():
        getattr(critics, key)[...] = np.array(arr, dtype=float)
    critics.step_count = doc["critic_step_count"]
    agent.critics = critics
    norm = Normalizer(agent.state_dim)
    norm.count = doc["normalizer"]["count"]
    norm.mean = np.array(doc["normalizer"]["mean"], dtype=float)
    norm.m2 = np.array(doc["normalizer"]["m2"], dtype=float)
    agent.normalizer = norm
    return agent

"""Training orchestration: run configuration, the collect/store/train loop,
metric logging and checkpointing.

A run is fully determined by (config, seed) on a fixed floating-point
environment.  The master seed is split into named sub-streams (environment,
exploration, batch sampling, target-critic sampling, weighting, reward
noise) so components can be varied independently.  Metrics are written as a
CSV with a strictly increasing step column; wall-clock times go to a
separate timing file so the metrics file itself is reproducible
byte-for-byte.
"""

import csv
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import envs, replay
from .agent import (AgentConfig, evaluate, make_agent, make_streams,
                    save_checkpoint, select_action, train_iteration)

METRICS_HEADER = [
    "step", "success_rate", "mean_critic_loss", "actor_loss",
    "weight_mean", "weight_q25", "weight_q75",
]


@dataclass
class RunConfig:
    env: str = "point-reach-2d"
    agent: AgentConfig = field(default_factory=AgentConfig)
    demo_file: str = ""
    total_env_steps: int = 100_000
    eval_every: int = 5_000
    eval_episodes: int = 25
    seed: int = 0
    noisy_reward: dict = field(default_factory=dict)  # {"mode", "p" or "std"}
    checkpoint_every: int = 0  # 0 -> final checkpoint only
    out_dir: str = "run"

    def __post_init__(self):
        if isinstance(self.agent, dict):
            self.agent = AgentConfig(**self.agent)
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.checkpoint_every and self.checkpoint_every % self.eval_every:
            raise ValueError("checkpoint_every must be a multiple of eval_every")
        if self.agent.use_demos and not self.demo_file:
            raise ValueError("use_demos requires a demo_file")

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(f.read())


def _load_demo_buffer(config, spec):
    demo_spec, transitions, _rate = envs.load_demos(config.demo_file)
    if demo_spec != spec:
        raise ValueError(
            f"demo file was recorded for {demo_spec.name} "
            f"(obs_dim={demo_spec.obs_dim}), run is configured for {spec.name} "
            f"(obs_dim={spec.obs_dim})"
        )
    buf = replay.ReplayBuffer(len(transitions), spec.obs_dim,
                              spec.action_dim, spec.goal_dim)
    for tr in transitions:
        buf.add_transition(tr)
    return buf, transitions


def run_training(config):
    """Execute one training run; writes metrics.csv, timing.csv,
    weights.jsonl, config.json and checkpoint(s) into config.out_dir.
    Returns the output directory."""
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w") as f:
        f.write(config.to_json())

    spec = envs.get_spec(config.env)
    agent = make_agent(spec, config.agent, config.seed)
    cfg = agent.config

    demo_buffer = None
    if cfg.use_demos:
        demo_buffer, demo_transitions = _load_demo_buffer(config, spec)
        replay.init_normalizer_from_demos(agent.normalizer, demo_transitions)

    buffer = replay.ReplayBuffer(1_000_000, spec.obs_dim, spec.action_dim,
                                 spec.goal_dim)
    env_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 10]))
    explore_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 12]))
    streams = make_streams(config.seed)

    updates_per_episode = cfg.updates_per_episode
    if updates_per_episode < 0:
        updates_per_episode = spec.horizon

    metrics_rows = []
    timing_rows = []
    weight_rows = []
    critic_losses = []
    last_actor_loss = float("nan")
    last_weights = np.zeros(0)
    t_start = time.perf_counter()

    def emit_row(step):
        rate = evaluate(agent, spec, config.eval_episodes, seed=config.seed)
        mcl = float(np.mean(critic_losses)) if critic_losses else float("nan")
        critic_losses.clear()
        if last_weights.size:
            wq = np.quantile(last_weights, [0.25, 0.75])
            wrow = [float(last_weights.mean()), float(wq[0]), float(wq[1])]
        else:
            wrow = [float("nan")] * 3
        metrics_rows.append([step, rate, mcl, last_actor_loss] + wrow)
        timing_rows.append([step, time.perf_counter() - t_start])
        weight_rows.append({"step": step, "weights": last_weights.tolist()})
        if config.checkpoint_every and step and step % config.checkpoint_every == 0:
            save_checkpoint(agent, os.path.join(out, f"checkpoint_{step}.json"))

    emit_row(0)  # untrained baseline
    next_eval = config.eval_every
    episode_id = 0

    while agent.env_steps < config.total_env_steps:
        state, gobs = envs.reset(spec, env_rng)
        episode = []
        for t in range(spec.horizon):
            agent.normalizer.update(
                np.concatenate([gobs.obs, gobs.desired_goal]))
            if agent.env_steps < cfg.warmup:
                action = explore_rng.uniform(-1.0, 1.0, size=spec.action_dim)
            else:
                action = select_action(agent, gobs, explore=True,
                                       rng=explore_rng)
            state, next_gobs, reward, done = envs.step(spec, state, action)
            episode.append(envs.Transition(
                obs=gobs.obs, action=action, reward=reward,
                next_obs=next_gobs.obs,
                achieved_goal=next_gobs.achieved_goal,
                desired_goal=gobs.desired_goal, done=done,
                episode_id=episode_id, t=t,
            ))
            gobs = next_gobs
            agent.env_steps += 1

        if config.noisy_reward:
            mode = config.noisy_reward["mode"]
            kw = {k: v for k, v in config.noisy_reward.items() if k != "mode"}
            episode = list(envs.wrap_noisy_rewards(episode, mode, noise_rng, **kw))
        replay.store_episode_with_her(buffer, episode, spec.success_eps)
        episode_id += 1

        if agent.env_steps >= cfg.warmup:
            for _ in range(updates_per_episode):
                m = train_iteration(agent, buffer, demo_buffer, streams)
                critic_losses.extend(m["critic_losses"])
                last_actor_loss = m["actor_loss"]
                if m["weights"].size:
                    last_weights = m["weights"]
                if not np.isfinite(m["actor_loss"]):
                    raise RuntimeError(
                        f"non-finite actor loss at step {agent.env_steps}")

        if agent.env_steps >= next_eval:
            while next_eval <= agent.env_steps:
                next_eval += config.eval_every
            emit_row(agent.env_steps)

    save_checkpoint(agent, os.path.join(out, "checkpoint.json"))
    with open(os.path.join(out, "metrics.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_HEADER)
        w.writerows(metrics_rows)
    with open(os.path.join(out, "timing.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "wall_time_s"])
        w.writerows(timing_rows)
    with open(os.path.join(out, "weights.jsonl"), "w") as f:
        for row in weight_rows:
            f.write(json.dumps(row) + "\n")
    return out


def run_eval(checkpoint_path, episodes=25, seed=0, out_csv=""):
    """Evaluate a checkpoint greedily; optionally writes a one-row CSV."""
    from .agent import load_checkpoint

    agent = load_checkpoint(checkpoint_path)
    rate = evaluate(agent, agent.spec, episodes, seed=seed)
    if out_csv:
        with open(out_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["checkpoint", "episodes", "seed", "success_rate"])
            w.writerow([checkpoint_path, episodes, seed, rate])
    return rate

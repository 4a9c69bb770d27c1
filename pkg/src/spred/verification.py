"""Fast self-verification suite: one pass/fail line per invariant group.

Covers gradient exactness, optimizer and target-update algebra, kernel
backend consistency, every weighting example and invariant, the theory
checks (limits, decay, Taylor agreement, synthetic variance gap),
environment and replay/normalizer behaviour, and config round-trips.
Designed to finish in well under a minute on one core.
"""

import math

import numpy as np

from . import analysis, envs, kernels, nn, replay, weighting
from .agent import AgentConfig, CriticEnsemble, make_agent
from .harness import RunConfig


class CheckFailure(AssertionError):
    pass


def _require(cond, msg):
    if not cond:
        raise CheckFailure(msg)


# ---------------------------------------------------------------------------
# nn-core
# ---------------------------------------------------------------------------

def fd_max_rel_error(params, x, gout, h=1e-5):
    """Max relative error of backward() against central finite differences."""
    _, cache = nn.forward(params, x)
    grads, gin = nn.backward(params, cache, gout)
    worst = 0.0

    def loss():
        y, _ = nn.forward(params, x)
        return float(y @ gout)

    for arrs, ganal in ((params.weights, grads.weights),
                        (params.biases, grads.biases)):
        for arr, g in zip(arrs, ganal):
            flat, gflat = arr.ravel(), np.asarray(g).ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss()
                flat[i] = orig - h
                down = loss()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                denom = max(abs(fd), abs(gflat[i]), 1e-8)
                worst = max(worst, abs(fd - gflat[i]) / denom)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        up = loss()
        x[i] = orig - h
        down = loss()
        x[i] = orig
        fd = (up - down) / (2 * h)
        denom = max(abs(fd), abs(gin[i]), 1e-8)
        worst = max(worst, abs(fd - gin[i]) / denom)
    return worst


def check_gradient_exactness(n_nets=100, tol=1e-4):
    rng = np.random.default_rng(12345)
    worst = 0.0
    for k in range(n_nets):
        act = "tanh" if k % 2 else "linear"
        din, h1, dout = rng.integers(1, 4), rng.integers(2, 5), rng.integers(1, 3)
        params = nn.init_params([(din, h1), (h1, dout)], act, seed=int(k))
        for w in params.weights:
            w += rng.normal(0, 0.3, size=w.shape)
        for b in params.biases:
            b += rng.normal(0, 0.3, size=b.shape)
        x = rng.normal(0, 1.0, size=din)
        gout = rng.normal(0, 1.0, size=dout)
        worst = max(worst, fd_max_rel_error(params, x, gout))
    _require(worst < tol, f"max relative gradient error {worst:.3e} >= {tol}")


def check_optimizer_algebra():
    params = nn.init_params([(2, 3), (3, 1)], "linear", seed=0)
    opt = nn.init_opt_state(params)
    zero = nn.ParamSet([np.zeros_like(w) for w in params.weights],
                       [np.zeros_like(b) for b in params.biases], "linear")
    before = [w.copy() for w in params.weights]
    nn.adam_step_inplace(params, zero, opt, 1e-3)
    _require(all(np.array_equal(a, b) for a, b in zip(before, params.weights)),
             "zero gradient moved parameters")
    _require(opt.step_count == 1, "step_count not incremented")

    params = nn.init_params([(1, 1)], "linear", seed=0)
    opt = nn.init_opt_state(params)
    g = nn.ParamSet([np.array([[2.0]])], [np.array([0.0])], "linear")
    w0 = params.weights[0][0, 0]
    nn.adam_step_inplace(params, g, opt, 1e-3)
    step = w0 - params.weights[0][0, 0]
    _require(abs(step - 1e-3) < 1e-8, f"first Adam step {step} != lr")

    bad = nn.ParamSet([np.array([[np.nan]])], [np.array([0.0])], "linear")
    try:
        nn.adam_step_inplace(params, bad, opt, 1e-3)
        raise CheckFailure("non-finite gradient accepted")
    except FloatingPointError:
        pass

    target = nn.init_params([(2, 2)], "linear", seed=1)
    online = nn.init_params([(2, 2)], "linear", seed=2)
    gap = np.abs(target.weights[0] - online.weights[0])
    nn.polyak_inplace(target, online, 0.25)
    gap2 = np.abs(target.weights[0] - online.weights[0])
    _require(np.allclose(gap2, 0.75 * gap), "polyak contraction violated")
    nn.polyak_inplace(target, online, 1.0)
    _require(np.array_equal(target.weights[0], online.weights[0]),
             "tau=1 is not a copy")


def check_init_scheme():
    a = nn.init_params([(2, 3), (3, 1)], "tanh", seed=7)
    b = nn.init_params([(2, 3), (3, 1)], "tanh", seed=7)
    for wa, wb in zip(a.weights, b.weights):
        _require(np.array_equal(wa, wb), "same seed gave different weights")
    for (din, dout), w, bias in zip([(2, 3), (3, 1)], a.weights, a.biases):
        bound = math.sqrt(6.0 / (din + dout))
        _require(np.all(np.abs(w) <= bound), "weight outside init bound")
        _require(np.all(bias == 0.0), "bias not zero at init")


def check_kernel_consistency():
    rng = np.random.default_rng(5)
    m, din, h = 4, 6, 8
    ens = CriticEnsemble([
        nn.init_params([(din, h), (h, h), (h, 1)], "linear", seed=200 + i)
        for i in range(m)
    ])
    x = rng.normal(0, 1, size=(7, din))
    y = rng.normal(-10, 3, size=7)
    q_fast = kernels.ens_forward(x, *ens.stacks())
    for i in range(m):
        q_ref, _ = nn.forward_batch(ens.param_set(i), x)
        _require(np.allclose(q_fast[i], q_ref[:, 0], atol=1e-10),
                 f"kernel forward mismatch on critic {i}")
    loss, *grads = kernels.ens_mse_grads(
        np.ascontiguousarray(x), y, *ens.stacks())
    for i in range(m):
        ps = ens.param_set(i)
        out, cache = nn.forward_batch(ps, x)
        gout = 2.0 * (out[:, 0] - y)[:, None] / x.shape[0]
        ref, _ = nn.backward_batch(ps, cache, gout)
        _require(np.allclose(grads[0][i], ref.weights[0], atol=1e-9),
                 "kernel W1 gradient mismatch")
        _require(np.allclose(grads[5][i], ref.biases[2], atol=1e-9),
                 "kernel b3 gradient mismatch")
    g = kernels.ens_mean_input_grad(np.ascontiguousarray(x), *ens.stacks())
    acc = np.zeros_like(x)
    for i in range(m):
        ps = ens.param_set(i)
        _, cache = nn.forward_batch(ps, x)
        _, gin = nn.backward_batch(ps, cache, np.ones((x.shape[0], 1)) / m)
        acc += gin
    _require(np.allclose(g, acc, atol=1e-10), "mean input gradient mismatch")


# ---------------------------------------------------------------------------
# weighting
# ---------------------------------------------------------------------------

def check_weighting_examples():
    _require(weighting.std_normal_cdf(0.0) == 0.5, "Phi(0) != 0.5")
    _require(abs(weighting.std_normal_cdf(1.0) - 0.8413447) < 1e-6,
             "Phi(1) out of tolerance")
    for x in (-3.7, -0.2, 0.9, 4.2):
        s = weighting.std_normal_cdf(x) + weighting.std_normal_cdf(-x)
        _require(abs(s - 1.0) < 1e-12, "Phi symmetry violated")

    _require(weighting.iqr(np.arange(1.0, 9.0)) == 3.5, "IQR({1..8}) != 3.5")
    st = weighting.ensemble_stats([0.0, 2.0])
    _require(st.mean == 1.0 and st.var == 2.0, "stats of {0,2} wrong")

    sd = weighting.ensemble_stats([2.0, 2.0])
    spi = weighting.ensemble_stats([1.0, 1.0])
    _require(weighting.weight_qfilter(sd, spi, True) == 1.0, "qfilter win")
    _require(weighting.weight_qfilter(sd, sd, True) == 0.0, "qfilter tie")
    sd2 = weighting.ensemble_stats([0.9, 1.5])
    spi2 = weighting.ensemble_stats([1.0, 1.0])
    _require(weighting.weight_qfilter(sd2, spi2, False) == 0.0,
             "qfilter single mode ignored samples[0]")
    _require(weighting.weight_qfilter(sd2, spi2, True) == 1.0,
             "qfilter ensemble mode ignored means")

    sd = weighting.EnsembleQStats(np.array([2.0]), 2.0, 0.5, 0.0)
    spi = weighting.EnsembleQStats(np.array([1.0]), 1.0, 0.5, 0.0)
    _require(abs(weighting.weight_spred_p(sd, spi) - 0.8413447) < 1e-6,
             "spred-p at unit z wrong")
    tie = weighting.EnsembleQStats(np.array([1.0]), 1.0, 0.0, 0.0)
    _require(weighting.weight_spred_p(tie, tie) == 0.5, "degenerate tie != 0.5")

    beta = 10.0 * 0.5 * (1.0 + 1.0)
    sat = weighting.EnsembleQStats(np.zeros(1), beta * math.log(2.0), 0.0, 1.0)
    base = weighting.EnsembleQStats(np.zeros(1), 0.0, 0.0, 1.0)
    _require(weighting.weight_spred_e(sat, base, 10.0) == 1.0,
             "p_E saturation not exactly 1")
    tenth = weighting.EnsembleQStats(np.zeros(1), 0.1 * beta, 0.0, 1.0)
    _require(abs(weighting.weight_spred_e(tenth, base, 10.0)
                 - (math.e ** 0.1 - 1.0)) < 1e-12, "p_E at 0.1*beta wrong")
    neg = weighting.EnsembleQStats(np.zeros(1), -0.5, 0.0, 1.0)
    _require(weighting.weight_spred_e(neg, base, 10.0) == 0.0,
             "p_E not zero for A<0")

    rng = np.random.default_rng(0)
    _require(weighting.weight_nonpara([5.0, 6.0], [1.0, 2.0], "cross", rng) == 1.0,
             "nonpara all-win != 1")
    _require(weighting.weight_nonpara([1.0, 1.0], [1.0, 1.0], "cross", rng) == 0.0,
             "nonpara all-tie != 0")
    _require(weighting.weight_nonpara([1.0, 3.0], [2.0, 2.0], "cross", rng) == 0.5,
             "nonpara {1,3}x{2,2} != 0.5")


def check_weighting_invariants(n_pairs=10_000):
    rng = np.random.default_rng(77)
    m = 10
    for _ in range(n_pairs // 100):
        qd = rng.normal(0, rng.uniform(0.1, 5), size=(100, m))
        qpi = rng.normal(0, rng.uniform(0.1, 5), size=(100, m))
        for row_d, row_pi in zip(qd[:3], qpi[:3]):
            sd = weighting.ensemble_stats(row_d)
            spi = weighting.ensemble_stats(row_pi)
            pp = weighting.weight_spred_p(sd, spi)
            pe = weighting.weight_spred_e(sd, spi)
            _require(0.0 <= pp <= 1.0 and 0.0 <= pe <= 1.0, "weight range")
            c, lam = 3.7, 2.5
            sd_s = weighting.ensemble_stats(row_d + c)
            spi_s = weighting.ensemble_stats(row_pi + c)
            _require(abs(weighting.weight_spred_p(sd_s, spi_s) - pp) < 1e-9,
                     "p_P shift invariance")
            _require(abs(weighting.weight_spred_e(sd_s, spi_s) - pe) < 1e-9,
                     "p_E shift invariance")
            sd_l = weighting.ensemble_stats(row_d * lam)
            spi_l = weighting.ensemble_stats(row_pi * lam)
            _require(abs(weighting.weight_spred_p(sd_l, spi_l) - pp) < 1e-9,
                     "p_P scale invariance")
            _require(abs(weighting.weight_spred_e(sd_l, spi_l) - pe) < 1e-9,
                     "p_E scale invariance")
            shifted = weighting.ensemble_stats(row_d + 0.5)
            _require(weighting.weight_spred_p(shifted, spi) >= pp - 1e-12,
                     "p_P monotone in A")
            _require(weighting.weight_spred_e(shifted, spi) >= pe - 1e-12,
                     "p_E monotone in A")
    q = rng.normal(0, 1, size=(m, 64))
    w = weighting.compute_weights("spred-p", q, q + rng.normal(0, 1, q.shape),
                                  10.0, rng)
    _require(np.all((w >= 0) & (w <= 1)), "batched weight range")


# ---------------------------------------------------------------------------
# theory
# ---------------------------------------------------------------------------

def check_limits():
    rows = analysis.limit_behavior_table()
    fails = analysis.check_limit_rows(rows)
    _require(not fails, "; ".join(fails))


def check_decay():
    rows = analysis.suboptimal_decay_sim()
    last = rows[-1]
    _require(last["p_p"] < 1e-3 and last["p_e"] < 1e-3,
             f"final weights {last['p_p']}, {last['p_e']} not < 1e-3")
    control = analysis.suboptimal_decay_sim(delta=0.0)[-1]
    _require(abs(control["p_p"] - 0.5) < 1e-9, "delta=0 control != 0.5")


def check_taylor():
    rows, _ = analysis.taylor_agreement()
    bad = [r for r in rows if r["deviation"] > r["bound"]]
    _require(not bad, f"{len(bad)} grid points violate the Taylor bound")


def check_variance_gap_synthetic():
    v = analysis.variance_gap_synthetic(1_000_000, rng=0)
    _require(abs(v["binary"] - 0.25) < 0.005,
             f"binary variance {v['binary']} not ~0.25")
    _require(abs(v["continuous"] - 1.0 / 12.0) < 0.005,
             f"continuous variance {v['continuous']} not ~1/12")
    _require(v["continuous"] < v["binary"], "variance gap direction")


# ---------------------------------------------------------------------------
# env / replay
# ---------------------------------------------------------------------------

def check_env_basics():
    spec = envs.get_spec("point-reach-2d")
    g = np.zeros(2)
    at_eps = np.array([spec.success_eps, 0.0])  # distance == success_eps
    _require(envs.compute_reward(at_eps, g, spec.success_eps) == -1.0,
             "boundary distance not counted as failure")
    _require(envs.compute_reward(g, g, spec.success_eps) == 0.0,
             "exact hit not success")
    s1, o1 = envs.reset(spec, np.random.default_rng(3))
    s2, o2 = envs.reset(spec, np.random.default_rng(3))
    _require(np.array_equal(o1.obs, o2.obs), "reset nondeterministic")
    a = np.array([0.3, -0.7])
    r1 = envs.step(spec, s1, a)
    r2 = envs.step(spec, s2, a)
    _require(np.array_equal(r1[1].obs, r2[1].obs), "step nondeterministic")

    eps, rate = envs.generate_demos(spec, "expert", 20, seed=123)
    _require(rate >= 0.95, f"expert success rate {rate} < 0.95")
    eps2, rate2 = envs.generate_demos(spec, "expert", 20, seed=123)
    _require(rate == rate2 and all(
        np.array_equal(a.action, b.action)
        for ea, eb in zip(eps, eps2) for a, b in zip(ea, eb)),
        "demo generation nondeterministic")
    mixed, _ = envs.generate_demos(spec, "mixed-1pct", 100, seed=1)
    _require(len(mixed) == 100, "mixed demo episode count")


def check_replay_and_normalizer():
    spec = envs.get_spec("point-reach-2d")
    eps, _ = envs.generate_demos(spec, "suboptimal", 2, seed=5)
    buf = replay.ReplayBuffer(1000, spec.obs_dim, spec.action_dim,
                              spec.goal_dim)
    episode = eps[0]
    replay.store_episode_with_her(buf, episode, spec.success_eps)
    _require(buf.size == 2 * len(episode), "double storage count wrong")
    final_goal = episode[-1].achieved_goal
    last = buf.size - 1
    _require(np.array_equal(buf.desired_goal[last], final_goal),
             "relabeled goal is not the final achieved goal")
    _require(buf.reward[last] == 0.0, "final relabeled transition reward != 0")
    for i in range(len(episode), buf.size):
        want = envs.compute_reward(buf.achieved_goal[i], final_goal,
                                   spec.success_eps)
        _require(buf.reward[i] == want, "relabeled reward inconsistent")

    rng = np.random.default_rng(2)
    data = rng.normal(3.0, 2.0, size=(500, 4))
    norm = replay.Normalizer(4)
    for row in data:
        norm.update(row)
    _require(np.max(np.abs(norm.mean - data.mean(axis=0))) < 1e-9,
             "Welford mean vs two-pass")
    _require(np.max(np.abs(norm.std() - data.std(axis=0))) < 1e-9,
             "Welford std vs two-pass")
    z = norm.normalize(rng.normal(0, 100, size=(50, 4)))
    _require(np.all(z >= -5.0) and np.all(z <= 5.0), "normalized range")


# ---------------------------------------------------------------------------
# agent / harness plumbing
# ---------------------------------------------------------------------------

def check_agent_plumbing():
    spec = envs.get_spec("point-reach-2d")
    cfg = AgentConfig(hidden=16, ensemble_m=3, n_replay_batch=8,
                      n_demo_batch=4, use_demos=False)
    agent = make_agent(spec, cfg, seed=0)
    agent.actor.weights[-1][:] = 0.0
    agent.actor.biases[-1][:] = 0.0
    out, _ = nn.forward_batch(agent.actor, np.zeros((1, agent.state_dim)))
    _require(np.all(out == 0.0), "zero final layer gives nonzero action")
    _require(np.all(np.abs(out) < 1.0), "tanh output not inside (-1,1)")

    agent.critics.tW1 += 0.25  # create a target/online gap
    gap = np.abs(agent.critics.tW1 - agent.critics.W1).max()
    agent.critics.polyak(0.5)
    gap2 = np.abs(agent.critics.tW1 - agent.critics.W1).max()
    _require(abs(gap2 - 0.5 * gap) < 1e-12, "critic polyak factor wrong")


def check_config_roundtrip():
    cfg = RunConfig(env="point-push-2d",
                    agent=AgentConfig(hidden=16, weight_mode="spred-e",
                                      lambda1=0.5),
                    demo_file="demos.jsonl", total_env_steps=1234,
                    eval_every=100, seed=9, out_dir="x")
    again = RunConfig.from_json(cfg.to_json())
    _require(again == cfg, "RunConfig does not round-trip through JSON")


CHECKS = [
    ("gradient-exactness", check_gradient_exactness),
    ("optimizer-algebra", check_optimizer_algebra),
    ("init-scheme", check_init_scheme),
    ("kernel-consistency", check_kernel_consistency),
    ("weighting-examples", check_weighting_examples),
    ("weighting-invariants", check_weighting_invariants),
    ("limit-behavior", check_limits),
    ("suboptimal-decay", check_decay),
    ("taylor-agreement", check_taylor),
    ("variance-gap-synthetic", check_variance_gap_synthetic),
    ("env-basics", check_env_basics),
    ("replay-and-normalizer", check_replay_and_normalizer),
    ("agent-plumbing", check_agent_plumbing),
    ("config-roundtrip", check_config_roundtrip),
]


def run_verification(out=print):
    """Run every check; prints one PASS/FAIL line each and returns the
    number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # report, keep going
            failures += 1
            out(f"FAIL {name}: {exc}")
        else:
            out(f"PASS {name}")
    return failures

"""Executable verification of the theory behind uncertainty-weighted
behaviour cloning: the gradient-variance gap of continuous versus binary
demonstration filtering, limit behaviour of the weights, decay on
suboptimal demonstrations, Taylor agreement of the two weighting methods,
weight-evolution summaries, and Gaussian-vs-nonparametric run comparison.

Each operation both returns its numbers and can emit a CSV (or SVG)
artifact; the assertions stated in the docstrings are enforced by the
``verify`` command and the test suite rather than silently assumed.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .agent import load_checkpoint, net_input
from .envs import load_demos
from .weighting import (LN2, ensemble_stats, iqr, weight_qfilter,
                        weight_spred_e, weight_spred_p)

THREE_BUCKETS = ("lt_0.1", "mid", "gt_0.9")


# ---------------------------------------------------------------------------
# Gradient-variance gap
# ---------------------------------------------------------------------------

def variance_gap_synthetic(n_draws=1_000_000, rng=None):
    """Monte-Carlo check of the variance gap on the canonical synthetic
    case: unit gradient g=1 and weight p ~ Uniform(0,1).  The binary
    estimator draws Bernoulli(p)·g, the continuous one uses p·g directly.
    Returns {"binary": Var(Bernoulli(U)) ≈ 1/4, "continuous": Var(U) ≈ 1/12}.
    """
    rng = np.random.default_rng(rng)
    p = rng.uniform(0.0, 1.0, size=n_draws)
    bern = (rng.uniform(0.0, 1.0, size=n_draws) < p).astype(float)
    return {
        "binary": float(np.var(bern)),
        "continuous": float(np.var(p)),
    }


def _bc_gradient(agent, obs, actions, goals, weights, scale):
    """Flattened actor-parameter gradient of scale·Σ_k w_k·‖π(s_k)−a_k‖²
    with the weights treated as constants."""
    x = net_input(agent, obs, goals)
    pi, cache = nn.forward_batch(agent.actor, x)
    gout = scale * weights[:, None] * 2.0 * (pi - actions)
    grads, _ = nn.backward_batch(agent.actor, cache, gout)
    return np.concatenate(
        [g.ravel() for g in grads.weights] + [g.ravel() for g in grads.biases])


def _demo_arrays(transitions):
    obs = np.array([t.obs for t in transitions])
    act = np.array([t.action for t in transitions])
    goal = np.array([t.desired_goal for t in transitions])
    return obs, act, goal


def variance_gap_experiment(checkpoint, demo_file, n_resamples=200,
                            batch=0, rng=None, out_csv=""):
    """At a frozen training snapshot, estimate the variance of the
    behaviour-cloning gradient estimator (1/N_D)·Σ w_k·g_k under demo-batch
    resampling, for binary ensemble filtering and both continuous weighting
    methods.  Reports the trace of the empirical covariance of the
    flattened gradient per mode.  Demos are sampled with replacement; a
    warning field notes when the demo set is smaller than the batch.
    """
    agent = load_checkpoint(checkpoint)
    _, transitions, _ = load_demos(demo_file)
    obs, act, goal = _demo_arrays(transitions)
    if batch <= 0:
        batch = agent.config.n_demo_batch
    if len(transitions) < batch:
        import warnings
        warnings.warn("fewer demonstrations than the batch size; "
                      "sampling with replacement")
    rng = np.random.default_rng(rng)

    modes = ("qfilter-ensemble-mean", "spred-p", "spred-e")
    grads = {mode: [] for mode in modes}
    for _ in range(n_resamples):
        idx = rng.integers(0, len(transitions), size=batch)
        o, a, g = obs[idx], act[idx], goal[idx]
        x = net_input(agent, o, g)
        pi = nn.forward_batch(agent.actor, x)[0]
        qd = agent.critics.q_values(np.concatenate([x, a], axis=1))
        qpi = agent.critics.q_values(np.concatenate([x, pi], axis=1))
        for mode in modes:
            w = np.array([
                _weight_for(mode, qd[:, k], qpi[:, k], agent.config.alpha)
                for k in range(batch)
            ])
            grads[mode].append(
                _bc_gradient(agent, o, a, g, w, 1.0 / batch))

    table = {}
    for mode in modes:
        stack = np.stack(grads[mode])
        cov_trace = float(np.sum(np.var(stack, axis=0, ddof=1)))
        table[mode] = cov_trace
    if out_csv:
        with open(out_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["mode", "gradient_variance_trace"])
            for mode in modes:
                w.writerow([mode, repr(table[mode])])
    return table


def _weight_for(mode, qd, qpi, alpha):
    stats_d = ensemble_stats(qd)
    stats_pi = ensemble_stats(qpi)
    if mode == "qfilter-ensemble-mean":
        return weight_qfilter(stats_d, stats_pi, ensemble_mean=True)
    if mode == "spred-p":
        return weight_spred_p(stats_d, stats_pi)
    if mode == "spred-e":
        return weight_spred_e(stats_d, stats_pi, alpha)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Limit behaviour
# ---------------------------------------------------------------------------

def limit_behavior_table(A_values=(-1.0, -0.1, 0.1, 1.0),
                         spread_scales=(1e-6, 1e-3, 1.0, 1e3, 1e6),
                         alpha=10.0, m=10, rng=None, out_csv=""):
    """Tabulate both weights over a grid of advantages and ensemble-spread
    scales.  Base ensemble samples are rescaled around their means by each
    scale, so scale→0 is the high-certainty limit and scale→∞ the
    high-uncertainty limit.  Alongside the practical per-distribution-IQR
    temperature, the theoretical pooled-sample (mixture) IQR temperature is
    tabulated; its high-certainty limit for A>0 is clip(e^{1/α}−1, 0, 1).
    """
    if any(s <= 0 for s in spread_scales):
        raise ValueError("spread scales must be positive")
    rng = np.random.default_rng(rng if rng is not None else 0)
    base_d = rng.normal(0.0, 1.0, size=m)
    base_pi = rng.normal(0.0, 1.0, size=m)
    base_d -= base_d.mean()
    base_pi -= base_pi.mean()

    rows = []
    for A in A_values:
        for scale in spread_scales:
            qd = A + scale * base_d
            qpi = scale * base_pi
            sd = ensemble_stats(qd)
            spi = ensemble_stats(qpi)
            p_p = weight_spred_p(sd, spi)
            p_e = weight_spred_e(sd, spi, alpha)
            beta_mix = alpha * iqr(np.concatenate([qd, qpi]))
            if A <= 0:
                p_e_mix = 0.0
            elif beta_mix <= 0.0:
                p_e_mix = 1.0
            else:
                p_e_mix = min(math.expm1(min(A / beta_mix, LN2)), 1.0)
            rows.append({"A": A, "scale": scale, "p_p": p_p,
                         "p_e": p_e, "p_e_mixture_beta": p_e_mix})
    if out_csv:
        with open(out_csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return rows


def check_limit_rows(rows, alpha=10.0, tol=1e-3):
    """Assert the limit rows of a limit_behavior_table: high certainty
    drives p_P to the advantage indicator and the practical p_E to the
    indicator, while high uncertainty drives p_P to 0.5 and p_E to 0; the
    mixture-temperature variant tends to e^{1/α}−1 for A>0 at high
    certainty.  Returns the list of failure strings (empty on success)."""
    failures = []
    mix_limit = math.expm1(1.0 / alpha)
    for r in rows:
        A, scale = r["A"], r["scale"]
        if scale <= 1e-6:
            want_p = 1.0 if A > 0 else (0.5 if A == 0 else 0.0)
            if abs(r["p_p"] - want_p) > tol:
                failures.append(f"p_P limit at A={A}, scale={scale}: "
                                f"{r['p_p']} != {want_p}")
            want_e = 1.0 if A > 0 else 0.0
            if abs(r["p_e"] - want_e) > tol:
                failures.append(f"p_E limit at A={A}, scale={scale}: "
                                f"{r['p_e']} != {want_e}")
            if A > 0 and abs(r["p_e_mixture_beta"] - mix_limit) > tol:
                failures.append(
                    f"mixture-beta p_E limit at A={A}: "
                    f"{r['p_e_mixture_beta']} != {mix_limit}")
        if scale >= 1e6:
            if abs(r["p_p"] - 0.5) > tol:
                failures.append(f"p_P high-uncertainty at A={A}: "
                                f"{r['p_p']} != 0.5")
            if r["p_e"] > tol:
                failures.append(f"p_E high-uncertainty at A={A}: "
                                f"{r['p_e']} > {tol}")
    return failures


# ---------------------------------------------------------------------------
# Suboptimal decay
# ---------------------------------------------------------------------------

def suboptimal_decay_sim(steps=40, delta=1.0, sigma0=4.0, alpha=10.0,
                         m=10, rng=None, out_csv=""):
    """Synthesize a sequence of ensemble pairs whose mean gap converges to
    −delta while both spreads halve each step, and record both weights.
    With delta>0 the final weights vanish; the delta=0 control instead
    tends to the 0.5 tie value for the probabilistic weight."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    rng = np.random.default_rng(rng if rng is not None else 0)
    base_d = rng.normal(0.0, 1.0, size=m)
    base_pi = rng.normal(0.0, 1.0, size=m)
    base_d -= base_d.mean()
    base_pi -= base_pi.mean()

    rows = []
    for t in range(steps):
        sigma = sigma0 * 0.5 ** t
        gap = -delta * (1.0 - 0.5 ** t)  # converges to -delta
        sd = ensemble_stats(gap + sigma * base_d)
        spi = ensemble_stats(sigma * base_pi)
        rows.append({
            "step": t, "mean_gap": gap, "sigma": sigma,
            "p_p": weight_spred_p(sd, spi),
            "p_e": weight_spred_e(sd, spi, alpha),
        })
    if out_csv:
        with open(out_csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return rows


# ---------------------------------------------------------------------------
# Taylor agreement
# ---------------------------------------------------------------------------

def taylor_agreement(sigma_grid=(0.01, 0.1, 1.0, 10.0),
                     ratio_grid=None, out_csv=""):
    """Compare the probabilistic weight against the exponential form at the
    matched temperature β = σ√(2π): both have first-order behaviour A/β
    around A=0, so |(p_P − 1/2) − (e^{A/β} − 1)| is second-order in A/σ.
    Returns (rows, max_deviation); the pointwise bound 0.2·(A/σ)² + 1e−12
    is asserted by callers."""
    if ratio_grid is None:
        ratio_grid = np.linspace(-0.05, 0.05, 41)
    rows = []
    max_dev = 0.0
    for sigma in sigma_grid:
        for ratio in ratio_grid:
            ratio = float(ratio)
            if abs(ratio) > 0.05 + 1e-12:
                raise ValueError("|A|/sigma must be <= 0.05")
            A = ratio * sigma
            beta = sigma * math.sqrt(2.0 * math.pi)
            p_p = 0.5 * math.erfc(-(A / sigma) / math.sqrt(2.0))
            exp_form = math.expm1(A / beta)
            dev = abs((p_p - 0.5) - exp_form)
            bound = 0.2 * ratio ** 2 + 1e-12
            rows.append({"sigma": sigma, "ratio": ratio, "A": A,
                         "p_p_minus_half": p_p - 0.5,
                         "exp_form": exp_form, "deviation": dev,
                         "bound": bound})
            max_dev = max(max_dev, dev)
    if out_csv:
        with open(out_csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return rows, max_dev


# ---------------------------------------------------------------------------
# Weight evolution
# ---------------------------------------------------------------------------

@dataclass
class WeightLog:
    """Per-actor-update records of (step, demo-weight vector)."""

    records: list  # list of (step, np.ndarray of weights)

    @classmethod
    def load(cls, path):
        records = []
        with open(path) as f:
            for line in f:
                row = json.loads(line)
                w = np.asarray(row["weights"], dtype=float)
                if w.size:
                    records.append((int(row["step"]), w))
        return cls(records)


def three_bucket_fractions(weights):
    """Fractions of weights in [0, 0.1), [0.1, 0.9] and (0.9, 1]."""
    w = np.asarray(weights, dtype=float)
    lo = float(np.mean(w < 0.1))
    hi = float(np.mean(w > 0.9))
    return {"lt_0.1": lo, "mid": 1.0 - lo - hi, "gt_0.9": hi}


def weight_evolution_report(log, out_csv="", out_svg="", n_bins=20):
    """Per-record histogram of the demo weights (n_bins equal bins over
    [0,1]) plus the three-bucket fractions; optionally emits the binned CSV
    and a deterministic SVG line chart of the fractions versus step."""
    if not log.records:
        raise ValueError("empty weight log")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    rows = []
    for step, w in log.records:
        hist, _ = np.histogram(w, bins=edges)
        row = {"step": step, "n": int(w.size)}
        row.update(three_bucket_fractions(w))
        for b in range(n_bins):
            row[f"bin_{b}"] = int(hist[b])
        rows.append(row)
    if out_csv:
        with open(out_csv, "w", newline="") as f:
            wcsv = csv.DictWriter(f, fieldnames=list(rows[0]))
            wcsv.writeheader()
            wcsv.writerows(rows)
    if out_svg:
        with open(out_svg, "w") as f:
            f.write(_fractions_svg(rows))
    return rows


def _fractions_svg(rows, width=640, height=360, margin=40):
    """Static SVG line chart of the three bucket fractions versus step."""
    steps = [r["step"] for r in rows]
    smin, smax = min(steps), max(steps)
    span = (smax - smin) or 1

    def x(s):
        return margin + (width - 2 * margin) * (s - smin) / span

    def y(v):
        return height - margin - (height - 2 * margin) * v

    colors = {"lt_0.1": "#d62728", "mid": "#7f7f7f", "gt_0.9": "#2ca02c"}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
    ]
    for i, key in enumerate(THREE_BUCKETS):
        pts = " ".join(f"{x(r['step']):.2f},{y(r[key]):.2f}" for r in rows)
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{colors[key]}" stroke-width="2"/>')
        parts.append(f'<text x="{margin + 8}" y="{margin + 16 * (i + 1)}" '
                     f'fill="{colors[key]}" font-size="12">{key}</text>')
    parts.append(f'<text x="{width // 2 - 30}" y="{height - 8}" '
                 f'font-size="12">step</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Gaussian vs nonparametric comparison
# ---------------------------------------------------------------------------

def success_auc(steps, rates):
    """Area under the success curve via the trapezoid rule (reduces to
    rate·span for a constant curve)."""
    trapezoid = getattr(np, "trapezoid", np.trapz)
    return float(trapezoid(rates, steps))


def _read_metrics(path):
    steps, rates = [], []
    with open(path) as f:
        for row in csv.DictReader(f):
            steps.append(float(row["step"]))
            rates.append(float(row["success_rate"]))
    return np.array(steps), np.array(rates)


def gaussian_vs_nonpara_compare(runs_by_mode, out_csv=""):
    """Aggregate final and area-under-curve success rates per weighting
    mode over matched seed sets.  ``runs_by_mode`` maps mode name to a list
    of metrics CSV paths (one per seed); all modes must supply the same
    number of runs.  No ordering is asserted."""
    sizes = {m: len(v) for m, v in runs_by_mode.items()}
    if len(set(sizes.values())) != 1:
        raise ValueError(f"mismatched run sets per mode: {sizes}")
    rows = []
    for mode in sorted(runs_by_mode):
        finals, aucs = [], []
        for path in runs_by_mode[mode]:
            steps, rates = _read_metrics(path)
            finals.append(rates[-1])
            aucs.append(success_auc(steps, rates))
        rows.append({
            "mode": mode, "n_runs": len(finals),
            "final_mean": float(np.mean(finals)),
            "final_std": float(np.std(finals)),
            "auc_mean": float(np.mean(aucs)),
            "auc_std": float(np.std(aucs)),
        })
    if out_csv:
        with open(out_csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return rows

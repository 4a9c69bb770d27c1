"""Demonstration-weight computations.

Given two sets of ensemble Q-value samples for the same demonstration state
(one at the demonstrated action, one at the current policy's action), these
functions decide how strongly that demonstration should pull on the actor:

* ``weight_qfilter``   -- binary gate (single estimate or ensemble means),
* ``weight_spred_p``   -- probability that the demo action is better, from a
  Gaussian model of the two ensembles,
* ``weight_spred_e``   -- clipped exponential of the advantage, normalised by
  an IQR-based scale,
* ``weight_nonpara``   -- distribution-free pairwise / crosswise comparisons.

All weights live in [0, 1].  Ties resolve to "do not imitate": every
comparison that decides a weight uses strict inequality.
"""

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)

MODES = (
    "qfilter-single",
    "qfilter-ensemble-mean",
    "spred-p",
    "spred-e",
    "nonpara-pairwise",
    "nonpara-cross",
)


@dataclass
class EnsembleQStats:
    """Summary of one ensemble of Q-estimates at a fixed (state, action)."""

    samples: np.ndarray
    mean: float
    var: float
    iqr: float


def iqr(samples):
    """Interquartile range with linearly interpolated quartiles at positions
    0.25*(m-1) and 0.75*(m-1) of the sorted sample.  This one rule is used
    everywhere an IQR appears."""
    q1, q3 = np.quantile(np.asarray(samples, dtype=float), [0.25, 0.75])
    return float(q3 - q1)


def ensemble_stats(qvals):
    """Mean, unbiased (m-1) sample variance and IQR of m >= 2 Q-estimates."""
    q = np.asarray(qvals, dtype=float)
    if q.ndim != 1 or q.shape[0] < 2:
        raise ValueError("need at least 2 ensemble samples")
    return EnsembleQStats(q, float(q.mean()), float(q.var(ddof=1)), iqr(q))


def std_normal_cdf(x):
    """Standard normal CDF via the complementary error function:
    Phi(x) = erfc(-x / sqrt(2)) / 2.  Accurate to well below 1e-7 everywhere,
    including far tails."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def weight_qfilter(stats_d, stats_pi, ensemble_mean):
    """Binary behaviour-cloning gate: 1 iff the demonstration estimate is
    strictly higher.  Single mode compares first-critic samples, ensemble
    mode compares ensemble means."""
    if ensemble_mean:
        return 1.0 if stats_d.mean > stats_pi.mean else 0.0
    return 1.0 if stats_d.samples[0] > stats_pi.samples[0] else 0.0


def weight_spred_p(stats_d, stats_pi):
    """Probability that the demo action outperforms the policy action under
    independent Gaussian models of the two ensembles.  With zero total
    variance the weight degenerates to the indicator of a positive
    advantage, and to 0.5 when the advantage is also zero."""
    a = stats_d.mean - stats_pi.mean
    s2 = stats_d.var + stats_pi.var
    if s2 <= 0.0:
        if a == 0.0:
            return 0.5
        return 1.0 if a > 0.0 else 0.0
    return std_normal_cdf(a / math.sqrt(s2))


def weight_spred_e(stats_d, stats_pi, alpha=10.0):
    """Clipped exponential advantage weight clip(e^(A/beta) - 1, 0, 1) with
    beta = alpha * (IQR_d + IQR_pi) / 2.  Saturates at A = beta*ln 2; zero
    for A <= 0.  Degenerate beta = 0 gives the indicator of A > 0."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    a = stats_d.mean - stats_pi.mean
    if a <= 0.0:
        return 0.0
    beta = alpha * 0.5 * (stats_d.iqr + stats_pi.iqr)
    if beta <= 0.0:
        return 1.0
    r = a / beta
    if r >= LN2:
        return 1.0
    return math.exp(r) - 1.0


def weight_nonpara(qd, qpi, mode, rng):
    """Distribution-free comparison weights.

    pairwise: fraction of strict wins qd[i] > qpi[sigma(i)] for one random
    permutation sigma.  cross: fraction of strict wins over all m*m pairs.
    """
    qd = np.asarray(qd, dtype=float)
    qpi = np.asarray(qpi, dtype=float)
    if qd.shape != qpi.shape or qd.ndim != 1 or qd.size < 1:
        raise ValueError("qd and qpi must be equal-length nonempty vectors")
    if mode == "pairwise":
        perm = rng.permutation(qd.size)
        return float(np.mean(qd > qpi[perm]))
    if mode == "cross":
        return float(np.mean(qd[:, None] > qpi[None, :]))
    raise ValueError(f"unknown nonparametric mode {mode!r}")


# --- batched versions used by the actor update -------------------------------

def ensemble_stats_batch(q):
    """Per-column stats of q with shape (m, n): means, (m-1) variances and
    IQRs, each of shape (n,)."""
    mean = q.mean(axis=0)
    var = q.var(axis=0, ddof=1)
    q1, q3 = np.quantile(q, [0.25, 0.75], axis=0)
    return mean, var, q3 - q1


def compute_weights(mode, qd, qpi, alpha, rng):
    """Demo weights for a batch: qd and qpi are (m, n) ensemble Q-values at
    the demonstrated and the policy actions.  Returns an (n,) array in [0, 1].

    Matches the scalar functions above element-wise.
    """
    if mode not in MODES:
        raise ValueError(f"unknown weight mode {mode!r}")
    if mode == "qfilter-single":
        return (qd[0] > qpi[0]).astype(float)
    if mode == "nonpara-pairwise":
        perm = rng.permutation(qd.shape[0])
        return (qd > qpi[perm]).mean(axis=0)
    if mode == "nonpara-cross":
        return (qd[:, None, :] > qpi[None, :, :]).mean(axis=(0, 1))

    md, vd, id_ = ensemble_stats_batch(qd)
    mp, vp, ip = ensemble_stats_batch(qpi)
    a = md - mp
    if mode == "qfilter-ensemble-mean":
        return (a > 0.0).astype(float)
    if mode == "spred-p":
        s2 = vd + vp
        out = np.empty_like(a)
        for k in range(a.size):
            if s2[k] <= 0.0:
                out[k] = 0.5 if a[k] == 0.0 else (1.0 if a[k] > 0.0 else 0.0)
            else:
                out[k] = std_normal_cdf(a[k] / math.sqrt(s2[k]))
        return out
    # spred-e
    beta = alpha * 0.5 * (id_ + ip)
    out = np.zeros_like(a)
    pos = a > 0.0
    deg = pos & (beta <= 0.0)
    out[deg] = 1.0
    act = pos & (beta > 0.0)
    r = np.minimum(a[act] / beta[act], LN2)
    out[act] = np.expm1(r)
    np.clip(out, 0.0, 1.0, out=out)
    return out

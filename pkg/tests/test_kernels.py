"""Critic-ensemble kernels: equivalence of both backends with the
reference per-critic network route, and backend selection."""

import os
import subprocess
import sys

import numpy as np

from spred import kernels, nn
from spred.agent import CriticEnsemble


def make_ensemble(m=4, din=6, h=8):
    return CriticEnsemble([
        nn.init_params([(din, h), (h, h), (h, 1)], "linear", seed=300 + i)
        for i in range(m)
    ])


def test_forward_matches_per_critic_networks():
    ens = make_ensemble()
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.normal(0, 1, size=(9, 6)))
    q = kernels.ens_forward(x, *ens.stacks())
    assert q.shape == (ens.m, 9)
    for i in range(ens.m):
        ref, _ = nn.forward_batch(ens.param_set(i), x)
        assert np.allclose(q[i], ref[:, 0], atol=1e-12)


def test_mse_grads_match_per_critic_backprop():
    ens = make_ensemble()
    rng = np.random.default_rng(1)
    x = np.ascontiguousarray(rng.normal(0, 1, size=(12, 6)))
    y = rng.normal(-5, 2, size=12)
    loss, *grads = kernels.ens_mse_grads(x, y, *ens.stacks())

    losses = []
    for i in range(ens.m):
        ps = ens.param_set(i)
        out, cache = nn.forward_batch(ps, x)
        err = out[:, 0] - y
        losses.append(float(np.mean(err ** 2)))
        ref, _ = nn.backward_batch(ps, cache, (2.0 * err / 12)[:, None])
        assert np.allclose(grads[0][i], ref.weights[0], atol=1e-10)
        assert np.allclose(grads[1][i], ref.biases[0], atol=1e-10)
        assert np.allclose(grads[2][i], ref.weights[1], atol=1e-10)
        assert np.allclose(grads[3][i], ref.biases[1], atol=1e-10)
        assert np.allclose(grads[4][i], ref.weights[2], atol=1e-10)
        assert np.allclose(grads[5][i], ref.biases[2], atol=1e-10)
    assert abs(loss - np.mean(losses)) < 1e-12


def test_mean_input_grad_matches_reference():
    ens = make_ensemble()
    rng = np.random.default_rng(2)
    x = np.ascontiguousarray(rng.normal(0, 1, size=(7, 6)))
    g = kernels.ens_mean_input_grad(x, *ens.stacks())
    acc = np.zeros_like(x)
    for i in range(ens.m):
        ps = ens.param_set(i)
        _, cache = nn.forward_batch(ps, x)
        _, gin = nn.backward_batch(ps, cache, np.ones((7, 1)) / ens.m)
        acc += gin
    assert np.allclose(g, acc, atol=1e-12)


def test_backends_agree_numerically():
    """Whatever backend is active, the pure-numpy reference gives the same
    numbers (to fp round-off)."""
    ens = make_ensemble()
    rng = np.random.default_rng(3)
    x = np.ascontiguousarray(rng.normal(0, 1, size=(10, 6)))
    y = rng.normal(-5, 2, size=10)
    q_a = kernels.ens_forward(x, *ens.stacks())
    q_b = kernels._ens_forward_np(x, *ens.stacks())
    assert np.allclose(q_a, q_b, atol=1e-12)
    out_a = kernels.ens_mse_grads(x, y, *ens.stacks())
    out_b = kernels._ens_mse_grads_np(x, y, *ens.stacks())
    assert abs(out_a[0] - out_b[0]) < 1e-12
    for ga, gb in zip(out_a[1:], out_b[1:]):
        assert np.allclose(ga, gb, atol=1e-12)
    g_a = kernels.ens_mean_input_grad(x, *ens.stacks())
    g_b = kernels._ens_mean_input_grad_np(x, *ens.stacks())
    assert np.allclose(g_a, g_b, atol=1e-12)


def test_backend_env_flag_selects_numpy():
    env = dict(os.environ, SPRED_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", "from spred.kernels import BACKEND; print(BACKEND)"],
        capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"

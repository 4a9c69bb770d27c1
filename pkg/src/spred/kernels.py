"""Hot numeric kernels for the critic ensemble.

All critics share the same fixed topology (two ReLU hidden layers, linear
output) so their parameters are kept stacked: ``W1`` has shape
``(m, in_dim, h1)``, ``b1`` has ``(m, h1)`` and so on.  Evaluating or
differentiating the whole ensemble is then a handful of array operations
instead of ``m`` separate Python-level passes.

Two interchangeable backends are provided:

* a numba ``@njit`` backend that fuses the per-critic loop (default), and
* a pure-numpy backend built on batched ``np.matmul``.

Selection happens once at import time via the environment variable
``SPRED_NUMBA``: set it to ``0`` to force the numpy path.  Both backends
compute the same quantities; ``benchmarks/bench_kernels.py`` compares them.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "ens_forward",
    "ens_mse_grads",
    "ens_mean_input_grad",
]


# ---------------------------------------------------------------------------
# numpy backend: batched matmul over the critic axis
# ---------------------------------------------------------------------------

def _ens_forward_np(x, W1, b1, W2, b2, W3, b3):
    a1 = np.maximum(np.matmul(x, W1) + b1[:, None, :], 0.0)
    a2 = np.maximum(np.matmul(a1, W2) + b2[:, None, :], 0.0)
    q = np.matmul(a2, W3) + b3[:, None, :]
    return q[:, :, 0]


def _ens_mse_grads_np(x, y, W1, b1, W2, b2, W3, b3):
    n = x.shape[0]
    z1 = np.matmul(x, W1) + b1[:, None, :]
    a1 = np.maximum(z1, 0.0)
    z2 = np.matmul(a1, W2) + b2[:, None, :]
    a2 = np.maximum(z2, 0.0)
    q = np.matmul(a2, W3) + b3[:, None, :]

    r = q - y[None, :, None]
    loss = float(np.mean(r * r))
    g3 = r * (2.0 / n)
    gW3 = np.matmul(a2.transpose(0, 2, 1), g3)
    gb3 = g3.sum(axis=1)
    g2 = np.matmul(g3, W3.transpose(0, 2, 1)) * (z2 > 0.0)
    gW2 = np.matmul(a1.transpose(0, 2, 1), g2)
    gb2 = g2.sum(axis=1)
    g1 = np.matmul(g2, W2.transpose(0, 2, 1)) * (z1 > 0.0)
    gW1 = np.matmul(x.T[None, :, :], g1)
    gb1 = g1.sum(axis=1)
    return loss, gW1, gb1, gW2, gb2, gW3, gb3


def _ens_mean_input_grad_np(x, W1, b1, W2, b2, W3, b3):
    m = W1.shape[0]
    z1 = np.matmul(x, W1) + b1[:, None, :]
    a1 = np.maximum(z1, 0.0)
    z2 = np.matmul(a1, W2) + b2[:, None, :]

    g2 = np.broadcast_to(W3.transpose(0, 2, 1), (m, 1, W2.shape[2]))
    g2 = g2 * (z2 > 0.0)
    g1 = np.matmul(g2, W2.transpose(0, 2, 1)) * (z1 > 0.0)
    gx = np.matmul(g1, W1.transpose(0, 2, 1))
    return gx.mean(axis=0)


# ---------------------------------------------------------------------------
# numba backend: explicit loop over critics, BLAS dots inside
# ---------------------------------------------------------------------------

def _build_numba_backend():
    from numba import njit

    @njit(cache=True)
    def ens_forward_nb(x, W1, b1, W2, b2, W3, b3):
        m = W1.shape[0]
        n = x.shape[0]
        q = np.empty((m, n))
        for i in range(m):
            a1 = np.maximum(np.dot(x, W1[i]) + b1[i], 0.0)
            a2 = np.maximum(np.dot(a1, W2[i]) + b2[i], 0.0)
            qi = np.dot(a2, W3[i]) + b3[i]
            q[i] = qi[:, 0]
        return q

    @njit(cache=True)
    def ens_mse_grads_nb(x, y, W1, b1, W2, b2, W3, b3):
        m = W1.shape[0]
        n = x.shape[0]
        gW1 = np.empty_like(W1)
        gb1 = np.empty_like(b1)
        gW2 = np.empty_like(W2)
        gb2 = np.empty_like(b2)
        gW3 = np.empty_like(W3)
        gb3 = np.empty_like(b3)
        xT = np.ascontiguousarray(x.T)
        loss = 0.0
        for i in range(m):
            z1 = np.dot(x, W1[i]) + b1[i]
            a1 = np.maximum(z1, 0.0)
            z2 = np.dot(a1, W2[i]) + b2[i]
            a2 = np.maximum(z2, 0.0)
            q = np.dot(a2, W3[i]) + b3[i]

            r = q[:, 0] - y
            loss += np.mean(r * r)
            g3 = (r * (2.0 / n)).reshape(n, 1)
            gW3[i] = np.dot(a2.T, g3)
            gb3[i, 0] = np.sum(g3)
            g2 = np.dot(g3, np.ascontiguousarray(W3[i].T)) * (z2 > 0.0)
            gW2[i] = np.dot(a1.T, g2)
            gb2[i] = g2.sum(axis=0)
            g1 = np.dot(g2, np.ascontiguousarray(W2[i].T)) * (z1 > 0.0)
            gW1[i] = np.dot(xT, g1)
            gb1[i] = g1.sum(axis=0)
        return loss / m, gW1, gb1, gW2, gb2, gW3, gb3

    @njit(cache=True)
    def ens_mean_input_grad_nb(x, W1, b1, W2, b2, W3, b3):
        m = W1.shape[0]
        n = x.shape[0]
        gx = np.zeros((n, x.shape[1]))
        for i in range(m):
            z1 = np.dot(x, W1[i]) + b1[i]
            a1 = np.maximum(z1, 0.0)
            z2 = np.dot(a1, W2[i]) + b2[i]

            g2 = np.ascontiguousarray(W3[i].T) * (z2 > 0.0)
            g1 = np.dot(g2, np.ascontiguousarray(W2[i].T)) * (z1 > 0.0)
            gx += np.dot(g1, np.ascontiguousarray(W1[i].T))
        return gx / m

    return ens_forward_nb, ens_mse_grads_nb, ens_mean_input_grad_nb


def _want_numba():
    flag = os.environ.get("SPRED_NUMBA", "1")
    return flag not in ("0", "false", "no")


if _want_numba():
    try:
        ens_forward, ens_mse_grads, ens_mean_input_grad = _build_numba_backend()
        BACKEND = "numba"
    except ImportError:
        ens_forward = _ens_forward_np
        ens_mse_grads = _ens_mse_grads_np
        ens_mean_input_grad = _ens_mean_input_grad_np
        BACKEND = "numpy"
else:
    ens_forward = _ens_forward_np
    ens_mse_grads = _ens_mse_grads_np
    ens_mean_input_grad = _ens_mean_input_grad_np
    BACKEND = "numpy"

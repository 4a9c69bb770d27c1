"""Minimal dense feed-forward networks with exact backpropagation.

Everything is double precision numpy.  Hidden layers are always ReLU; the
output layer is either linear (critics) or tanh (actor, so actions stay in
(-1, 1)).  Gradients are computed by hand and are exact, which the test
suite checks against central finite differences.
"""

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("linear", "tanh")


@dataclass
class ParamSet:
    """Parameters of one MLP: per-layer weight matrices (in_dim, out_dim) and
    bias vectors, plus the output activation."""

    weights: list
    biases: list
    activation: str = "linear"

    @property
    def layer_shapes(self):
        return [w.shape for w in self.weights]

    def copy(self):
        return ParamSet(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


@dataclass
class OptState:
    """Adam moment accumulators, shape-congruent with a ParamSet."""

    m_weights: list
    v_weights: list
    m_biases: list
    v_biases: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def copy(self):
        return OptState(
            [a.copy() for a in self.m_weights],
            [a.copy() for a in self.v_weights],
            [a.copy() for a in self.m_biases],
            [a.copy() for a in self.v_biases],
            self.step_count,
            self.beta1,
            self.beta2,
            self.epsilon,
        )


def init_params(layer_shapes, activation, seed):
    """Fan-scaled uniform init: W ~ U(-r, r) with r = sqrt(6/(fan_in+fan_out)),
    biases zero.  Identical seed gives bit-identical parameters."""
    if not layer_shapes:
        raise ValueError("layer_shapes must be nonempty")
    for k, (din, dout) in enumerate(layer_shapes):
        if din < 1 or dout < 1:
            raise ValueError(f"layer {k} has a zero or negative dimension")
        if k > 0 and layer_shapes[k - 1][1] != din:
            raise ValueError(f"layer shapes do not chain at layer {k}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")

    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for din, dout in layer_shapes:
        r = np.sqrt(6.0 / (din + dout))
        weights.append(rng.uniform(-r, r, size=(din, dout)))
        biases.append(np.zeros(dout))
    return ParamSet(weights, biases, activation)


def init_opt_state(params, beta1=0.9, beta2=0.999, epsilon=1e-8):
    return OptState(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
        [np.zeros_like(b) for b in params.biases],
        0,
        beta1,
        beta2,
        epsilon,
    )


def forward_batch(params, x):
    """Evaluate a batch (n, in_dim) -> (n, out_dim).  The cache holds the
    layer inputs and pre-activations needed by backward_batch."""
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"input has shape {x.shape}, expected (*, {params.weights[0].shape[0]})"
        )
    n_layers = len(params.weights)
    inputs = [x]
    pre = []
    h = x
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        if k < n_layers - 1:
            h = np.maximum(z, 0.0)
        elif params.activation == "tanh":
            h = np.tanh(z)
        else:
            h = z
        inputs.append(h)
    return inputs[-1], (inputs, pre)


def forward(params, x):
    """Single-vector evaluation; see forward_batch."""
    x = np.asarray(x, dtype=float)
    y, cache = forward_batch(params, x[None, :])
    return y[0], cache


def backward_batch(params, cache, output_grad):
    """Exact gradients of sum(output * output_grad) over the batch.

    Returns (grad ParamSet, input gradient (n, in_dim)).
    """
    inputs, pre = cache
    n_layers = len(params.weights)
    if output_grad.shape != pre[-1].shape:
        raise ValueError(
            f"output_grad has shape {output_grad.shape}, expected {pre[-1].shape}"
        )
    gw = [None] * n_layers
    gb = [None] * n_layers
    if params.activation == "tanh":
        t = np.tanh(pre[-1])
        g = output_grad * (1.0 - t * t)
    else:
        g = output_grad
    for k in range(n_layers - 1, -1, -1):
        gw[k] = inputs[k].T @ g
        gb[k] = g.sum(axis=0)
        g = g @ params.weights[k].T
        if k > 0:
            g = g * (pre[k - 1] > 0.0)
    return ParamSet(gw, gb, params.activation), g


def backward(params, cache, output_grad):
    """Single-vector counterpart of backward_batch."""
    output_grad = np.asarray(output_grad, dtype=float)
    grads, gin = backward_batch(params, cache, output_grad[None, :])
    return grads, gin[0]


def _adam_one(p, g, m, v, lr, b1, b2, eps, t):
    m[...] = b1 * m + (1.0 - b1) * g
    v[...] = b2 * v + (1.0 - b2) * g * g
    mhat = m / (1.0 - b1**t)
    vhat = v / (1.0 - b2**t)
    p[...] = p - lr * mhat / (np.sqrt(vhat) + eps)


def adam_step_inplace(params, grads, opt, lr):
    """Standard bias-corrected Adam update, mutating params and opt."""
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient component")
    opt.step_count += 1
    t = opt.step_count
    for k in range(len(params.weights)):
        _adam_one(
            params.weights[k], grads.weights[k], opt.m_weights[k],
            opt.v_weights[k], lr, opt.beta1, opt.beta2, opt.epsilon, t,
        )
        _adam_one(
            params.biases[k], grads.biases[k], opt.m_biases[k],
            opt.v_biases[k], lr, opt.beta1, opt.beta2, opt.epsilon, t,
        )


def adam_step(params, grads, opt, lr):
    """Functional Adam update: returns (params', opt') without mutating inputs."""
    p2, o2 = params.copy(), opt.copy()
    adam_step_inplace(p2, grads, o2, lr)
    return p2, o2


def polyak_inplace(target, online, tau):
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    for tw, ow in zip(target.weights, online.weights):
        tw[...] = tau * ow + (1.0 - tau) * tw
    for tb, ob in zip(target.biases, online.biases):
        tb[...] = tau * ob + (1.0 - tau) * tb


def polyak_update(target, online, tau):
    """target' = tau * online + (1 - tau) * target, component-wise."""
    t2 = target.copy()
    polyak_inplace(t2, online, tau)
    return t2


# --- checkpoint serialization ------------------------------------------------

def params_to_jsonable(params):
    return {
        "layer_shapes": [list(s) for s in params.layer_shapes],
        "activation": params.activation,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def params_from_jsonable(doc):
    return ParamSet(
        [np.array(w, dtype=float) for w in doc["weights"]],
        [np.array(b, dtype=float) for b in doc["biases"]],
        doc["activation"],
    )


def opt_to_jsonable(opt):
    return {
        "m_weights": [a.tolist() for a in opt.m_weights],
        "v_weights": [a.tolist() for a in opt.v_weights],
        "m_biases": [a.tolist() for a in opt.m_biases],
        "v_biases": [a.tolist() for a in opt.v_biases],
        "step_count": opt.step_count,
        "beta1": opt.beta1,
        "beta2": opt.beta2,
        "epsilon": opt.epsilon,
    }


def opt_from_jsonable(doc):
    return OptState(
        [np.array(a, dtype=float) for a in doc["m_weights"]],
        [np.array(a, dtype=float) for a in doc["v_weights"]],
        [np.array(a, dtype=float) for a in doc["m_biases"]],
        [np.array(a, dtype=float) for a in doc["v_biases"]],
        doc["step_count"],
        doc["beta1"],
        doc["beta2"],
        doc["epsilon"],
    )

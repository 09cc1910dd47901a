"""Elman recurrent network and its unfolding-based gradient paths.

The state function is z_t = phi(W_rec z_{t-1} + W_in x_t + b) with output
head y_t = out(W_out z_t + c).  Per-step losses are the negative log
likelihood matching the configured output: squared error / 2 for gaussian,
Bernoulli cross entropy for sigmoid outputs, categorical cross entropy for
softmax.  All gradient routines work in float64 and average over batch
columns so the learning rate keeps its meaning across batch sizes.
"""

from dataclasses import dataclass, field

import numpy as np

from ..numerics import ActivationKind, apply_activation, gaussian_init


class BaselineError(ValueError):
    """Raised on shape or configuration violations in baseline learners."""


def _column(x):
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(-1, 1) if x.ndim == 1 else x


@dataclass
class ElmanConfig:
    input_dim: int
    hidden_dim: int
    output_dim: int
    state_activation: str = "tanh"
    output_likelihood: str = "gaussian"

    def output_activation(self):
        return {
            "gaussian": ActivationKind.IDENTITY,
            "bernoulli": ActivationKind.SIGMOID,
            "categorical": ActivationKind.SOFTMAX,
        }[self.output_likelihood]


@dataclass
class ElmanModel:
    cfg: ElmanConfig
    params: dict = field(default_factory=dict)


def build_elman(cfg, variance, rng):
    """Gaussian-initialized Elman model; biases start at zero."""
    if min(cfg.input_dim, cfg.hidden_dim, cfg.output_dim) < 1:
        raise BaselineError("all dimensions must be >= 1")
    n, k, o = cfg.hidden_dim, cfg.input_dim, cfg.output_dim
    params = {
        "W_in": gaussian_init(n, k, variance, rng),
        "W_rec": gaussian_init(n, n, variance, rng),
        "W_out": gaussian_init(o, n, variance, rng),
        "b": np.zeros((n, 1)),
        "c": np.zeros((o, 1)),
    }
    return ElmanModel(cfg=cfg, params=params)


def elman_step(model, z_prev, x):
    """One state transition and output: returns (z, y_out)."""
    p = model.params
    z_prev, x = _column(z_prev), _column(x)
    if z_prev.shape[0] != model.cfg.hidden_dim or x.shape[0] != model.cfg.input_dim:
        raise BaselineError(
            f"state/input dims {z_prev.shape[0]}/{x.shape[0]} do not match model"
        )
    a = p["W_rec"] @ z_prev + p["W_in"] @ x + p["b"]
    z = apply_activation(model.cfg.state_activation, a)
    y = apply_activation(model.cfg.output_activation(), p["W_out"] @ z + p["c"])
    return z, y


def activation_derivative(kind, a, z):
    """phi'(a), expressed through a and z = phi(a) where convenient."""
    kind = ActivationKind(kind)
    if kind is ActivationKind.IDENTITY:
        return np.ones_like(a)
    if kind is ActivationKind.TANH:
        return 1.0 - z * z
    if kind is ActivationKind.SIGMOID:
        return z * (1.0 - z)
    if kind is ActivationKind.RELU:
        return (a > 0).astype(np.float64)
    raise BaselineError(f"no derivative available for activation {kind.value!r}")


def step_loss(likelihood, y, target):
    """Per-step negative log likelihood, averaged over batch columns."""
    y, target = _column(y), _column(target)
    batch = y.shape[1]
    if likelihood == "gaussian":
        return 0.5 * float(((y - target) ** 2).sum()) / batch
    p = np.clip(y, 1e-12, 1.0 - 1e-12)
    if likelihood == "bernoulli":
        ce = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
        return float(ce.sum()) / batch
    if likelihood == "categorical":
        return float(-(target * np.log(p)).sum()) / batch
    raise BaselineError(f"unknown likelihood: {likelihood}")


def output_delta(likelihood, y, target):
    """dLoss/d(output pre-activation).

    For all three likelihood/output pairings (identity+SE/2,
    sigmoid+Bernoulli CE, softmax+categorical CE) this is y - target.
    """
    if likelihood not in ("gaussian", "bernoulli", "categorical"):
        raise BaselineError(f"unknown likelihood: {likelihood}")
    return _column(y) - _column(target)


def _forward(model, inputs, targets, z0=None):
    p = model.params
    n = model.cfg.hidden_dim
    xs = [_column(x) for x in inputs]
    ts = [_column(t) for t in targets]
    if len(xs) != len(ts) or not xs:
        raise BaselineError("inputs and targets must be equal-length, non-empty")
    batch = xs[0].shape[1]
    z = np.zeros((n, batch)) if z0 is None else _column(z0)
    zs, pre, outs = [z], [], []
    for x in xs:
        a = p["W_rec"] @ zs[-1] + p["W_in"] @ x + p["b"]
        z = apply_activation(model.cfg.state_activation, a)
        pre.append(a)
        zs.append(z)
        outs.append(
            apply_activation(model.cfg.output_activation(), p["W_out"] @ z + p["c"])
        )
    return xs, ts, zs, pre, outs


def sequence_loss(model, inputs, targets, z0=None):
    """Total next-step loss over a sequence (the quantity BPTT/RTRL descend)."""
    _, ts, _, _, outs = _forward(model, inputs, targets, z0)
    return sum(
        step_loss(model.cfg.output_likelihood, y, t) for y, t in zip(outs, ts)
    )


def bptt_gradients(model, inputs, targets, z0=None):
    """Exact gradients of the summed sequence loss via backward unrolling."""
    return tbptt_gradients(model, len(list(inputs)), inputs, targets, z0)


def tbptt_gradients(model, window, inputs, targets, z0=None):
    """BPTT restricted to the last ``window`` steps.

    The forward pass covers the whole buffer; losses and the backward sweep
    only touch the final ``window`` steps, and the state entering that
    window is treated as a constant.
    """
    if window < 1:
        raise BaselineError(f"window must be >= 1, got {window}")
    xs, ts, zs, pre, outs = _forward(model, inputs, targets, z0)
    p = model.params
    total = len(xs)
    start = max(total - window, 0)
    batch = xs[0].shape[1]
    grads = {name: np.zeros_like(mat) for name, mat in p.items()}
    carry = np.zeros_like(zs[-1])
    like = model.cfg.output_likelihood
    for t in range(total - 1, start - 1, -1):
        delta_o = output_delta(like, outs[t], ts[t])
        grads["W_out"] += delta_o @ zs[t + 1].T
        grads["c"] += delta_o.sum(axis=1, keepdims=True)
        q = p["W_out"].T @ delta_o + carry
        d = q * activation_derivative(model.cfg.state_activation, pre[t], zs[t + 1])
        grads["W_rec"] += d @ zs[t].T
        grads["W_in"] += d @ xs[t].T
        grads["b"] += d.sum(axis=1, keepdims=True)
        carry = p["W_rec"].T @ d
    return {name: g / batch for name, g in grads.items()}

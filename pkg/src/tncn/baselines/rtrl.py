"""Exact real-time recurrent learning for the Elman model.

The carry holds the full influence Jacobian dz/dtheta as one dense block
per recurrent parameter tensor, flattened row-major along the parameter
axis.  The forward recursion

    J_t = diag(phi'(a_t)) (W_rec J_{t-1} + d a_t / d theta)

costs O(n^4) per step for the recurrent block, which is the point: the
cost itself is a measured artifact.  Single-sequence only (batch 1).
"""

from dataclasses import dataclass

import numpy as np

from .elman import BaselineError, _column, activation_derivative, output_delta
from ..numerics import apply_activation


@dataclass
class RtrlCarry:
    """Hidden state plus dz/dtheta blocks, zero at sequence start."""

    z: np.ndarray
    jac: dict  # name -> (n, prod(param shape)) influence block


def init_rtrl_carry(model):
    n, k = model.cfg.hidden_dim, model.cfg.input_dim
    return RtrlCarry(
        z=np.zeros((n, 1)),
        jac={
            "W_rec": np.zeros((n, n * n)),
            "W_in": np.zeros((n, n * k)),
            "b": np.zeros((n, n)),
        },
    )


def rtrl_step(model, carry, x, target):
    """One forward step: exact per-step gradient plus the updated carry."""
    p = model.params
    cfg = model.cfg
    n, k = cfg.hidden_dim, cfg.input_dim
    x, target = _column(x), _column(target)
    if x.shape[1] != 1:
        raise BaselineError("rtrl_step is single-sequence (batch 1)")
    z_prev = carry.z

    a = p["W_rec"] @ z_prev + p["W_in"] @ x + p["b"]
    z = apply_activation(cfg.state_activation, a)
    y = apply_activation(cfg.output_activation(), p["W_out"] @ z + p["c"])
    d = activation_derivative(cfg.state_activation, a, z)[:, 0]

    jac = {}
    rows = np.arange(n)
    for name, block in carry.jac.items():
        jac[name] = d[:, None] * (p["W_rec"] @ block)
    # Immediate influence of each tensor on a_t enters on the diagonal rows.
    j3 = jac["W_rec"].reshape(n, n, n)
    j3[rows, rows, :] += d[:, None] * z_prev[:, 0][None, :]
    j3 = jac["W_in"].reshape(n, n, k)
    j3[rows, rows, :] += d[:, None] * x[:, 0][None, :]
    jac["b"][rows, rows] += d

    delta_o = output_delta(cfg.output_likelihood, y, target)
    q = (p["W_out"].T @ delta_o)[:, 0]
    grads = {
        "W_rec": (q @ jac["W_rec"]).reshape(n, n),
        "W_in": (q @ jac["W_in"]).reshape(n, k),
        "b": (q @ jac["b"]).reshape(n, 1),
        "W_out": delta_o @ z.T,
        "c": delta_o.copy(),
    }
    return grads, RtrlCarry(z=z, jac=jac)

"""Unbiased online recurrent optimization for the Elman model.

Maintains a rank-one estimate z_tilde (x) theta_tilde of the influence
Jacobian dz/dtheta.  At every step a fresh Rademacher sign vector nu mixes
the forward-propagated estimate with the immediate parameter influence:

    z_tilde'    = rho0 * J z_tilde + rho1 * nu
    theta_tilde' = theta_tilde / rho0 + (nu^T dz/dtheta) / rho1

with the variance-minimizing norm ratios rho0, rho1.  Expectations over nu
recover the exact RTRL Jacobian, so gradient estimates are unbiased from
the zero-initialized carry onward.  The multi-tensor parameter case is
handled by treating theta_tilde as one block per tensor and taking norms
over the concatenation, the standard construction for this estimator.
Single-sequence only (batch 1).
"""

from dataclasses import dataclass

import numpy as np

from .elman import BaselineError, _column, activation_derivative, output_delta
from ..numerics import apply_activation

_EPS = 1e-12  # floor on rho numerators/denominators (zero-norm tensors)


@dataclass
class UoroCarry:
    """Hidden state plus the rank-one factors, zero at sequence start."""

    z: np.ndarray
    z_tilde: np.ndarray     # (n,)
    theta_tilde: dict       # name -> array shaped like the parameter


def init_uoro_carry(model):
    n, k = model.cfg.hidden_dim, model.cfg.input_dim
    return UoroCarry(
        z=np.zeros((n, 1)),
        z_tilde=np.zeros(n),
        theta_tilde={
            "W_rec": np.zeros((n, n)),
            "W_in": np.zeros((n, k)),
            "b": np.zeros(n),
        },
    )


def _global_norm(blocks):
    return np.sqrt(sum(float((b * b).sum()) for b in blocks.values()))


def uoro_step(model, carry, x, target, rng):
    """One forward step: stochastic gradient estimate plus updated carry."""
    p = model.params
    cfg = model.cfg
    n = cfg.hidden_dim
    x, target = _column(x), _column(target)
    if x.shape[1] != 1:
        raise BaselineError("uoro_step is single-sequence (batch 1)")
    z_prev = carry.z

    a = p["W_rec"] @ z_prev + p["W_in"] @ x + p["b"]
    z = apply_activation(cfg.state_activation, a)
    y = apply_activation(cfg.output_activation(), p["W_out"] @ z + p["c"])
    d = activation_derivative(cfg.state_activation, a, z)[:, 0]

    # Forward-propagated old factor: J z_tilde with J = diag(d) W_rec.
    jz = d * (p["W_rec"] @ carry.z_tilde)
    nu = rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0
    nu_d = nu * d
    # nu^T dz/dtheta, kept tensor-shaped per parameter block.
    direct_proj = {
        "W_rec": np.outer(nu_d, z_prev[:, 0]),
        "W_in": np.outer(nu_d, x[:, 0]),
        "b": nu_d.copy(),
    }

    rho0 = np.sqrt(
        max(_global_norm(carry.theta_tilde), _EPS)
        / max(np.linalg.norm(jz), _EPS)
    )
    rho1 = np.sqrt(
        max(_global_norm(direct_proj), _EPS) / max(np.linalg.norm(nu), _EPS)
    )

    z_tilde = rho0 * jz + rho1 * nu
    theta_tilde = {
        name: carry.theta_tilde[name] / rho0 + direct_proj[name] / rho1
        for name in direct_proj
    }

    delta_o = output_delta(cfg.output_likelihood, y, target)
    q = (p["W_out"].T @ delta_o)[:, 0]
    scale = float(q @ z_tilde)
    grads = {
        "W_rec": scale * theta_tilde["W_rec"],
        "W_in": scale * theta_tilde["W_in"],
        "b": (scale * theta_tilde["b"]).reshape(n, 1),
        "W_out": delta_o @ z.T,
        "c": delta_o.copy(),
    }
    return grads, UoroCarry(z=z, z_tilde=z_tilde, theta_tilde=theta_tilde)

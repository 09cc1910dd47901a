"""Echo state network: fixed random reservoir, trainable linear readout.

Reservoir units are leaky integrators,

    z_r = tanh(W_x [1; x] + W_r z(t-1))
    z(t) = (1 - alpha) z(t-1) + alpha z_r,

with W_x acting on the bias-augmented input and W_r conditioned to a
configured spectral radius at construction.  Only the readout (W_y, c)
ever changes during training, by plain SGD on the output loss or by an
optional one-shot ridge regression for offline runs.
"""

from dataclasses import dataclass, field

import numpy as np

from .elman import BaselineError, _column, output_delta
from ..numerics import apply_activation, gaussian_init, spectral_radius_rescale


@dataclass
class EsnConfig:
    input_dim: int
    reservoir_dim: int
    output_dim: int
    spectral_radius: float = 0.9
    leak: float = 0.3
    input_variance: float = 0.01
    output_likelihood: str = "gaussian"

    def output_activation(self):
        return {
            "gaussian": "identity",
            "bernoulli": "sigmoid",
            "categorical": "softmax",
        }[self.output_likelihood]


@dataclass
class EsnModel:
    cfg: EsnConfig
    W_x: np.ndarray   # (N, 1 + k), fixed
    W_r: np.ndarray   # (N, N), fixed, spectral radius = cfg.spectral_radius
    W_y: np.ndarray   # (o, N), trainable
    c: np.ndarray     # (o, 1), trainable
    z: np.ndarray = field(default=None)

    def reset_state(self, batch_size=1):
        self.z = np.zeros((self.cfg.reservoir_dim, batch_size))


def build_esn(cfg, rng):
    if not 0.0 < cfg.leak <= 1.0:
        raise BaselineError(f"leak must be in (0, 1], got {cfg.leak}")
    n, k, o = cfg.reservoir_dim, cfg.input_dim, cfg.output_dim
    w_r = spectral_radius_rescale(
        gaussian_init(n, n, 1.0, rng), cfg.spectral_radius
    )
    model = EsnModel(
        cfg=cfg,
        W_x=gaussian_init(n, 1 + k, cfg.input_variance, rng),
        W_r=w_r,
        W_y=np.zeros((o, n)),
        c=np.zeros((o, 1)),
    )
    model.reset_state()
    return model


def esn_step(model, x):
    """Advance the reservoir one step; returns (z, y_out)."""
    x = _column(x)
    if model.z is None or model.z.shape[1] != x.shape[1]:
        model.reset_state(x.shape[1])
    ones = np.ones((1, x.shape[1]))
    aug = np.vstack([ones, x])
    z_r = np.tanh(model.W_x @ aug + model.W_r @ model.z)
    model.z = (1.0 - model.cfg.leak) * model.z + model.cfg.leak * z_r
    y = apply_activation(
        model.cfg.output_activation(), model.W_y @ model.z + model.c
    )
    return model.z, y


def esn_train_output(model, z, target, eta):
    """One SGD step on the readout; reservoir weights are never touched."""
    z, target = _column(z), _column(target)
    batch = z.shape[1]
    y = apply_activation(model.cfg.output_activation(), model.W_y @ z + model.c)
    delta = output_delta(model.cfg.output_likelihood, y, target)
    model.W_y -= eta * (delta @ z.T) / batch
    model.c -= eta * delta.mean(axis=1, keepdims=True)


def esn_fit_ridge(model, states, targets, reg=1e-6):
    """One-shot ridge readout fit for offline runs (identity output).

    ``states`` is (N, T) collected reservoir activity, ``targets`` (o, T).
    """
    states = np.asarray(states, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = states.shape[0]
    gram = states @ states.T + reg * np.eye(n)
    model.W_y = np.linalg.solve(gram, states @ targets.T).T
    model.c = (targets - model.W_y @ states).mean(axis=1, keepdims=True)

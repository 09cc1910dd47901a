"""Learner adapters: one step interface over every model family.

The training loop drives learners through a strict prequential cycle:

    reset(batch) -> [predict() -> observe(x_t) -> update()]* -> finish_sequence()

``predict`` returns the model's estimate of the upcoming input before it
is revealed, ``observe`` consumes the actual input (state transition,
error correction, gradient/carry bookkeeping), ``update`` applies any
pending parameter change, and ``finish_sequence`` closes sequence-scoped
bookkeeping (only BPTT acts on it).  Frozen evaluation uses the same
adapters with ``train=False``.
"""

import numpy as np

from . import ptncn
from .baselines import (
    BaselineError,
    bptt_gradients,
    elman_step,
    esn_step,
    esn_train_output,
    init_rtrl_carry,
    init_uoro_carry,
    rtrl_step,
    tbptt_gradients,
    uoro_step,
)


def _column(x):
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def sgd_apply(params, grads, eta, clip_norm=None):
    """Plain SGD on a parameter dict, optional per-tensor norm clipping."""
    for name, g in grads.items():
        if clip_norm is not None:
            norm = np.linalg.norm(g)
            if norm > clip_norm:
                g = g * (clip_norm / norm)
        params[name] = params[name] - eta * g


class RmsProp:
    """Adaptive step sizes for the gradient-path baselines.

    Keeps an exponential moving average of squared gradients per tensor and
    divides each step by its square root.
    """

    def __init__(self, eta, rho=0.9, eps=1e-8, clip_norm=None):
        self.eta = eta
        self.rho = rho
        self.eps = eps
        self.clip_norm = clip_norm
        self._mean_sq = {}

    def apply(self, params, grads):
        for name, g in grads.items():
            if self.clip_norm is not None:
                norm = np.linalg.norm(g)
                if norm > self.clip_norm:
                    g = g * (self.clip_norm / norm)
            acc = self._mean_sq.get(name)
            acc = (1.0 - self.rho) * g * g if acc is None else (
                self.rho * acc + (1.0 - self.rho) * g * g
            )
            self._mean_sq[name] = acc
            params[name] = params[name] - self.eta * g / (np.sqrt(acc) + self.eps)


class PTNCNLearner:
    """Temporal coding network learner.

    ``correction`` toggles the error-correction phase during state carry;
    switching it off is the zero-shot ablation (states pass uncorrected).
    """

    def __init__(self, model, hp=None, train=True, correction=True):
        self.model = model
        self.hp = hp or ptncn.Hyperparams()
        self.train = train
        self.correction = correction
        self.reset()

    def reset(self, batch_size=1):
        self.prev = ptncn.reset_state(self.model.cfg, batch_size)
        self.x_prev = np.zeros((self.model.cfg.input_dim, batch_size))
        self._trace = None
        self._pending = None

    def predict(self):
        self._trace = ptncn.predict_step(self.model, self.prev, self.x_prev)
        return self._trace.preds[0]

    def observe(self, x):
        x = _column(x)
        if self._trace is None:
            raise ptncn.PTNCNError("observe() called before predict()")
        if self.correction:
            corr = ptncn.correct_step(self.model, self._trace, x, self.hp)
        else:
            corr = ptncn.carry_without_correction(self._trace, x)
        if self.train:
            self._pending = ptncn.compute_updates(
                self.model, corr, self.prev, self.x_prev, self.hp
            )
        self.prev = corr
        self.x_prev = x
        self._trace = None

    def update(self):
        if self.train and self._pending is not None:
            ptncn.apply_updates(self.model, self._pending, self.hp)
            self._pending = None

    def finish_sequence(self):
        pass

    def eval_clone(self, correction=None):
        return PTNCNLearner(
            self.model, self.hp, train=False,
            correction=self.correction if correction is None else correction,
        )


class ElmanLearner:
    """Elman RNN under one of four gradient paths.

    algo: "bptt" (update at sequence end), "tbptt" (update every ``window``
    steps on that window, earlier state frozen), "rtrl" (exact per-step),
    or "uoro" (stochastic rank-one per-step; needs ``rng``).
    """

    def __init__(self, model, algo, eta=0.01, window=None, clip_norm=None,
                 rng=None, train=True, optimizer="sgd"):
        if algo not in ("bptt", "tbptt", "rtrl", "uoro"):
            raise BaselineError(f"unknown algorithm: {algo!r}")
        if algo == "tbptt" and (window is None or window < 1):
            raise BaselineError("tbptt needs a window >= 1")
        if algo == "uoro" and rng is None:
            raise BaselineError("uoro needs an rng")
        if optimizer not in ("sgd", "rmsprop"):
            raise BaselineError(f"unknown optimizer: {optimizer!r}")
        self.model = model
        self.algo = algo
        self.eta = eta
        self.window = window
        self.clip_norm = clip_norm
        self.rng = rng
        self.train = train
        self.optimizer = optimizer
        self._rmsprop = (
            RmsProp(eta, clip_norm=clip_norm) if optimizer == "rmsprop" else None
        )
        self.reset()

    def reset(self, batch_size=1):
        n, k = self.model.cfg.hidden_dim, self.model.cfg.input_dim
        if self.algo in ("rtrl", "uoro") and batch_size != 1:
            raise BaselineError(f"{self.algo} learner is single-sequence")
        self.z = np.zeros((n, batch_size))
        self.x_prev = np.zeros((k, batch_size))
        self._z_next = None
        self._pending = None
        self._seq_inputs, self._seq_targets = [], []
        self._win_inputs, self._win_targets = [], []
        self._win_start = self.z.copy()
        if self.algo == "rtrl":
            self.carry = init_rtrl_carry(self.model)
        elif self.algo == "uoro":
            self.carry = init_uoro_carry(self.model)

    def predict(self):
        state = self.carry.z if self.algo in ("rtrl", "uoro") else self.z
        self._z_next, y = elman_step(self.model, state, self.x_prev)
        return y

    def observe(self, x):
        x = _column(x)
        if self.algo == "rtrl":
            grads, self.carry = rtrl_step(self.model, self.carry, self.x_prev, x)
            self._pending = grads if self.train else None
        elif self.algo == "uoro":
            grads, self.carry = uoro_step(
                self.model, self.carry, self.x_prev, x, self.rng
            )
            self._pending = grads if self.train else None
        elif self.algo == "bptt":
            self._seq_inputs.append(self.x_prev)
            self._seq_targets.append(x)
            self.z = self._z_next
        else:  # tbptt
            self._win_inputs.append(self.x_prev)
            self._win_targets.append(x)
            self.z = self._z_next
            if len(self._win_inputs) == self.window and self.train:
                self._pending = tbptt_gradients(
                    self.model, self.window,
                    self._win_inputs, self._win_targets, z0=self._win_start,
                )
            if len(self._win_inputs) == self.window:
                self._win_inputs, self._win_targets = [], []
                self._win_start = self.z.copy()
        self.x_prev = x

    def _apply(self, grads):
        if self._rmsprop is not None:
            self._rmsprop.apply(self.model.params, grads)
        else:
            sgd_apply(self.model.params, grads, self.eta, self.clip_norm)

    def update(self):
        if self._pending is not None:
            self._apply(self._pending)
            self._pending = None

    def finish_sequence(self):
        if self.algo == "bptt" and self._seq_inputs:
            if self.train:
                grads = bptt_gradients(
                    self.model, self._seq_inputs, self._seq_targets
                )
                self._apply(grads)
            self._seq_inputs, self._seq_targets = [], []

    def eval_clone(self):
        return ElmanLearner(
            self.model, "bptt", eta=self.eta, clip_norm=self.clip_norm,
            train=False,
        )


class EsnLearner:
    """Echo state network with an online SGD readout."""

    def __init__(self, model, eta=0.05, train=True):
        self.model = model
        self.eta = eta
        self.train = train
        self.reset()

    def reset(self, batch_size=1):
        self.model.reset_state(batch_size)
        self.x_prev = np.zeros((self.model.cfg.input_dim, batch_size))
        self._z = None
        self._target = None

    def predict(self):
        self._z, y = esn_step(self.model, self.x_prev)
        return y

    def observe(self, x):
        self._target = _column(x)
        self.x_prev = self._target

    def update(self):
        if self.train and self._target is not None and self._z is not None:
            esn_train_output(self.model, self._z, self._target, self.eta)
            self._target = None

    def finish_sequence(self):
        pass

    def eval_clone(self):
        return EsnLearner(self.model, eta=self.eta, train=False)


class GoldCosineLearner:
    """Oracle that already knows the clean cosine signal (no learning)."""

    def __init__(self, dt):
        self.dt = dt
        self.k = 0

    def reset(self, batch_size=1):
        self.k = 0

    def predict(self):
        return np.array([[np.cos(self.k * self.dt)]])

    def observe(self, x):
        self.k += 1

    def update(self):
        pass

    def finish_sequence(self):
        pass

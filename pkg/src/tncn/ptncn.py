"""Parallel temporal coding network with locally aligned updates.

The model is a stack of m loosely coupled recurrent layers.  At each step
every layer computes its new state from *previous-step* corrected states
only (so layers can run in parallel), emits a prediction of the region
below it (layer 1 predicts the data), then corrects its own state from the
resulting prediction errors.  Weight changes are plain outer products of
local error vectors with presynaptic activity; no derivative of any state
activation is ever taken, so non-differentiable activations (signum) work.

Column convention: state vectors are (n, B) arrays, batches column-wise.
Per layer l (1-based) the parameters are

    W{l}: (n_{l-1}, n_l)  prediction of region l-1 from layer l (n_0 = k)
    M{l}: (n_l, n_{l-1})  bottom-up input weights
    V{l}: (n_l, n_l)      recurrent weights
    U{l}: (n_l, n_{l+1})  top-down weights (absent for the top layer)
    E{l}: (n_l, n_{l-1})  error feedback weights
    b{l}: (n_l, 1)        state bias        (optional)
    c{l}: (n_{l-1}, 1)    prediction bias   (optional)
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import (
    ActivationKind,
    apply_activation,
    assert_finite,
    clip_update_norm,
    gaussian_init,
    project_columns_l2,
)


class PTNCNError(ValueError):
    """Raised on configuration or protocol violations."""


LIKELIHOODS = ("gaussian", "bernoulli", "categorical")


def _column(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x.reshape(-1, 1)
    if x.ndim != 2:
        raise PTNCNError(f"expected vector or column batch, got shape {x.shape}")
    return x


@dataclass
class PTNCNConfig:
    """Architecture description: dimensions, activations, output likelihood."""

    input_dim: int
    layer_dims: list
    state_activation: object = "tanh"       # one kind, or one per layer
    output_activation: str = "identity"     # data prediction head
    hidden_head_activation: object = "identity"  # heads predicting states
    output_likelihood: str = "gaussian"
    use_bias: bool = True

    @property
    def num_layers(self):
        return len(self.layer_dims)

    def state_activations(self):
        kinds = self.state_activation
        if isinstance(kinds, (str, ActivationKind)):
            kinds = [kinds] * self.num_layers
        return [ActivationKind(k) for k in kinds]

    def head_activations(self):
        """Activation of the head predicting region i, i = 0 .. m-1."""
        hidden = self.hidden_head_activation
        if isinstance(hidden, (str, ActivationKind)):
            hidden = [hidden] * max(self.num_layers - 1, 0)
        return [ActivationKind(self.output_activation)] + [
            ActivationKind(k) for k in hidden
        ]

    def validate(self):
        if self.num_layers < 1:
            raise PTNCNError("need at least one hidden layer")
        if self.input_dim < 1 or any(n < 1 for n in self.layer_dims):
            raise PTNCNError("all dimensions must be >= 1")
        if self.output_likelihood not in LIKELIHOODS:
            raise PTNCNError(f"unknown likelihood: {self.output_likelihood}")
        if (
            self.output_likelihood == "categorical"
            and ActivationKind(self.output_activation) is not ActivationKind.SOFTMAX
        ):
            raise PTNCNError("categorical likelihood requires a softmax data head")
        self.state_activations()
        self.head_activations()
        return self


@dataclass
class Hyperparams:
    """Learning knobs; defaults follow the reference training setup."""

    beta: float = 0.15            # bottom-up correction strength
    gamma: float = 0.01           # top-down modulation strength
    lambda_sparse: float = 0.001  # sparsity coefficient
    xi: float = 0.4               # Hebbian down-weighting factor
    eta: float = 0.035            # SGD step size
    max_norm_radius: float = 30.0
    sparsity_sign: str = "as_written"   # or "descent"
    update_inputs: str = "corrected"    # or "literal"
    hebbian_enabled: bool = True
    always_unit_norm: bool = False
    # The printed temporal-difference rule, stepped by gradient-descent
    # minus, contracts the error weights toward the null space of the error
    # covariance, which extinguishes the correction pathway on long runs.
    # "anti" applies the same temporal difference with the opposite sign,
    # keeping the feedback loop alive.
    error_update_sign: str = "as_written"  # or "anti"

    def __post_init__(self):
        for name in ("beta", "gamma", "lambda_sparse", "xi", "eta"):
            if getattr(self, name) < 0:
                raise PTNCNError(f"{name} must be >= 0")
        if self.max_norm_radius <= 0:
            raise PTNCNError("max_norm_radius must be > 0")
        if self.sparsity_sign not in ("as_written", "descent"):
            raise PTNCNError(f"unknown sparsity_sign: {self.sparsity_sign}")
        if self.update_inputs not in ("corrected", "literal"):
            raise PTNCNError(f"unknown update_inputs: {self.update_inputs}")
        if self.error_update_sign not in ("as_written", "anti"):
            raise PTNCNError(f"unknown error_update_sign: {self.error_update_sign}")


@dataclass
class PTNCNModel:
    cfg: PTNCNConfig
    params: dict = field(default_factory=dict)

    def region_dim(self, i):
        """Width of region i: the input for i=0, else hidden layer i."""
        return self.cfg.input_dim if i == 0 else self.cfg.layer_dims[i - 1]


@dataclass
class StepTrace:
    """All per-layer quantities of one time step.

    Lists are indexed by layer-1-based-minus-one: entry i belongs to hidden
    layer i+1, except ``preds``/``errs`` whose entry i refers to target
    region i (the data for i=0).  ``x`` is the observed input, set during
    correction.  Correction fields are None until :func:`correct_step` runs.
    """

    x: object
    a: list
    z: list
    preds: list
    errs: object = None
    y: object = None
    e_z: object = None

    @property
    def corrected(self):
        return self.errs is not None

    @property
    def batch_size(self):
        return self.z[0].shape[1]


def build_model(cfg, variance, rng):
    """Initialize all weights i.i.d. normal(0, variance); biases zero.

    Matrices are drawn in a fixed order (per layer: W, M, V, U, E) so a
    given rng state always yields a bit-identical model.
    """
    cfg.validate()
    dims = [cfg.input_dim] + list(cfg.layer_dims)
    m = cfg.num_layers
    params = {}
    for l in range(1, m + 1):
        n_below, n = dims[l - 1], dims[l]
        params[f"W{l}"] = gaussian_init(n_below, n, variance, rng)
        params[f"M{l}"] = gaussian_init(n, n_below, variance, rng)
        params[f"V{l}"] = gaussian_init(n, n, variance, rng)
        if l < m:
            params[f"U{l}"] = gaussian_init(n, dims[l + 1], variance, rng)
        params[f"E{l}"] = gaussian_init(n, n_below, variance, rng)
        if cfg.use_bias:
            params[f"b{l}"] = np.zeros((n, 1))
            params[f"c{l}"] = np.zeros((n_below, 1))
    return PTNCNModel(cfg=cfg, params=params)


def reset_state(cfg, batch_size=1):
    """All-zero, already-corrected trace (the x_0 = 0 convention)."""
    zeros = lambda n: np.zeros((n, batch_size))
    m = cfg.num_layers
    dims = cfg.layer_dims
    return StepTrace(
        x=zeros(cfg.input_dim),
        a=[zeros(dims[i]) for i in range(m)],
        z=[zeros(dims[i]) for i in range(m)],
        preds=[zeros(cfg.input_dim)] + [zeros(dims[i]) for i in range(m - 1)],
        errs=[zeros(cfg.input_dim)] + [zeros(dims[i]) for i in range(m - 1)],
        y=[zeros(dims[i]) for i in range(m)],
        e_z=[zeros(dims[i]) for i in range(m)],
    )


def predict_step(model, prev, x_prev=None):
    """Advance every layer one step and emit its prediction.

    Each layer reads only t-1 quantities (previous corrected states and the
    previous input), so the per-layer computations are order independent.
    """
    if not prev.corrected:
        raise PTNCNError("previous trace must be corrected (or a reset trace)")
    cfg = model.cfg
    m = cfg.num_layers
    x_prev = _column(prev.x if x_prev is None else x_prev)
    if x_prev.shape[0] != cfg.input_dim:
        raise PTNCNError(
            f"x_prev has dim {x_prev.shape[0]}, expected {cfg.input_dim}"
        )
    p = model.params
    state_acts = cfg.state_activations()
    head_acts = cfg.head_activations()

    a, z, preds = [], [], []
    for i in range(m):  # layer l = i + 1
        l = i + 1
        below = x_prev if i == 0 else prev.y[i - 1]
        pre = p[f"V{l}"] @ prev.y[i] + p[f"M{l}"] @ below
        if l < m:
            pre = pre + p[f"U{l}"] @ prev.y[i + 1]
        if cfg.use_bias:
            pre = pre + p[f"b{l}"]
        a.append(pre)
        z.append(apply_activation(state_acts[i], pre))
    for i in range(m):
        l = i + 1
        head = p[f"W{l}"] @ z[i]
        if cfg.use_bias:
            head = head + p[f"c{l}"]
        preds.append(apply_activation(head_acts[i], head))
    return StepTrace(x=None, a=a, z=z, preds=preds)


def correct_step(model, trace, x_t, hp):
    """Observe x_t, form error units, and correct every layer's state.

    e_{i} = -(region_i - prediction_of_region_i); the corrected state is
    the activation of the nudged pre-activation.  The lambda term follows
    the printed rule by default (+lambda*sign inside the state), or moves
    the pre-activation toward zero under ``sparsity_sign="descent"``.
    """
    if trace.corrected:
        raise PTNCNError("trace is already corrected")
    cfg = model.cfg
    m = cfg.num_layers
    x = _column(x_t)
    if x.shape[0] != cfg.input_dim:
        raise PTNCNError(f"x_t has dim {x.shape[0]}, expected {cfg.input_dim}")
    p = model.params
    state_acts = cfg.state_activations()

    errs = [-(x - trace.preds[0])]
    for i in range(1, m):  # region i is hidden layer i, list index i-1
        errs.append(-(trace.z[i - 1] - trace.preds[i]))

    y, e_z = [], []
    for i in range(m):
        l = i + 1
        nudge = hp.beta * (p[f"E{l}"] @ errs[i])
        if l < m:
            nudge = nudge - hp.gamma * errs[i + 1]
        if hp.lambda_sparse > 0.0:
            s = hp.lambda_sparse * np.sign(trace.z[i])
            nudge = (nudge + s) if hp.sparsity_sign == "descent" else (nudge - s)
        yi = apply_activation(state_acts[i], trace.a[i] - nudge)
        y.append(yi)
        e_z.append(-(yi - trace.z[i]))
    return replace(trace, x=x, errs=errs, y=y, e_z=e_z)


def carry_without_correction(trace, x_t):
    """Mark a predicted trace as carried with correction disabled.

    States pass through unchanged (y = z, state errors zero); used by the
    zero-shot ablation that switches the error-correction phase off.
    """
    if trace.corrected:
        raise PTNCNError("trace is already corrected")
    return replace(
        trace,
        x=_column(x_t),
        errs=[np.zeros_like(pr) for pr in trace.preds],
        y=[zi.copy() for zi in trace.z],
        e_z=[np.zeros_like(zi) for zi in trace.z],
    )


def _hebbian(post_t, pre_prev):
    outer = -(post_t @ pre_prev.T)
    norm = np.linalg.norm(outer)
    return outer / norm if norm > 0 else outer


def compute_updates(model, trace, prev, x_prev=None, hp=None):
    """Local outer-product updates for one step, averaged over the batch.

    W updates pair region errors with the emitting layer's state; M/V/U
    updates pair state errors with t-1 presynaptic activity (corrected
    states by default, printed-form literal states via ``update_inputs``);
    E updates use the temporal difference of state errors.  The optional
    Hebbian component pairs time-t activity with t-1 presynaptic input and
    is normalized to unit Frobenius norm before the xi weighting.
    """
    hp = hp or Hyperparams()
    if not (trace.corrected and prev.corrected):
        raise PTNCNError("both traces must be corrected")
    cfg = model.cfg
    m = cfg.num_layers
    x_prev = _column(prev.x if x_prev is None else x_prev)
    batch = trace.batch_size
    use_corrected = hp.update_inputs == "corrected"

    def prev_state(i):
        return prev.y[i] if use_corrected else prev.z[i]

    def prev_input(i):  # presynaptic input of layer i+1 at t-1
        return x_prev if i == 0 else prev_state(i - 1)

    def region(i):  # actual activity of region i at time t
        return trace.x if i == 0 else trace.z[i - 1]

    upd = {}
    for i in range(m):
        l = i + 1
        upd[f"W{l}"] = (trace.errs[i] @ trace.z[i].T) / batch
        upd[f"M{l}"] = (trace.e_z[i] @ prev_input(i).T) / batch
        upd[f"V{l}"] = (trace.e_z[i] @ prev_state(i).T) / batch
        if l < m:
            upd[f"U{l}"] = (trace.e_z[i] @ prev_state(i + 1).T) / batch
        delta_e = ((trace.e_z[i] - prev.e_z[i]) @ trace.errs[i].T) / batch
        upd[f"E{l}"] = delta_e if hp.error_update_sign == "as_written" else -delta_e
        if cfg.use_bias:
            upd[f"b{l}"] = trace.e_z[i].mean(axis=1, keepdims=True)
            upd[f"c{l}"] = trace.errs[i].mean(axis=1, keepdims=True)
        if hp.hebbian_enabled and hp.xi > 0.0:
            upd[f"W{l}"] = upd[f"W{l}"] + hp.xi * _hebbian(region(i), prev_state(i))
            upd[f"M{l}"] = upd[f"M{l}"] + hp.xi * _hebbian(trace.z[i], prev_input(i))
            upd[f"V{l}"] = upd[f"V{l}"] + hp.xi * _hebbian(trace.z[i], prev_state(i))
            if l < m:
                upd[f"U{l}"] = upd[f"U{l}"] + hp.xi * _hebbian(
                    trace.z[i], prev_state(i + 1)
                )
    return upd


def apply_updates(model, updates, hp):
    """SGD with per-update norm clipping, then max-norm column projection.

    Error feedback weights evolve freely (no projection); everything else
    is projected onto the L2 ball of radius ``max_norm_radius``.
    """
    for name, delta in updates.items():
        theta = model.params[name]
        if theta.shape != delta.shape:
            raise PTNCNError(f"update for {name} has shape {delta.shape}, "
                             f"expected {theta.shape}")
        stepped = theta - hp.eta * clip_update_norm(delta, always=hp.always_unit_norm)
        if not name.startswith("E"):
            stepped = project_columns_l2(stepped, hp.max_norm_radius)
        model.params[name] = assert_finite(stepped, name)


def compute_total_discrepancy(trace, hp, likelihood="gaussian"):
    """Sum of all local objectives, averaged over batch columns.

    Per layer: beta/2 * |region error|^2 + lambda * |state|_1; top-down
    gamma/2 terms for every non-top layer; plus 1/2 |y - z|^2 alignment
    terms.  A categorical output swaps the data term for cross entropy.
    """
    if not trace.corrected:
        raise PTNCNError("trace must be corrected")
    m = len(trace.z)
    batch = trace.batch_size
    total = 0.0
    if likelihood == "categorical":
        probs = np.clip(trace.preds[0], 1e-12, 1.0)
        total += hp.beta * float(-(trace.x * np.log(probs)).sum()) / batch
    else:
        total += 0.5 * hp.beta * float((trace.errs[0] ** 2).sum()) / batch
    for i in range(1, m):
        total += 0.5 * hp.beta * float((trace.errs[i] ** 2).sum()) / batch
        total += 0.5 * hp.gamma * float((trace.errs[i] ** 2).sum()) / batch
    for i in range(m):
        total += hp.lambda_sparse * float(np.abs(trace.z[i]).sum()) / batch
        total += 0.5 * float((trace.e_z[i] ** 2).sum()) / batch
    return total

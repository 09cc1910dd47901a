"""Baseline recurrent learners sharing one Elman model: BPTT/TBPTT, exact
forward-mode RTRL, the rank-one UORO estimator, and an echo state network."""

from .elman import (  # noqa: F401
    BaselineError,
    ElmanConfig,
    ElmanModel,
    activation_derivative,
    bptt_gradients,
    build_elman,
    elman_step,
    output_delta,
    sequence_loss,
    step_loss,
    tbptt_gradients,
)
from .esn import EsnConfig, EsnModel, build_esn, esn_fit_ridge, esn_step, esn_train_output  # noqa: F401
from .rtrl import RtrlCarry, init_rtrl_carry, rtrl_step  # noqa: F401
from .uoro import UoroCarry, init_uoro_carry, uoro_step  # noqa: F401

"""Distributed multiple-access control with virtual-packet contention feedback.

Slotted-time simulator and analytic toolkit for networks of saturated users
adapting their transmission probabilities by stochastic approximation toward
a designed equilibrium, under a general link-layer channel model.
"""

from .channel import (
    ChannelModel,
    ChannelParams,
    Collision,
    Parametric,
    SlotOutcome,
    ThresholdFading,
    derive_params,
    sample_slot,
)
from .mac import (
    ControllerState,
    FeedbackMode,
    StepSchedule,
    apply_update,
    target_one_step,
    target_receiver,
    target_two_step,
)
from .sim import (
    EstimatorConfig,
    NetworkEvent,
    Scenario,
    SimTrace,
    SlotRecord,
    SweepResult,
    measure_stationary_qv,
    run,
    run_many,
)
from .theory import (
    MacDesign,
    UtilitySpec,
    build_design,
    compute_gamma_ev,
    compute_j_ev,
    compute_x_star,
    d_star,
    hajek_pa,
    idle_target_p,
    invert_q_star,
    invert_q_v_star,
    optimal_p,
    q_star,
    q_v_identical,
    q_v_identical_derivative,
    q_v_star,
    utility_asymptotic,
    utility_finite,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelModel",
    "ChannelParams",
    "Collision",
    "ControllerState",
    "EstimatorConfig",
    "FeedbackMode",
    "MacDesign",
    "NetworkEvent",
    "Parametric",
    "Scenario",
    "SimTrace",
    "SlotOutcome",
    "SlotRecord",
    "StepSchedule",
    "SweepResult",
    "ThresholdFading",
    "UtilitySpec",
    "apply_update",
    "build_design",
    "compute_gamma_ev",
    "compute_j_ev",
    "compute_x_star",
    "d_star",
    "derive_params",
    "hajek_pa",
    "idle_target_p",
    "invert_q_star",
    "invert_q_v_star",
    "measure_stationary_qv",
    "optimal_p",
    "q_star",
    "q_v_identical",
    "q_v_identical_derivative",
    "q_v_star",
    "run",
    "run_many",
    "sample_slot",
    "target_one_step",
    "target_receiver",
    "target_two_step",
    "utility_asymptotic",
    "utility_finite",
]

"""Fluid models: single-hop and multihop integrators, drift certificates and
the station-level reformulation."""

from .common import FluidTrajectory, MeanScheduleTracker
from .entropy import split_identity_check, pinsker_slack, relative_entropy, square_deviation_slack
from .multihop import (
    EntropyMonitor,
    certify_H_drift,
    entropy_split,
    grad_H_check,
    integrate_multihop,
    lyapunov_H,
)
from .reduction import (
    JacksonNetwork,
    ReductionReport,
    expanded_schedules,
    integrate_jackson,
    kelly_to_jackson,
    reduction_equivalence,
)
from .single import DriftCertificateL, certify_L_drift, integrate_single_hop, lyapunov_L

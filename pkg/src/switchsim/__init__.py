"""Scheduling policies, simulation and fluid analysis for switched queueing networks."""

from .model import (
    ArrivalProcess,
    MultiHopState,
    Network,
    NetworkValidationError,
    QueueState,
    ScheduleSet,
    headroom_lp,
    load_headroom,
    overload_rate,
    truncate_schedules,
    validate_network,
)
from .policies import (
    ServiceAction,
    alpha_g_policy,
    backpressure,
    make_policy,
    maxweight_alpha,
    proportional_scheduler,
)
from .presets import iq_switch, make_preset, simplex2, tandem2, tree
from .program import Decomposition, MeanSchedule, Objective, caratheodory_decompose, sample_schedule, solve_program
from .report import queue_count_report, summarize
from .sim import StabilityDiagnostic, Trajectory, run_experiment, stability_diagnostic

__version__ = "0.1.0"

"""Rare-event analysis of inflow-driven scramjet unstart.

A quasi-1D compressible-flow model of an isolator/combustor/expansion duct
with pulsed heat release, the discrete Freidlin-Wentzell rate function of
its stochastic inflow, a minimum-action search for the most probable
unstart-causing inflow, and basic/importance-sampling Monte Carlo
estimators of the unstart probability.
"""

from .engine import EngineGeometry, FreeStream, FuelSchedule, GasModel
from .ldp import (
    ActionResult,
    EventSpec,
    InflowPath,
    MinimizeOptions,
    NoiseModel,
    asymptotic_probability,
    is_unstart,
    minimize_action,
    rate_discrete,
    subsonic_bound,
)
from .sampling import (
    EstimatorReport,
    SampleBatchSpec,
    SubsonicInflowEvent,
    UnstartEvent,
    estimate_is,
    estimate_mc,
    likelihood_ratio,
    oracle_subsonic_event,
    sample_path_p,
    sample_path_q,
)
from .solver import (
    ConservedField,
    Discretization,
    ScramjetModel,
    TrajectoryRecord,
    adaptive_dt,
    llf_flux,
    mach,
    pressure,
    shock_location,
    simulate,
    simulate_paths,
    spin_up,
    step,
    thrust,
)

__version__ = "0.1.0"

__all__ = [
    "GasModel", "EngineGeometry", "FuelSchedule", "FreeStream",
    "Discretization", "ScramjetModel", "ConservedField", "TrajectoryRecord",
    "pressure", "mach", "llf_flux", "adaptive_dt", "step", "spin_up",
    "simulate", "simulate_paths", "shock_location", "thrust",
    "InflowPath", "NoiseModel", "EventSpec", "ActionResult", "MinimizeOptions",
    "rate_discrete", "asymptotic_probability", "subsonic_bound", "is_unstart",
    "minimize_action",
    "SampleBatchSpec", "EstimatorReport", "UnstartEvent", "SubsonicInflowEvent",
    "sample_path_p", "sample_path_q", "likelihood_ratio",
    "estimate_mc", "estimate_is", "oracle_subsonic_event",
    "__version__",
]

"""Dynamic origin-destination estimation from entry-only smart-card counts by entropy maximisation."""

from .core import (
    Scenario,
    StationSet,
    TimeGrid,
    daily_totals,
    exclude_stations,
    load_distances,
    load_entries,
    load_scenario,
    read_od,
    write_distances,
    write_entries,
    write_od,
)
from .errors import (
    ConvergenceError,
    DuplicateKeyError,
    InfeasibleError,
    MissingPairError,
    NumericalError,
    ODError,
    ParseError,
    UnknownStationError,
    ValidationError,
)
from .estimators import (
    CalibrationResult,
    CalibrationTarget,
    UtilityParams,
    balance_ad,
    calibrate_ad,
    choice_matrix,
    destination_probabilities,
    estimate,
    estimate_ad,
    estimate_bm,
    estimate_sa_balanced,
    estimate_sa_closed,
    person_km,
)
from .kernels import BACKEND
from .oracle import ConstraintSet, ResidualReport, entropy, reference_solve, residuals
from .stats import TravelStats, compare_report, compute_stats, exit_profile_series

__version__ = "0.1.0"

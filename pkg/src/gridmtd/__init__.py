"""Moving-target defense against stealthy false data injection on DC grid models.

Submodules:

* :mod:`gridmtd.grid`        case data, topology and load traces
* :mod:`gridmtd.subspace`    principal angles and column-space tests
* :mod:`gridmtd.estimation`  WLS state estimation and residual-based bad-data detection
* :mod:`gridmtd.attack`      undetectable attack construction
* :mod:`gridmtd.opf`         DC OPF with D-FACTS reactances, with and without an angle constraint
* :mod:`gridmtd.evaluation`  Monte Carlo effectiveness, cost trade-off and daily studies
* :mod:`gridmtd.cli`         command-line interface
"""

__version__ = "0.1.0"

from .attack import AttackVector, generate_attack, generate_attacks, is_undetectable
from .estimation import BadDataDetector, MeasurementModel, WLSStateEstimator, build_measurement_matrix
from .evaluation import EvalConfig, EvalReport, daily_simulation, effectiveness, gamma_sweep
from .grid import GridCase, LoadTrace, load_case, parse_case, read_case
from .opf import InfeasibleError, baseline_opf, mtd_cost, mtd_opf
from .subspace import principal_angles, smallest_principal_angle, subspace_angle

__all__ = [
    "AttackVector", "BadDataDetector", "EvalConfig", "EvalReport", "GridCase", "InfeasibleError",
    "LoadTrace", "MeasurementModel", "WLSStateEstimator", "baseline_opf", "build_measurement_matrix",
    "daily_simulation", "effectiveness", "gamma_sweep", "generate_attack", "generate_attacks",
    "is_undetectable", "load_case", "mtd_cost", "mtd_opf", "parse_case", "principal_angles",
    "read_case", "smallest_principal_angle", "subspace_angle",
]

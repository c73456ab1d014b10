"""Simulation and analysis toolkit for feedback stabilization of N-level
angular momentum systems under continuous measurement, with an estimated
state (quantum filter) run on mismatched parameters."""

from ._version import __version__
from .spin import SpinBasis, build_basis, projector
from .states import (
    CoupledState,
    SystemParams,
    bures_distance,
    coupled_distance,
    fidelity,
    functionals,
    random_density,
    validate,
)
from .dynamics import (
    diffusion_G,
    drift_L,
    filter_correction,
    observation_increment,
    stratonovich_drift,
)
from .feedback import (
    ControllerSpec,
    check_condition_u,
    check_hypotheses,
    check_parameter_conditions,
    evaluate_control,
    exponent_bounds,
    smooth_cutoff,
)
from .integrator import (
    IntegratorConfig,
    SimulationBlowupError,
    TrajectoryRecord,
    renormalize,
    run_deterministic,
    run_trajectory,
    step_coupled,
)
from .analysis import (
    LyapunovId,
    exit_time_probe,
    fit_exponent,
    generator_oracle,
    generator_population,
    hitting_time_probe,
    lyapunov_bounds_check,
    lyapunov_generator,
    lyapunov_value,
)
from .harness import ExperimentConfig, preset_config, run_experiment
from .engine import DEFAULT_ENGINE, HAVE_COMPILED, available_engines

__all__ = [
    "__version__",
    "SpinBasis",
    "build_basis",
    "projector",
    "CoupledState",
    "SystemParams",
    "bures_distance",
    "coupled_distance",
    "fidelity",
    "functionals",
    "random_density",
    "validate",
    "diffusion_G",
    "drift_L",
    "filter_correction",
    "observation_increment",
    "stratonovich_drift",
    "ControllerSpec",
    "check_condition_u",
    "check_hypotheses",
    "check_parameter_conditions",
    "evaluate_control",
    "exponent_bounds",
    "smooth_cutoff",
    "IntegratorConfig",
    "SimulationBlowupError",
    "TrajectoryRecord",
    "renormalize",
    "run_deterministic",
    "run_trajectory",
    "step_coupled",
    "LyapunovId",
    "exit_time_probe",
    "fit_exponent",
    "generator_oracle",
    "generator_population",
    "hitting_time_probe",
    "lyapunov_bounds_check",
    "lyapunov_generator",
    "lyapunov_value",
    "ExperimentConfig",
    "preset_config",
    "run_experiment",
    "DEFAULT_ENGINE",
    "HAVE_COMPILED",
    "available_engines",
]

"""Event-triggered LQG: analytic rate/cost formulas with Monte Carlo validation.

A linear plant is observed by a sensor-side Kalman filter; a stochastic
trigger with a hard timeout decides when the filtered estimate crosses the
network to the controller. The package computes the resulting transmission
rate and long-run quadratic cost in closed form and cross-checks both with a
seeded closed-loop simulator.
"""

from .errors import (ConfigError, ConvergenceError, DefinitenessError,
                     DivergenceError, EtlqgError, ModelError, NumericalError,
                     ValidationFailure)
from .model import (SchedulerParams, SystemModel, ValidationCheck,
                    ValidationReport, controllability_rank, observability_rank,
                    require_valid, validate_model)
from .estimation import (FilterState, SteadyStateFilter, eta_covariance,
                         initial_filter_state, kf_predict, kf_steady_state,
                         kf_update)
from .scheduling import (SchedulerState, advance_tau, initial_scheduler_state,
                         trigger_decision)
from .analysis import (ConditionalErrorCov, CumulativeErrorCov, MarkovAnalysis,
                       analysis_record, communication_rate, conditional_error_cov,
                       cumulative_cov, nontrigger_probability,
                       stationary_distribution, transition_matrix)
from .control import (ControlSynthesis, CostBreakdown, TradeoffPoint,
                      control_action, control_steady_state, cost_tradeoff_curve,
                      finite_horizon_cost, infinite_horizon_cost,
                      riccati_backward)
from .simulation import (ExperimentResult, SimConfig, SimulationTrace,
                         aggregate_runs, gaussian_draw, run_closed_loop,
                         run_experiment)
from .config import (ExperimentConfig, config_to_dict, default_config_path,
                     load_config)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConvergenceError", "DefinitenessError", "DivergenceError",
    "EtlqgError", "ModelError", "NumericalError", "ValidationFailure",
    "SchedulerParams", "SystemModel", "ValidationCheck", "ValidationReport",
    "controllability_rank", "observability_rank", "require_valid",
    "validate_model",
    "FilterState", "SteadyStateFilter", "eta_covariance",
    "initial_filter_state", "kf_predict", "kf_steady_state", "kf_update",
    "SchedulerState", "advance_tau", "initial_scheduler_state",
    "trigger_decision",
    "ConditionalErrorCov", "CumulativeErrorCov", "MarkovAnalysis",
    "analysis_record", "communication_rate", "conditional_error_cov",
    "cumulative_cov", "nontrigger_probability", "stationary_distribution",
    "transition_matrix",
    "ControlSynthesis", "CostBreakdown", "TradeoffPoint", "control_action",
    "control_steady_state", "cost_tradeoff_curve", "finite_horizon_cost",
    "infinite_horizon_cost", "riccati_backward",
    "ExperimentResult", "SimConfig", "SimulationTrace", "aggregate_runs",
    "gaussian_draw", "run_closed_loop", "run_experiment",
    "ExperimentConfig", "config_to_dict", "default_config_path", "load_config",
    "__version__",
]

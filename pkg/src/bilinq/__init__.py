"""Model-free Q-learning control of discrete-time bilinear systems."""
from .config import ExperimentConfig, config_from_dict, example_registry, load_config
from .core import (
    BilinearSystem,
    CostSpec,
    LiftedSample,
    PlantOracle,
    SystemOracle,
    lift,
    lift_selector,
    lifted_dim,
    lti_matrix,
    ltv_matrix,
    stage_cost,
    step,
)
from .data import DataMatrices, collect
from .errors import (
    BilinqError,
    ConfigError,
    DegenerateDataError,
    FrozenDataError,
    InvalidArgumentError,
    NonConvergenceError,
    NotPersistentlyExcitingError,
    NotStabilizableError,
    NumericalError,
    SecondOrderConditionError,
)
from .excitation import SignalKind, SignalSpec, count_independent, generate, is_pe, is_sufficiently_rich
from .policy import CostateMatrix, IterationConfig, SolveReport, oracle_riccati, solve_frozen
from .runtime import RunLog, run_model_based, run_online

__version__ = "0.1.0"

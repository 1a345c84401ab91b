"""al-lab: a pool-based active learning laboratory.

The lab trains a small from-scratch MLP, tracks how its predictions on
the unlabeled pool move across training epochs, and uses the resulting
label-dispersion score (plus margin, BALD, k-center greedy, random, and
a ground-truth oracle baseline) to decide which samples to label next.
Experiments run from the CLI with a simulated oracle or interactively
through the HTTP labeling service.
"""

from .acquisition import (
    STRATEGIES,
    AcquisitionContext,
    SelectionResult,
    bald_scores,
    dispersion_select,
    kcenter_greedy,
    margin_scores,
    oracle_select,
    random_select,
    select,
    strategy_scores,
)
from .data import Dataset, OracleToken, gen_blobs, load_csv, normalize, save_csv
from .dynamics import (
    DispersionScore,
    PredictionHistory,
    dispersion_scores,
    modal_class,
)
from .engine import (
    ALConfig,
    CycleReport,
    PoolState,
    RunRecorder,
    SimulatedOracle,
    aggregate_reports,
    budget_count,
    derive_seed,
    informativeness_analysis,
    init_pool,
    initial_model_scores,
    run_experiment,
    run_seed,
)
from .exceptions import (
    ActiveLearningError,
    ConfigurationError,
    ContractViolationError,
    CsvFormatError,
    CycleAbortedError,
    EmptyHistoryError,
    TrainingDivergedError,
)
from .learner import MlpClassifier, load_model, save_model
from .nn import cross_entropy, softmax

__version__ = "0.1.0"

__all__ = [
    "ALConfig",
    "AcquisitionContext",
    "ActiveLearningError",
    "ConfigurationError",
    "ContractViolationError",
    "CsvFormatError",
    "CycleAbortedError",
    "CycleReport",
    "Dataset",
    "DispersionScore",
    "EmptyHistoryError",
    "MlpClassifier",
    "OracleToken",
    "PoolState",
    "PredictionHistory",
    "RunRecorder",
    "STRATEGIES",
    "SelectionResult",
    "SimulatedOracle",
    "TrainingDivergedError",
    "aggregate_reports",
    "bald_scores",
    "budget_count",
    "cross_entropy",
    "derive_seed",
    "dispersion_scores",
    "dispersion_select",
    "gen_blobs",
    "informativeness_analysis",
    "init_pool",
    "initial_model_scores",
    "kcenter_greedy",
    "load_csv",
    "load_model",
    "margin_scores",
    "modal_class",
    "normalize",
    "oracle_select",
    "random_select",
    "run_experiment",
    "run_seed",
    "save_csv",
    "save_model",
    "select",
    "softmax",
    "strategy_scores",
]

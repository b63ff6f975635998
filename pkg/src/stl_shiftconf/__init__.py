"""Signal temporal logic classifiers learned under covariate shift, with
robustness-based (weighted) conformal calibration."""
from .conformal import (
    CalibrationResult,
    Mode,
    calibrate,
    evaluate,
    prediction_set,
    score,
    standard_threshold,
    weighted_threshold,
)
from .data import LabeledDataset, LabeledSample, Role, Trajectory, load_csv, load_dataset, save_csv
from .divergence import EmpiricalRobustnessDist, JrdConfig, jrd, quadratic_entropy
from .learning import (
    LearnableFormula,
    TrainConfig,
    TrainReport,
    logistic_loss,
    nominal_loss,
    refine,
    select_skeleton,
    shift_aware_loss,
    train_nominal,
)
from .scenarios import ShiftScenario, generate_scenario
from .stl import classify, format_formula, parse, robustness, smooth_robustness
from .weights import WeightConfig, WeightVector, ess, estimate_weights

__version__ = "0.1.0"

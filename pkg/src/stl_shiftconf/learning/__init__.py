from .learnable import LearnableFormula, standardization
from .objective import (
    Objective,
    gradient,
    logistic_loss,
    logistic_loss_grad,
    nominal_loss,
    resolve_sigma,
    shift_aware_loss,
)
from .train import (
    SKELETON_FAMILY,
    Adam,
    RefineResult,
    TrainConfig,
    TrainReport,
    make_learnable,
    jrd_bound_terms,
    refine,
    select_skeleton,
    train_nominal,
)

__all__ = [
    "LearnableFormula", "standardization", "Objective", "gradient", "logistic_loss",
    "logistic_loss_grad", "nominal_loss", "resolve_sigma", "shift_aware_loss",
    "SKELETON_FAMILY", "Adam", "RefineResult", "TrainConfig", "TrainReport", "make_learnable",
    "jrd_bound_terms", "refine", "select_skeleton", "train_nominal",
]

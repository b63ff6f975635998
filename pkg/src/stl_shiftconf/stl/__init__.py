from .formula import (
    Always,
    And,
    Atom,
    Eventually,
    Formula,
    Not,
    Or,
    Predicate,
    aggregation_depth,
    atoms,
    dimension,
    horizon,
    max_arity,
)
from .semantics import (
    SmoothConfig,
    classify,
    classify_batch,
    classify_values,
    robustness,
    robustness_batch,
    robustness_signal,
    smooth_robustness,
    smooth_robustness_batch,
    softmax,
    softmin,
)
from .syntax import format_formula, parse, print_formula

__all__ = [
    "Always", "And", "Atom", "Eventually", "Formula", "Not", "Or", "Predicate",
    "SmoothConfig", "aggregation_depth", "atoms", "classify", "classify_batch",
    "classify_values", "dimension", "format_formula", "horizon", "max_arity", "parse",
    "print_formula", "robustness", "robustness_batch", "robustness_signal",
    "smooth_robustness", "smooth_robustness_batch", "softmax", "softmin",
]

"""Eccentric gradient alignment for multi-task learning, with a toy
three-task cardiac benchmark."""
from .balance import (
    EGA,
    BalancedGradient,
    EccentricVector,
    EqualWeight,
    LossHistory,
    OrthoOnly,
    apply_update,
    ega_step,
    eccentric_vector,
    equal_weight_step,
    learning_rate_ratio,
    make_strategy,
    ortho_only_step,
)
from .errors import (
    DegenerateGradientError,
    DegenerateHistoryError,
    InvalidConfigError,
    InvalidInputError,
    NumericalFailureError,
    UndefinedMetricError,
)
from .linalg import gram, jacobi_eigh, project_align

__version__ = "0.1.0"

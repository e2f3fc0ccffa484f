"""Chernoff and Trotter product formulas on finite-dimensional operator surrogates."""
from .chernoff import ChernoffFamily, GeneratorSpec, adjoint_family, derivative_at_zero, evaluate_family
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    ExtrapolationError,
    FitError,
    FormatError,
    InputError,
    SingularityError,
    ToleranceNotReached,
)
from .numcore import (
    adjoint_map,
    apply,
    compose,
    matrix_exponential,
    operator_norm,
    pairing,
    resolvent_step,
)
from .stability import CertGrid, GrowthBound, check_i_star_equivalence, estimate_growth_bound, verify_growth_bound

__version__ = "0.1.0"

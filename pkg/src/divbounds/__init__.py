"""Certified bounds for dividend strategies under exponential utility."""

from .barrier import BarrierConfig, build_coefficients, default_barrier, goodness_barrier, v_approx
from .constant import goodness_constant
from .errors import InapplicableError, ParameterError
from .freeboundary import solve_free_boundary
from .kernels import DriftBand, OccupationKernel
from .model import ModelParams, is_constant_strategy_optimal, make_params
from .series import DEFAULT_TRUNCATION, TruncationConfig, v_xi

__all__ = ["BarrierConfig", "DEFAULT_TRUNCATION", "DriftBand", "InapplicableError", "ModelParams",
           "OccupationKernel", "ParameterError", "TruncationConfig", "build_coefficients",
           "default_barrier", "goodness_barrier", "goodness_constant", "is_constant_strategy_optimal",
           "make_params", "solve_free_boundary", "v_approx", "v_xi"]

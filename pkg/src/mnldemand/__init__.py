"""Demand estimation from censored sales under the multinomial logit model."""

from .em import DemandDecomposition, e_step, estimate_em, m_step_closed_form, m_step_fixed_point
from .errors import ConvergenceError, PanelError
from .fw import armijo_step, estimate_fw, fw_direction, gradient_reduced
from .mm import MMState, estimate_mm, mm_coefficients, solve_eta_newton
from .model import (
    EstimateResult,
    EstimationConfig,
    ModelParams,
    SalesPanel,
    SellDownSpec,
    binding_set,
    choice_probability,
    choice_probability_partial,
    choice_probability_selldown,
    loglik_basic,
    loglik_partial,
    loglik_selldown,
    outside_weight,
    outside_weights,
    recover_lambda,
    reduced_objective,
)
from .split import (
    PeriodMap,
    SplitSegment,
    compute_time_proportions,
    disaggregate_panel,
    merge_identical_assortments,
    split_sales,
)

__version__ = "0.1.0"

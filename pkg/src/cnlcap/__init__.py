"""Exact location of competitive facilities under cross-nested logit demand."""

from .choice import (choice_probability, correlation_estimate, nest_weight, objective_value,
                     objective_value_separated)
from .drivers import (SolveReport, bc_solve, cp_solve, doa_solve, exhaustive_solve,
                      greedy_solve, run_method)
from .estimators import CaptureSolver, MnlSimplifier, NlSimplifier
from .exceptions import (CnlError, ConfigurationError, DomainError, NumericRangeError,
                         PreconditionError, ResourceLimitError)
from .instance import CnlInstance, Config, SolutionVector
from .instances import GenConfig, generate, percent_loss, simplify_to_mnl, simplify_to_nl
from .io import read_instance, write_instance
from .special_cases import mnl_t1_solve, nl_t1_solve
from .validation import check_instance, check_solution

__version__ = "0.1.0"

__all__ = [
    "CaptureSolver", "CnlError", "CnlInstance", "Config", "ConfigurationError", "DomainError",
    "GenConfig", "MnlSimplifier", "NlSimplifier", "NumericRangeError", "PreconditionError",
    "ResourceLimitError", "SolutionVector", "SolveReport", "bc_solve", "check_instance",
    "check_solution", "choice_probability", "correlation_estimate", "cp_solve", "doa_solve",
    "exhaustive_solve", "generate", "greedy_solve", "mnl_t1_solve", "nest_weight",
    "nl_t1_solve", "objective_value", "objective_value_separated", "percent_loss",
    "read_instance", "run_method", "simplify_to_mnl", "simplify_to_nl", "write_instance",
]

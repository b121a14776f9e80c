"""Cost-aware transfer learning of performance models for configurable systems."""

__version__ = "0.1.0"

from ._engine import FitOptions, FitReport  # noqa: E402
from ._kernels import BACKEND  # noqa: E402
from .config_space import ConfigurationSpace, ParameterSpec, build_space  # noqa: E402
from .cost import CostParams, feasible_allocations, pareto_front, total_cost  # noqa: E402
from .gp import GPModel, KernelParams, fit, predict  # noqa: E402
from .synthetic import ScenarioSpec, make_scenario  # noqa: E402
from .transfer import (  # noqa: E402
    TransferGPModel,
    TransferKernelParams,
    fit_transfer,
    predict_target,
)

__all__ = [
    "BACKEND",
    "ConfigurationSpace",
    "CostParams",
    "FitOptions",
    "FitReport",
    "GPModel",
    "KernelParams",
    "ParameterSpec",
    "ScenarioSpec",
    "TransferGPModel",
    "TransferKernelParams",
    "build_space",
    "feasible_allocations",
    "fit",
    "fit_transfer",
    "make_scenario",
    "pareto_front",
    "predict",
    "predict_target",
    "total_cost",
]

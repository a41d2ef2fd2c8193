"""Time-varying diffusion-advection channels: analytic statistics and link simulation."""

__version__ = "0.1.0"

from .kernel import Geometry, Medium, Scenario, default_scenario
from .wind import CovarianceKernel, KernelKind, WindModel, WindPath

__all__ = [
    "__version__",
    "CovarianceKernel",
    "Geometry",
    "KernelKind",
    "Medium",
    "Scenario",
    "WindModel",
    "WindPath",
    "default_scenario",
]

"""Groupoid-graded spaces, dynamical Yang-Baxter operators, intertwiners and twists.

Library entry points live in the submodules; ``suites.run_suite`` drives the
named verification suites used by ``cli.py``.
"""

from .exceptions import DynBaxterError
from .models import CheckResult, ModelParams, ModelVariant, ResidualReport, SuiteConfig
from .rmodels import SpectralOperator, build_model
from .suites import run_suite

__all__ = [
    "CheckResult",
    "DynBaxterError",
    "ModelParams",
    "ModelVariant",
    "ResidualReport",
    "SpectralOperator",
    "SuiteConfig",
    "build_model",
    "run_suite",
]

"""Subdynamics of two Heisenberg-coupled qubits in a truncated bosonic bath."""

from .errors import (
    CapacityError,
    NumericalSingularityError,
    SubdynError,
    ValidationError,
)
from .model import CouplingKind, JProfile, ModelConfig, Mode, Order, build_hamiltonians, unperturbed_basis
from .subdyn import run_pipeline

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "CouplingKind",
    "JProfile",
    "ModelConfig",
    "Mode",
    "NumericalSingularityError",
    "Order",
    "SubdynError",
    "ValidationError",
    "build_hamiltonians",
    "run_pipeline",
    "unperturbed_basis",
]

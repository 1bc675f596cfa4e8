"""Distance-adaptive variational super-resolution as a classical solver."""

from .degrade import AtmosphereParams, DegradationModel, build_model
from .field import ScalarField
from .kernels import KernelBank
from .regularize import RegularizerParams
from .solver import SolverConfig, SolverTrace, restore
from .spectral import SpectralProfile

__version__ = "0.1.0"

__all__ = [
    "AtmosphereParams",
    "DegradationModel",
    "KernelBank",
    "RegularizerParams",
    "ScalarField",
    "SolverConfig",
    "SolverTrace",
    "SpectralProfile",
    "build_model",
    "restore",
]

"""Spreading speeds and expansion shapes for Fisher-KPP invasion along a fast road."""

from .dispersion import (
    ComplexWaveRoots,
    CriticalAngles,
    Direction,
    RealRootsError,
    SolverError,
    SpectralContact,
    complex_roots,
    critical_angles,
    enhancement_holds,
    intersects,
    normal_speed,
    w_star,
    w_star_derivative,
)
from .model import ModelParams, ParameterError, PoleError, Reaction, chi, default_reaction, kpp_speed

__all__ = [
    "ComplexWaveRoots",
    "CriticalAngles",
    "Direction",
    "ModelParams",
    "ParameterError",
    "PoleError",
    "Reaction",
    "RealRootsError",
    "SolverError",
    "SpectralContact",
    "chi",
    "complex_roots",
    "critical_angles",
    "default_reaction",
    "enhancement_holds",
    "intersects",
    "kpp_speed",
    "normal_speed",
    "w_star",
    "w_star_derivative",
]

"""Physical parameters of the road-field system and the KPP reaction term."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ParameterError(ValueError):
    """Raised when model parameters violate the admissibility constraints."""


class PoleError(ValueError):
    """Raised when an exchange-rate expression is evaluated at or past its pole."""


@dataclass(frozen=True)
class ModelParams:
    """Constants of the road-field system.

    ``d`` and ``D`` are the field and road diffusivities, ``mu`` the
    road-to-field and ``nu`` the field-to-road exchange rates, ``f0p`` the
    growth rate f'(0).  ``q`` is a transport speed along the road and ``rho``
    a mortality rate on the road; both default to zero.
    """

    d: float = 1.0
    D: float = 10.0
    mu: float = 1.0
    nu: float = 1.0
    f0p: float = 1.0
    q: float = 0.0
    rho: float = 0.0

    def __post_init__(self) -> None:
        for name in ("d", "D", "mu", "nu", "f0p"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
        if not math.isfinite(self.q):
            raise ParameterError(f"q must be finite, got {self.q!r}")
        if not (math.isfinite(self.rho) and self.rho >= 0):
            raise ParameterError(f"rho must be finite and >= 0, got {self.rho!r}")

    @property
    def c_K(self) -> float:
        return kpp_speed(self)

    @property
    def classic(self) -> bool:
        """True when there is neither transport nor mortality on the road."""
        return self.q == 0.0 and self.rho == 0.0

    def replace(self, **changes: float) -> "ModelParams":
        values = {k: getattr(self, k) for k in ("d", "D", "mu", "nu", "f0p", "q", "rho")}
        values.update(changes)
        return ModelParams(**values)


def kpp_speed(params: ModelParams) -> float:
    """Fisher-KPP invasion speed ``2 sqrt(d f'(0))`` in the open field."""
    return 2.0 * math.sqrt(params.d * params.f0p)


def chi(params: ModelParams, s: float) -> float:
    """Exchange function ``mu s / (nu + s)``, defined for ``s > -nu``."""
    if s <= -params.nu:
        raise PoleError(f"chi is undefined for s <= -nu (s={s!r}, nu={params.nu!r})")
    return params.mu * s / (params.nu + s)


@dataclass(frozen=True)
class Reaction:
    """A KPP nonlinearity ``f`` together with its slope at zero.

    ``eval`` must accept floats and numpy arrays.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    f0p: float
    name: str = "custom"
    n_check: int = field(default=1000, compare=False)

    def __call__(self, s):
        return self.eval(s)

    def check(self, params: ModelParams | None = None, n: int | None = None) -> list[str]:
        """Return the list of violated KPP conditions, sampled on (0, 2]."""
        n = self.n_check if n is None else n
        problems: list[str] = []
        if params is not None and not math.isclose(self.f0p, params.f0p, rel_tol=1e-12):
            problems.append(f"f'(0)={self.f0p} differs from params.f0p={params.f0p}")
        f0 = float(self.eval(np.array([0.0]))[0])
        f1 = float(self.eval(np.array([1.0]))[0])
        if abs(f0) > 1e-12:
            problems.append(f"f(0) = {f0} != 0")
        if abs(f1) > 1e-12:
            problems.append(f"f(1) = {f1} != 0")
        s = np.linspace(0.0, 2.0, n + 1)[1:]
        fs = np.asarray(self.eval(s), dtype=float)
        inside = (s > 0) & (s < 1)
        outside = s > 1
        if np.any(fs[inside] <= 0):
            problems.append("f must be positive on (0, 1)")
        if np.any(fs[outside] >= 0):
            problems.append("f must be negative on (1, inf)")
        if np.any(fs > self.f0p * s * (1 + 1e-12) + 1e-15):
            problems.append("f(s) <= f'(0) s violated")
        return problems

    def validate(self, params: ModelParams | None = None) -> "Reaction":
        problems = self.check(params)
        if problems:
            raise ParameterError("reaction is not of KPP type: " + "; ".join(problems))
        return self


def default_reaction(params: ModelParams) -> Reaction:
    """Logistic reaction ``f'(0) s (1 - s)``."""
    r = params.f0p

    def logistic(s):
        s = np.asarray(s, dtype=float)
        return r * s * (1.0 - s)

    return Reaction(eval=logistic, f0p=r, name="logistic")

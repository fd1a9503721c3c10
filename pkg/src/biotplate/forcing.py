"""Named analytic forcing profiles shared by the macro and micro solvers.

A profile is ``amplitude * time(t) * space(x)``.  Every time law vanishes at
``t = 0`` and can be switched off after ``t_off``; both solvers sample the
same callables so their inputs are bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, SchemaViolation

TIME_LAWS = ("ramp-hold", "smoothstep", "sine", "zero")
SPACE_SHAPES = ("sin", "const", "poly", "bump")
FIELDS = ("f0", "g0", "f1bar", "g1bar")


def time_law(name: str, t: float, t_ramp: float = 1.0, omega: float = math.pi,
             t_off: float | None = None) -> float:
    """Scalar time factor of a named law."""
    if t_off is not None and t > t_off + 1e-12 * max(1.0, abs(t_off)):
        return 0.0
    if name == "zero":
        return 0.0
    if name == "ramp-hold":
        return min(t / t_ramp, 1.0)
    if name == "smoothstep":
        s = min(max(t / t_ramp, 0.0), 1.0)
        return s * s * (3.0 - 2.0 * s)
    if name == "sine":
        return math.sin(omega * t)
    raise InputError(f"unknown time law {name!r}", "schema-violation")


def space_shape(name: str, x: np.ndarray, sigma: tuple[float, float], mode: int = 1) -> np.ndarray:
    """Spatial shape on ``sigma = (a, b)`` in the reduced variable ``(x - a) / (b - a)``."""
    a, b = sigma
    xi = (np.asarray(x, dtype=float) - a) / (b - a)
    if name == "sin":
        return np.sin(mode * np.pi * xi)
    if name == "const":
        return np.ones_like(xi)
    if name == "poly":
        return 4.0 * xi * (1.0 - xi)
    if name == "bump":
        return np.sin(np.pi * xi) ** 2
    raise InputError(f"unknown space shape {name!r}", "schema-violation")


@dataclass(frozen=True)
class Profile:
    """``amplitude * time_law(t) * space_shape(x)``."""

    amplitude: float = 0.0
    time: str = "ramp-hold"
    space: str = "sin"
    t_ramp: float = 1.0
    omega: float = math.pi
    t_off: float | None = None
    mode: int = 1

    @classmethod
    def from_dict(cls, data: dict, path: str = "forcing") -> "Profile":
        allowed = {"amplitude", "time", "space", "t_ramp", "omega", "t_off", "mode"}
        extra = sorted(set(data) - allowed)
        if extra:
            raise SchemaViolation(f"{path}: unknown field {extra[0]!r}")
        prof = cls(**data)
        if prof.time not in TIME_LAWS:
            raise SchemaViolation(f"{path}.time: unknown law {prof.time!r}")
        if prof.space not in SPACE_SHAPES:
            raise SchemaViolation(f"{path}.space: unknown shape {prof.space!r}")
        if prof.t_ramp <= 0:
            raise SchemaViolation(f"{path}.t_ramp must be positive")
        return prof

    def to_dict(self) -> dict:
        return {"amplitude": self.amplitude, "time": self.time, "space": self.space,
                "t_ramp": self.t_ramp, "omega": self.omega, "t_off": self.t_off,
                "mode": self.mode}

    def time_factor(self, t: float) -> float:
        return self.amplitude * time_law(self.time, t, self.t_ramp, self.omega, self.t_off)

    def __call__(self, t: float, x: np.ndarray, sigma: tuple[float, float]) -> np.ndarray:
        s = self.time_factor(t)
        x = np.asarray(x, dtype=float)
        if s == 0.0:
            return np.zeros_like(x)
        return s * space_shape(self.space, x, sigma, self.mode)


@dataclass
class MacroForcing:
    """Limit loads on ``sigma``: in-plane ``f0``, ``g0`` and vertical ``f1bar``, ``g1bar``.

    ``extra`` holds optional residual sources ``{"p", "u1", "w"}`` (callables
    ``(t, x) -> array``) used by manufactured-solution tests.
    """

    sigma: tuple[float, float]
    profiles: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = sorted(set(self.profiles) - set(FIELDS))
        if unknown:
            raise SchemaViolation(f"forcing: unknown field {unknown[0]!r}")
        for name in FIELDS:
            self.profiles.setdefault(name, Profile())
        self.sigma = (float(self.sigma[0]), float(self.sigma[1]))

    @classmethod
    def from_dict(cls, data: dict, sigma) -> "MacroForcing":
        return cls(sigma, {k: Profile.from_dict(v, f"forcing.{k}") for k, v in data.items()})

    @classmethod
    def zero(cls, sigma) -> "MacroForcing":
        return cls(sigma)

    def to_dict(self) -> dict:
        return {k: self.profiles[k].to_dict() for k in FIELDS}

    def sample(self, name: str, t: float, x: np.ndarray) -> np.ndarray:
        return self.profiles[name](t, x, self.sigma)

    def f0(self, t, x):
        return self.sample("f0", t, x)

    def g0(self, t, x):
        return self.sample("g0", t, x)

    def f1bar(self, t, x):
        return self.sample("f1bar", t, x)

    def g1bar(self, t, x):
        return self.sample("g1bar", t, x)

    def is_zero_at(self, t: float) -> bool:
        """True when every load (including extra sources) vanishes at ``t``."""
        if any(self.profiles[k].time_factor(t) != 0.0 for k in FIELDS):
            return False
        probe = np.linspace(*self.sigma, 7)
        return all(not np.any(src(t, probe)) for src in self.extra.values())

    def check_initial(self) -> None:
        """Loads must vanish at ``t = 0``."""
        if not self.is_zero_at(0.0):
            raise InputError("forcing does not vanish at t = 0", "schema-violation")

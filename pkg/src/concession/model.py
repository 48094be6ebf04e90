"""Closed-form tanh concession curve, the power-law baseline and the elbow window.

The concession curve is ``y(x) = d + b * tanh(a * x - c)``:

* ``a`` -- pace (signed; positive means offers move up),
* ``b`` -- span, half of the total price movement,
* ``c`` -- horizontal shift, the steepest point sits at ``x = c / a``,
* ``d`` -- anchor, the price the offers are centred on.

Everything here is a pure function over frozen dataclasses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import (
    DegenerateCurveError,
    DomainError,
    EmptyScheduleError,
    InvalidParameterError,
)

# Offset of the maximum-|y''| points from the curve centre, in units of 1/|a|.
# It is the root of y''' = 0, i.e. tanh^2(ax - c) = 1/3.
ELBOW_KAPPA = math.atanh(1.0 / math.sqrt(3.0))
# Full elbow-window width times |a|; used as the CRI constant (~1.32).
ELBOW_WIDTH = 2.0 * ELBOW_KAPPA

ArrayLike = Union[float, np.ndarray]


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise InvalidParameterError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class TanhParams:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self) -> None:
        _check_finite(a=self.a, b=self.b, c=self.c, d=self.d)

    @property
    def center(self) -> float:
        """Round index of the steepest concession, ``c / a``."""
        if self.a == 0:
            raise DegenerateCurveError("curve with a == 0 has no centre")
        return self.c / self.a

    def canonical(self) -> "TanhParams":
        """Return the equivalent parameterisation with ``b >= 0``."""
        if self.b < 0:
            return TanhParams(-self.a, -self.b, -self.c, self.d)
        return self

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


@dataclass(frozen=True)
class PowerLawParams:
    e: float
    p_min: float
    p_max: float

    def __post_init__(self) -> None:
        _check_finite(e=self.e, p_min=self.p_min, p_max=self.p_max)
        if self.e <= 0:
            raise InvalidParameterError(f"exponent e must be > 0, got {self.e}")
        if self.p_min > self.p_max:
            raise InvalidParameterError("p_min must not exceed p_max")


@dataclass(frozen=True)
class ElbowWindow:
    x_lo: float
    x_hi: float
    half_width: float


@dataclass(frozen=True)
class OfferTrajectory:
    """Offers made by one role in one negotiation.

    ``x`` holds turn indices (strictly increasing), ``y`` the offered prices.
    ``T`` is the number of rounds of the whole negotiation, not of this role.
    """

    x: np.ndarray
    y: np.ndarray
    T: int
    role: str = "buyer"
    negotiation_id: str = ""
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise InvalidParameterError("x and y must have the same length")
        if x.size and not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidParameterError("trajectory points must be finite")
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise InvalidParameterError("turn indices must be strictly increasing")
        if x.size and self.T < x[-1]:
            raise InvalidParameterError(f"T={self.T} is smaller than the last turn {x[-1]:g}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return int(self.x.size)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist()))

    @classmethod
    def from_points(cls, points, T: int | None = None, **kwargs) -> "OfferTrajectory":
        pts = list(points)
        x = np.array([p[0] for p in pts], dtype=float)
        y = np.array([p[1] for p in pts], dtype=float)
        if T is None:
            T = int(math.ceil(x[-1])) if pts else 0
        return cls(x=x, y=y, T=T, **kwargs)


def tanh_value(p: TanhParams, x: ArrayLike) -> ArrayLike:
    """Offer predicted by the curve at round ``x`` (scalar or array)."""
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise InvalidParameterError("x must be finite")
    out = p.d + p.b * np.tanh(p.a * xs - p.c)
    return float(out) if out.ndim == 0 else out


def tanh_speed(p: TanhParams, x: ArrayLike) -> ArrayLike:
    """Absolute concession speed ``|a b| (1 - tanh^2(a x - c))``."""
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise InvalidParameterError("x must be finite")
    u = p.a * xs - p.c
    # 1 - tanh^2 loses everything once tanh rounds to 1; sech^2 does not.
    sech2 = 1.0 / np.cosh(np.clip(u, -350.0, 350.0)) ** 2
    out = abs(p.a * p.b) * sech2
    return float(out) if out.ndim == 0 else out


def elbow_window(p: TanhParams) -> ElbowWindow:
    if p.a == 0:
        raise DegenerateCurveError("elbow window undefined for a == 0")
    half = ELBOW_KAPPA / abs(p.a)
    mid = p.c / p.a
    return ElbowWindow(x_lo=mid - half, x_hi=mid + half, half_width=half)


def power_law_offer(p: PowerLawParams, t: float) -> float:
    """Faratin-style time-dependent offer ``p_min + (p_max - p_min) t^(1/e)``."""
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"normalised time must lie in [0, 1], got {t}")
    return p.p_min + (p.p_max - p.p_min) * t ** (1.0 / p.e)


def sample_schedule(p: TanhParams, T: int, role: str = "buyer", negotiation_id: str = "") -> OfferTrajectory:
    """Evaluate the curve at rounds ``1..T``."""
    if T < 1:
        raise EmptyScheduleError("a schedule needs at least one round")
    x = np.arange(1, T + 1, dtype=float)
    return OfferTrajectory(x=x, y=np.asarray(tanh_value(p, x)), T=T, role=role, negotiation_id=negotiation_id)

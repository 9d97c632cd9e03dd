"""Rayleigh model of per-driver distraction and threshold classification.

The distraction level ``x >= 0`` of a driver follows a Rayleigh law with scale
``sigma``; ``x = 0`` is a fully attentive driver. Drivers whose level reaches
the threshold ``theta`` are classed High and get transmission priority.

Note the Rayleigh mean is ``sigma * sqrt(pi / 2)`` (about 1.2533 sigma), not
``pi * sigma / 2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class PriorityClass(str, enum.Enum):
    HIGH = "High"
    NORMAL = "Normal"


@dataclass(frozen=True)
class RayleighParams:
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    @property
    def mean(self) -> float:
        return self.sigma * math.sqrt(math.pi / 2.0)


@dataclass(frozen=True)
class DistractionProfile:
    level: float
    priority_class: PriorityClass

    def __post_init__(self):
        if not self.level >= 0:
            raise ValueError(f"distraction level must be >= 0, got {self.level}")

    @classmethod
    def from_level(cls, level: float, theta: float) -> "DistractionProfile":
        return cls(level=level, priority_class=classify(level, theta))


def rayleigh_pdf(x: float, params: RayleighParams) -> float:
    if x < 0:
        raise ValueError(f"rayleigh_pdf is defined for x >= 0, got {x}")
    s2 = params.sigma * params.sigma
    return (x / s2) * math.exp(-x * x / (2.0 * s2))


def tail_probability(theta: float, params: RayleighParams) -> float:
    """P(X >= theta) = exp(-theta^2 / (2 sigma^2))."""
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    return math.exp(-theta * theta / (2.0 * params.sigma * params.sigma))


def inverse_cdf(u, params: RayleighParams):
    """Map uniforms in [0, 1) to Rayleigh variates; accepts scalars or arrays."""
    if np.ndim(u) == 0:
        return params.sigma * math.sqrt(-2.0 * math.log1p(-float(u)))
    u = np.asarray(u, dtype=float)
    return params.sigma * np.sqrt(-2.0 * np.log1p(-u))


def sample_distraction(rng: np.random.Generator, params: RayleighParams, size: int | None = None):
    """Draw distraction levels by inverse-CDF transform of ``rng.random()``.

    One uniform is consumed per sample, so a given stream and sigma always
    reproduce the same sequence. ``size=None`` returns a float.
    """
    if size is None:
        return inverse_cdf(rng.random(), params)
    return inverse_cdf(rng.random(size), params)


def classify(level: float, theta: float) -> PriorityClass:
    # Inclusive boundary: the High share is P(X >= theta).
    return PriorityClass.HIGH if level >= theta else PriorityClass.NORMAL


def fit_sigma(levels: Iterable[float]) -> RayleighParams:
    """Maximum-likelihood scale: sqrt(sum(x^2) / (2 n))."""
    xs = np.asarray(list(levels), dtype=float)
    if xs.size == 0:
        raise ValueError("cannot fit sigma to an empty sample")
    if np.any(xs < 0) or not np.all(np.isfinite(xs)):
        raise ValueError("distraction levels must be finite and non-negative")
    if not np.any(xs > 0):
        raise ValueError("cannot fit sigma: all levels are zero")
    return RayleighParams(float(math.sqrt(np.sum(xs * xs) / (2.0 * xs.size))))

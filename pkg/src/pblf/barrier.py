"""Barrier Lyapunov functions on the open interval ``|z| < k``.

Four families are supported::

    StandardLog   V = 1/2 ln(k^2 / (k^2 - z^2))
    ZoneLog       V = 1/2 ln(k^2 e^(-2b) / (k^2 - z^2))       (comparison only)
    LogPBLF       V = 1/(2 beta) ln(k^2 / (k^2 - z^2))
    RationalPBLF  V = z^2 / (2 (k^2 - z^2) (1 + beta z^2))

Every kind is described by its value ``V``, its derivative ``V'`` and the
gradient factor ``mu = V'/z`` (extended continuously to ``z = 0``). Control
laws only need ``mu`` and ``1/mu``, and those two accept dual numbers so the
laws can be differentiated in forward mode.

The ZoneLog form is evaluated exactly as written; it is negative near the
origin and is not used by any controller.
"""

import enum
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

from .dual import log, real
from .errors import ConfigError, DomainError


class BarrierKind(enum.Enum):
    STANDARD_LOG = "StandardLog"
    ZONE_LOG = "ZoneLog"
    LOG_PBLF = "LogPBLF"
    RATIONAL_PBLF = "RationalPBLF"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        for kind in cls:
            if kind.value.lower() == str(name).lower() or kind.name.lower() == str(name).lower():
                return kind
        raise ConfigError(f"unknown barrier kind {name!r}")


@dataclass(frozen=True)
class BarrierParams:
    """One barrier channel.

    ``beta`` is the p-BLF shape parameter; for ZoneLog it is the zone
    parameter ``b``; StandardLog ignores it.
    """

    kind: BarrierKind
    k: float
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BarrierKind.parse(self.kind))
        if not (self.k > 0.0 and math.isfinite(self.k)):
            raise ConfigError(f"barrier half-width k must be positive and finite, got {self.k}")
        if self.kind in (BarrierKind.LOG_PBLF, BarrierKind.RATIONAL_PBLF):
            if not (self.beta > 0.0 and math.isfinite(self.beta)):
                raise ConfigError(f"beta must be positive for {self.kind.value}, got {self.beta}")
            if self.beta <= 1.0:
                warnings.warn(
                    f"{self.kind.value} with beta={self.beta} <= 1 does not slow growth near the origin",
                    stacklevel=3,
                )
        elif self.kind is BarrierKind.ZONE_LOG and not math.isfinite(self.beta):
            raise ConfigError("zone parameter b must be finite")


class BarrierEval(NamedTuple):
    value: float
    gradient: float
    gradient_factor: float


def _check(p, z):
    zr = z if z.__class__ is float else real(z)
    if not -p.k < zr < p.k:
        raise DomainError(f"|z|={abs(zr):.17g} is not inside the barrier half-width k={p.k:.17g}")


def is_inside(p: BarrierParams, z) -> bool:
    return abs(real(z)) < p.k


def value(p: BarrierParams, z):
    """Barrier value ``V(z)``; raises DomainError unless ``|z| < k``."""
    _check(p, z)
    k2 = p.k * p.k
    gap = k2 - z * z
    kind = p.kind
    if kind is BarrierKind.LOG_PBLF:
        return 0.5 / p.beta * log(k2 / gap)
    if kind is BarrierKind.RATIONAL_PBLF:
        z2 = z * z
        return z2 / (2.0 * gap * (1.0 + p.beta * z2))
    if kind is BarrierKind.STANDARD_LOG:
        return 0.5 * log(k2 / gap)
    # ZoneLog, as printed: 1/2 ln(k^2 e^(-2b) / gap)
    return 0.5 * log(k2 * math.exp(-2.0 * p.beta) / gap)


def gradient_factor(p: BarrierParams, z):
    """``V'(z)/z``, equal to its limit at ``z = 0``. Dual-number safe."""
    _check(p, z)
    k2 = p.k * p.k
    z2 = z * z
    gap = k2 - z2
    kind = p.kind
    if kind is BarrierKind.LOG_PBLF:
        return 1.0 / (p.beta * gap)
    if kind is BarrierKind.RATIONAL_PBLF:
        s = 1.0 + p.beta * z2
        return (p.beta * z2 * z2 + k2) / (gap * gap * (s * s))
    return 1.0 / gap


def inverse_gradient_factor(p: BarrierParams, z):
    """``1/mu(z)``; finite and positive inside the barrier."""
    _check(p, z)
    k2 = p.k * p.k
    z2 = z * z
    gap = k2 - z2
    kind = p.kind
    if kind is BarrierKind.LOG_PBLF:
        return p.beta * gap
    if kind is BarrierKind.RATIONAL_PBLF:
        s = 1.0 + p.beta * z2
        return gap * gap * (s * s) / (p.beta * z2 * z2 + k2)
    return gap


def gradient(p: BarrierParams, z):
    """``dV/dz``; odd in ``z``."""
    return z * gradient_factor(p, z)


def evaluate(p: BarrierParams, z) -> BarrierEval:
    mu = gradient_factor(p, z)
    return BarrierEval(value(p, z), z * mu, mu)

"""Strict-feedback plants and reference trajectories.

A plant of order ``n`` is given by callables ``f[i]`` and ``g[i]`` where
channel ``i`` (0-based) takes exactly the states ``x[0..i]`` as positional
arguments. The signature therefore enforces the strict-feedback structure::

    dx_i/dt = f_i(x_1..x_i) + g_i(x_1..x_i) x_{i+1}
    dx_n/dt = f_n(x_1..x_n) + g_n(x_1..x_n) u

All callables must be written with plain arithmetic (or the helpers in
:mod:`pblf.dual`) so they can be evaluated on dual numbers.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import dual
from .errors import ConfigError, NonFiniteError

G_MIN_DEFAULT = 1e-9


@dataclass(frozen=True)
class StrictFeedbackModel:
    f: tuple
    g: tuple
    name: str = "custom"
    operating_box: Optional[tuple] = None
    g_min: float = G_MIN_DEFAULT
    box_samples: int = 9

    def __post_init__(self):
        object.__setattr__(self, "f", tuple(self.f))
        object.__setattr__(self, "g", tuple(self.g))
        if len(self.f) != len(self.g) or not self.f:
            raise ConfigError("f and g must be non-empty and of equal length")
        if self.operating_box is not None:
            box = tuple(float(b) for b in self.operating_box)
            if len(box) != self.n or any(not b > 0 for b in box):
                raise ConfigError("operating box needs one positive half-width per state")
            object.__setattr__(self, "operating_box", box)
            worst = min_abs_g(self, box, self.box_samples)
            for i, gmin in enumerate(worst):
                if not gmin >= self.g_min:
                    raise ConfigError(
                        f"|g{i + 1}| drops to {gmin:.3g} < g_min={self.g_min:.3g} on the operating box"
                    )

    @property
    def n(self) -> int:
        return len(self.f)

    def f_i(self, i, x):
        return self.f[i](*x[: i + 1])

    def g_i(self, i, x):
        return self.g[i](*x[: i + 1])


def min_abs_g(model: StrictFeedbackModel, box: Sequence[float], samples: int = 9):
    """Minimum ``|g_i|`` over a uniform grid of the box ``|x_j| <= box[j]``."""
    out = []
    for i in range(model.n):
        axes = [np.linspace(-box[j], box[j], samples) for j in range(i + 1)]
        worst = math.inf
        for pt in itertools.product(*axes):
            worst = min(worst, abs(model.g[i](*map(float, pt))))
        out.append(worst)
    return out


def eval_dynamics(model: StrictFeedbackModel, x: Sequence[float], u) -> list:
    """Right-hand side ``dx/dt`` of the open-loop plant for input ``u``."""
    n = model.n
    xs = tuple(x)
    out = []
    for i in range(n):
        nxt = xs[i + 1] if i + 1 < n else u
        out.append(model.f[i](*xs[: i + 1]) + model.g[i](*xs[: i + 1]) * nxt)
    for i, v in enumerate(out):
        if not math.isfinite(dual.real(v)):
            raise NonFiniteError(f"dx{i + 1}/dt is not finite ({v!r})")
    return out


THETA = (0.1, 0.1, -0.2)


def paper_plant(operating_box=(0.56, 5.0)) -> StrictFeedbackModel:
    """Second-order benchmark plant with Theta = (0.1, 0.1, -0.2)."""
    t1, t2, t3 = THETA
    return StrictFeedbackModel(
        f=(lambda x1: t1 * x1 * x1, lambda x1, x2: t2 * x1 * x2 + t3 * x1),
        g=(lambda x1: 1.0, lambda x1, x2: 1.0 + x1 * x1),
        name="paper-2nd-order",
        operating_box=operating_box,
    )


def integrator_chain(n: int) -> StrictFeedbackModel:
    """Pure chain of integrators (f = 0, g = 1) of order ``n``; handy for tests."""
    zero = lambda *x: 0.0  # noqa: E731
    one = lambda *x: 1.0  # noqa: E731
    return StrictFeedbackModel(f=(zero,) * n, g=(one,) * n, name=f"chain-{n}")


PLANTS = {"paper-2nd-order": paper_plant}


def make_plant(name: str) -> StrictFeedbackModel:
    try:
        return PLANTS[name]()
    except KeyError:
        raise ConfigError(f"unknown plant {name!r}; available: {sorted(PLANTS)}") from None


@dataclass(frozen=True)
class ReferenceSignal:
    """Desired output ``y_d`` with analytic derivatives.

    ``derivative(t, j)`` returns the j-th time derivative at a float time.
    ``bounds[j]`` is the declared bound on ``|y_d^(j)|``; bounds beyond the
    declared list repeat the last entry.
    """

    derivative: Callable[[float, int], float]
    bounds: tuple
    name: str = "custom"

    def bound(self, j: int) -> float:
        return self.bounds[min(j, len(self.bounds) - 1)]

    def eval(self, t, j: int = 0):
        """``y_d^(j)(t)``; ``t`` may be a (nested) dual number."""
        if isinstance(t, dual.Dual):
            return dual.Dual(self.eval(t.re, j), self.eval(t.re, j + 1) * t.du)
        return self.derivative(t, j)


def sine_reference(offset: float, amplitude: float, bounds=None, name="sine") -> ReferenceSignal:
    """``offset + amplitude*sin(t)``."""

    def derivative(t, j):
        phase = j % 4
        if phase == 0:
            v = amplitude * math.sin(t)
            return offset + v if j == 0 else v
        if phase == 1:
            return amplitude * math.cos(t)
        if phase == 2:
            return -amplitude * math.sin(t)
        return -amplitude * math.cos(t)

    if bounds is None:
        bounds = (abs(offset) + abs(amplitude), abs(amplitude))
    return ReferenceSignal(derivative, tuple(bounds), name)


def constant_reference(c: float = 0.0, bound: float = None) -> ReferenceSignal:
    b = bound if bound is not None else abs(c) + 1.0
    return ReferenceSignal(lambda t, j: c if j == 0 else 0.0, (b, b), name=f"constant({c:g})")


def paper_reference() -> ReferenceSignal:
    """``y_d = 0.2 + 0.3 sin(t)`` with k_xd = 0.5 and derivative bounds 0.3."""
    return sine_reference(0.2, 0.3, bounds=(0.5, 0.3), name="benchmark-sine")


REFERENCES = {"benchmark-sine": paper_reference, "zero": lambda: constant_reference(0.0, 0.1)}


def make_reference(name: str) -> ReferenceSignal:
    try:
        return REFERENCES[name]()
    except KeyError:
        raise ConfigError(f"unknown reference {name!r}; available: {sorted(REFERENCES)}") from None


@dataclass
class AssumptionReport:
    max_abs: list
    bounds: list
    passed: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.passed)


def check_assumption1(ref: ReferenceSignal, horizon: float, samples: int, order: int = 2) -> AssumptionReport:
    """Sample ``|y_d^(j)|`` for ``j = 0..order`` on ``[0, horizon]``.

    Passes when every sampled maximum stays within its declared bound.
    """
    if not horizon > 0 or samples < 2:
        raise ConfigError("need horizon > 0 and at least 2 samples")
    ts = np.linspace(0.0, horizon, samples)
    maxes, bounds, passed = [], [], []
    for j in range(order + 1):
        m = max(abs(ref.eval(float(t), j)) for t in ts)
        b = ref.bound(j)
        maxes.append(m)
        bounds.append(b)
        passed.append(m <= b)
    return AssumptionReport(maxes, bounds, passed)

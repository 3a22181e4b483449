"""Backstepping control laws built on barrier Lyapunov functions.

Every design shares one recursion. With error coordinates ``z1 = x1 - y_d``
and ``zi = xi - alpha_{i-1}``, and a per-channel gradient factor ``mu_i``
(``mu_i = 1`` for quadratic channels ``z^2/2``)::

    alpha_i = ( -f_i + d/dt alpha_{i-1} - kappa_i z_i / mu_i(z_i)
                - g_{i-1} mu_{i-1}(z_{i-1}) z_{i-1} / mu_i(z_i) ) / g_i

with ``d/dt alpha_0 = dy_d/dt`` and ``u = alpha_n``. For a log p-BLF,
``1/mu = beta (k^2 - z^2)`` which reproduces the familiar
``beta kappa z (k^2 - z^2)`` term. Designs differ only in which channels carry
a barrier:

* ``OutputConstrained`` / ``SecondOrderLog``: channel 1 only.
* ``FullState``: every channel (one barrier per state).
* ``SecondOrderRational``: channel 1 rational p-BLF, and the channel-1 term is
  ``kappa_1 mu_1 z_1`` (i.e. ``kappa_1 (N/D) z_1``) rather than
  ``kappa_1 z_1/mu_1``.

The total derivative ``d/dt alpha_{i-1}`` is obtained by evaluating
``alpha_{i-1}`` on dual numbers seeded with the direction ``(xdot, 1)``;
higher stages nest the duals.
"""

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from . import barrier as bl
from .dual import Dual, real, tangent
from .errors import ConfigError, DomainError, NonFiniteError
from .plant import ReferenceSignal, StrictFeedbackModel

G_TOL = 1e-9


class Design(enum.Enum):
    SECOND_ORDER_LOG = "second-order-log"
    SECOND_ORDER_RATIONAL = "second-order-rational"
    OUTPUT_CONSTRAINED = "output-constrained"
    FULL_STATE = "full-state"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("_", "-")
        aliases = {
            "secondorderlog": cls.SECOND_ORDER_LOG,
            "secondorderrational": cls.SECOND_ORDER_RATIONAL,
            "outputconstrained": cls.OUTPUT_CONSTRAINED,
            "fullstate": cls.FULL_STATE,
        }
        for d in cls:
            if d.value == key:
                return d
        try:
            return aliases[key.replace("-", "")]
        except KeyError:
            raise ConfigError(f"unknown design {name!r}") from None


class Coupling(enum.Enum):
    """Cross-channel term of the full-state design.

    ``LYAPUNOV`` cancels exactly against the previous channel's barrier term,
    so ``dV/dt = -sum kappa_i z_i^2``. ``PRINTED`` carries an extra ``1/beta``
    on that term; the two coincide when ``beta = 1``.
    """

    LYAPUNOV = "lyapunov"
    PRINTED = "printed"


@dataclass(frozen=True)
class ControllerConfig:
    design: Design
    kappa: tuple
    barriers: tuple
    constraint_box: tuple
    coupling: Coupling = Coupling.LYAPUNOV

    def __post_init__(self):
        object.__setattr__(self, "design", Design.parse(self.design))
        object.__setattr__(self, "coupling", Coupling(self.coupling))
        object.__setattr__(self, "kappa", tuple(float(k) for k in self.kappa))
        object.__setattr__(self, "barriers", tuple(self.barriers))
        box = tuple(None if b is None else float(b) for b in self.constraint_box)
        object.__setattr__(self, "constraint_box", box)
        if not self.kappa or any(not (k > 0.0 and math.isfinite(k)) for k in self.kappa):
            raise ConfigError(f"all gains kappa_i must be positive, got {self.kappa}")
        if not box or box[0] is None or not box[0] > 0:
            raise ConfigError("constraint box must declare a positive k_x1")
        if any(b is not None and not b > 0 for b in box):
            raise ConfigError("constraint half-widths must be positive")
        if not self.barriers:
            raise ConfigError("at least one barrier channel is required")
        if self.design is Design.SECOND_ORDER_RATIONAL:
            if self.barriers[0].kind is not bl.BarrierKind.RATIONAL_PBLF:
                raise ConfigError("the rational design needs a RationalPBLF barrier")
        elif self.barriers[0].kind is bl.BarrierKind.RATIONAL_PBLF:
            raise ConfigError(f"{self.design.value} is a log-structured design; use second-order-rational")

    @property
    def n(self) -> int:
        return len(self.kappa)


def derived_error_bound(k_x1: float, k_xd: float) -> float:
    """Error half-width ``k1 = k_x1 - k_xd`` obtained from the output constraint."""
    k1 = k_x1 - k_xd
    if not k1 > 0:
        raise ConfigError(f"k_x1={k_x1} must exceed the reference bound k_xd={k_xd}")
    return k1


class ErrorVector(NamedTuple):
    z: tuple
    alpha: tuple  # alpha_1..alpha_n, alpha_n == u
    alpha_dot: tuple  # d/dt alpha_1 .. alpha_{n-1}


class Controller:
    """Stateless evaluator of one design on one plant/reference pair."""

    def __init__(self, config: ControllerConfig, model: StrictFeedbackModel, ref: ReferenceSignal):
        n = model.n
        if config.n != n:
            raise ConfigError(f"need {n} gains for an order-{n} plant, got {config.n}")
        d = config.design
        if d in (Design.SECOND_ORDER_LOG, Design.SECOND_ORDER_RATIONAL) and n != 2:
            raise ConfigError(f"{d.value} requires a second-order plant")
        if d is Design.FULL_STATE:
            if len(config.barriers) != n:
                raise ConfigError(f"full-state design needs {n} barrier channels")
            channels = config.barriers
        else:
            if len(config.barriers) != 1:
                raise ConfigError(f"{d.value} takes exactly one barrier channel")
            channels = (config.barriers[0],) + (None,) * (n - 1)
        self.config = config
        self.model = model
        self.ref = ref
        self.n = n
        self.channels = channels
        self._rational = d is Design.SECOND_ORDER_RATIONAL
        self._coupling_scale = (
            [1.0] + [1.0 / b.beta for b in channels[1:]]
            if d is Design.FULL_STATE and config.coupling is Coupling.PRINTED
            else [1.0] * n
        )

    # -- core recursion ---------------------------------------------------
    def _mu(self, i, zi):
        b = self.channels[i]
        if b is None:
            return 1.0
        try:
            return bl.gradient_factor(b, zi)
        except DomainError as exc:
            raise self._breach(i, zi) from exc

    def _inv_mu(self, i, zi):
        b = self.channels[i]
        if b is None:
            return 1.0
        try:
            return bl.inverse_gradient_factor(b, zi)
        except DomainError as exc:
            raise self._breach(i, zi) from exc

    def _breach(self, i, zi):
        zr = abs(real(zi))
        return DomainError(
            f"|z{i + 1}|={zr:.17g} reached its barrier half-width k{i + 1}={self.channels[i].k:.17g}",
            channel=i + 1,
        )

    def _check_channel(self, i, zi):
        if not abs(real(zi)) < self.channels[i].k:
            raise self._breach(i, zi)

    def _g(self, i, x):
        gi = self.model.g[i](*x[: i + 1])
        if -G_TOL < gi < G_TOL:
            raise ConfigError(f"|g{i + 1}| = {abs(real(gi)):.3g} is below {G_TOL:g}; cannot divide")
        return gi

    def _law(self, i, x, zi, prev_dot, g_prev, weight_prev):
        """alpha_i (0-based channel i) given z_i and d/dt alpha_{i-1}."""
        fi = self.model.f[i](*x[: i + 1])
        gi = self._g(i, x)
        if self._rational and i == 0:
            own = zi * self._mu(0, zi)
        else:
            inv_mu = self._inv_mu(i, zi)
            own = zi * inv_mu
        acc = -fi + prev_dot - self.config.kappa[i] * own
        if i > 0:
            acc = acc - self._coupling_scale[i] * g_prev * weight_prev * inv_mu
        return acc / gi

    def _chain(self, x, t, m):
        """Errors, stabilizing functions and their derivatives for channels 1..m.

        ``x`` and ``t`` may be dual numbers; ``x`` needs at least ``m`` entries.
        Channels 1..m-1 come from the real part of the dual pass that also
        yields d/dt alpha_{m-1}, so nothing is evaluated twice.
        """
        if m == 1:
            z1 = x[0] - self.ref.eval(t, 0)
            return [z1], [self._law(0, x, z1, self.ref.eval(t, 1), None, None)], []
        zd, ad, add = self._chain(self._lift(x, m - 1), Dual(t, 1.0), m - 1)
        z = [v.re for v in zd]
        alphas = [v.re for v in ad]
        adots = [v.re for v in add]
        adots.append(ad[-1].du)
        i = m - 1
        zp = z[i - 1]
        zi = x[i] - alphas[i - 1]
        z.append(zi)
        weight = self._mu(i - 1, zp) * zp
        alphas.append(self._law(i, x, zi, adots[-1], self._g(i - 1, x), weight))
        return z, alphas, adots

    def _lift(self, x, m):
        """Seed x_1..x_m with tangents along the open-loop flow (needs x_{m+1})."""
        f, g = self.model.f, self.model.g
        out = []
        for j in range(m):
            xs = x[: j + 1]
            out.append(Dual(x[j], f[j](*xs) + g[j](*xs) * x[j + 1]))
        return out

    def _alpha_dot(self, i, x, t):
        """Total time derivative of alpha_i (1-based) at (x, t)."""
        _, al, _ = self._chain(self._lift(x, i), Dual(t, 1.0), i)
        return tangent(al[i - 1])

    # -- public API -------------------------------------------------------
    def alpha(self, x, t, i):
        """Stabilizing function alpha_i (1-based); uses x_1..x_i."""
        if not 1 <= i <= self.n:
            raise ValueError(f"alpha index must be in 1..{self.n}")
        return self._chain(tuple(x), t, i)[1][i - 1]

    def alpha_dot(self, i, x, t):
        """Exact ``d/dt alpha_{i-1}`` along the closed-loop flow, ``2 <= i <= n``."""
        if not 2 <= i <= self.n:
            raise ValueError(f"alpha_dot index must be in 2..{self.n}")
        v = self._alpha_dot(i - 1, tuple(x), t)
        if not math.isfinite(real(v)):
            raise NonFiniteError(f"d/dt alpha_{i - 1} is not finite")
        return v

    def control(self, x, t):
        """Return ``(u, ErrorVector)`` at state ``x`` and time ``t``."""
        z, al, ad = self._chain(tuple(x), t, self.n)
        u = al[-1]
        if not math.isfinite(u):
            raise NonFiniteError(f"control input is not finite at t={t}")
        return u, ErrorVector(tuple(z), tuple(al), tuple(ad))

    def closed_loop(self, x, t):
        """Closed-loop ``dx/dt`` together with ``(u, ErrorVector)``."""
        x = tuple(x)
        u, ev = self.control(x, t)
        f, g, n = self.model.f, self.model.g, self.n
        xdot = []
        for i in range(n):
            xs = x[: i + 1]
            nxt = x[i + 1] if i + 1 < n else u
            v = f[i](*xs) + g[i](*xs) * nxt
            if not math.isfinite(v):
                raise NonFiniteError(f"dx{i + 1}/dt is not finite at t={t}")
            xdot.append(v)
        return xdot, u, ev

    def errors(self, x, t) -> ErrorVector:
        return self.control(x, t)[1]

    # -- z-coordinates ----------------------------------------------------
    def reconstruct_x(self, z, t, m=None):
        """States x_1..x_m from error coordinates (default m = n)."""
        m = self.n if m is None else m
        x = [z[0] + self.ref.eval(t, 0)]
        for i in range(1, m):
            a = self._chain(x, t, i)[1][i - 1]
            x.append(z[i] + a)
        return x

    def closed_loop_z_rhs(self, z, t, x=None):
        """Closed-loop error dynamics written directly in z-coordinates.

        ``g_i`` is evaluated at the states reconstructed from ``z``; pass ``x``
        to reuse states that are already known.
        """
        n, kappa, scale = self.n, self.config.kappa, self._coupling_scale
        if x is None:
            x = self.reconstruct_x(z, t, max(n - 1, 1))
        out = []
        g_prev = w_prev = None
        for i in range(n):
            zi = z[i]
            b = self.channels[i]
            if b is None:
                v = -kappa[i] * zi
                if i > 0:
                    v -= scale[i] * g_prev * w_prev
                w = zi
            elif self._rational and i == 0:
                mu = self._mu(0, zi)
                v = -kappa[0] * mu * zi
                w = mu * zi
            else:
                inv = self._inv_mu(i, zi)
                v = -kappa[i] * zi * inv
                if i > 0:
                    v -= scale[i] * g_prev * w_prev * inv
                w = self._mu(i, zi) * zi if i + 1 < n else None
            if i + 1 < n:
                g_prev = self._g(i, x)
                v += g_prev * z[i + 1]
                w_prev = w
            out.append(v)
        return out

    def lyapunov(self, z):
        """``V = sum_i V_i(z_i)`` with ``V_i = z_i^2/2`` on unconstrained channels."""
        total = 0.0
        for i, zi in enumerate(z):
            b = self.channels[i]
            if b is None:
                total += 0.5 * zi * zi
            else:
                self._check_channel(i, zi)
                total += bl.value(b, zi)
        return total

    def lyapunov_rate(self, z, t=None, x=None):
        """Closed-form ``dV/dt`` of the closed loop at ``z``.

        ``-sum kappa_i z_i^2`` for the log-structured designs; the rational
        design gives ``-kappa_1 mu_1^2 z_1^2 - sum_{i>1} kappa_i z_i^2``. The
        printed full-state coupling has no closed form and is evaluated as
        ``sum mu_i z_i dz_i/dt``.
        """
        kappa = self.config.kappa
        if self._coupling_scale != [1.0] * self.n:
            zdot = self.closed_loop_z_rhs(z, t, x)
            return sum(self._mu(i, zi) * zi * zd for i, (zi, zd) in enumerate(zip(z, zdot)))
        rate = 0.0
        for i, zi in enumerate(z):
            if self._rational and i == 0:
                mu = self._mu(0, zi)
                rate -= kappa[0] * mu * mu * zi * zi
            else:
                rate -= kappa[i] * zi * zi
        return rate

    def check_admissible(self, z) -> Optional[int]:
        """1-based index of the first barrier channel violated by ``z``, else None."""
        for i, zi in enumerate(z):
            b = self.channels[i]
            if b is not None and not abs(zi) < b.k:
                return i + 1
        return None

"""Closed-loop simulation in state space and in error coordinates."""

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .controller import Controller
from .errors import (
    ConfigError,
    ConstraintBreach,
    DomainError,
    InadmissibleInitialCondition,
    NonFiniteError,
    NonFiniteState,
)

RK4 = "RK4"
RKF45 = "RKF45"


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = RK4
    h: float = 1e-3
    t_final: float = 30.0
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    stride: int = 1
    h_min: float = 1e-12

    def __post_init__(self):
        method = str(self.method).upper()
        if method not in (RK4, RKF45):
            raise ConfigError(f"unknown integration method {self.method!r}")
        object.__setattr__(self, "method", method)
        for name in ("h", "t_final", "abs_tol", "rel_tol", "h_min"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite, got {v!r}")
        if not (isinstance(self.stride, int) and self.stride >= 1):
            raise ConfigError(f"stride must be a positive integer, got {self.stride!r}")


def _finite(y):
    return all(math.isfinite(v) for v in y)


def rk4_step(rhs: Callable, y: Sequence[float], t: float, h: float, k1=None) -> list:
    """One classical Runge-Kutta step of ``dy/dt = rhs(t, y)``.

    ``k1`` may carry ``rhs(t, y)`` when the caller already has it.
    """
    if not h > 0:
        raise ConfigError("step size must be positive")
    if k1 is None:
        k1 = rhs(t, y)
    h2 = 0.5 * h
    k2 = rhs(t + h2, [a + h2 * b for a, b in zip(y, k1)])
    k3 = rhs(t + h2, [a + h2 * b for a, b in zip(y, k2)])
    k4 = rhs(t + h, [a + h * b for a, b in zip(y, k3)])
    h6 = h / 6.0
    out = [a + h6 * (p + 2.0 * q + 2.0 * r + s) for a, p, q, r, s in zip(y, k1, k2, k3, k4)]
    if not _finite(out):
        raise NonFiniteState(t + h)
    return out


# Fehlberg 4(5) tableau
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)


def rkf45_step(rhs: Callable, y: Sequence[float], t: float, h: float, k1=None):
    """One Runge-Kutta-Fehlberg step; returns ``(y4, error_estimate)``.

    The fourth-order solution is propagated; ``|y5 - y4|`` estimates its
    local error.
    """
    ks = [rhs(t, y) if k1 is None else k1]
    for s in range(1, 6):
        a = _A[s]
        ys = [yi + h * sum(a[j] * ks[j][i] for j in range(s)) for i, yi in enumerate(y)]
        ks.append(rhs(t + _C[s] * h, ys))
    y4 = [yi + h * sum(_B4[j] * ks[j][i] for j in range(6)) for i, yi in enumerate(y)]
    y5 = [yi + h * sum(_B5[j] * ks[j][i] for j in range(6)) for i, yi in enumerate(y)]
    return y4, [b - a for a, b in zip(y4, y5)]


class StepRecorder:
    """Accumulates per-sample rows before freezing them into arrays."""

    def __init__(self):
        self.t, self.x, self.z, self.alpha, self.u, self.V, self.vdot = [], [], [], [], [], [], []

    def add(self, t, x, z, alpha, u, V, vdot):
        self.t.append(t)
        self.x.append(x)
        self.z.append(z)
        self.alpha.append(alpha)
        self.u.append(u)
        self.V.append(V)
        self.vdot.append(vdot)


def _frozen(a, shape=None):
    arr = np.asarray(a, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TrajectoryRecord:
    """Time series of one closed-loop run.

    ``alpha`` holds alpha_1..alpha_{n-1} (alpha_n is ``u``); ``vdot_analytic``
    is the closed-form Lyapunov rate of the design at each sample.
    """

    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    alpha: np.ndarray
    u: np.ndarray
    V: np.ndarray
    vdot_analytic: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_arrays(cls, t, x, z, alpha, u, V, vdot_analytic, metadata=None):
        t = _frozen(t)
        N = len(t)
        x = _frozen(x)
        n = x.shape[1] if x.ndim == 2 else 1
        rec = cls(
            t=t,
            x=_frozen(x, (N, n)),
            z=_frozen(z, (N, n)),
            alpha=_frozen(alpha, (N, n - 1)),
            u=_frozen(u),
            V=_frozen(V),
            vdot_analytic=_frozen(vdot_analytic),
            metadata=dict(metadata or {}),
        )
        for name in ("u", "V", "vdot_analytic"):
            if len(getattr(rec, name)) != N:
                raise ValueError(f"series {name} has the wrong length")
        return rec

    @classmethod
    def from_recorder(cls, r: StepRecorder, metadata):
        return cls.from_arrays(r.t, r.x, r.z, r.alpha, r.u, r.V, r.vdot, metadata)

    def replace(self, **changes) -> "TrajectoryRecord":
        fields = dict(
            t=self.t, x=self.x, z=self.z, alpha=self.alpha, u=self.u, V=self.V,
            vdot_analytic=self.vdot_analytic, metadata=self.metadata,
        )
        fields.update(changes)
        return TrajectoryRecord.from_arrays(**fields)


def _guard(fn, t):
    try:
        return fn()
    except DomainError as exc:
        raise ConstraintBreach(exc.channel or 1, t, str(exc)) from exc
    except NonFiniteError as exc:
        raise NonFiniteState(t, str(exc)) from exc


def _check_initial(controller: Controller, x0, z0):
    bad = controller.check_admissible(z0)
    if bad is not None:
        k = controller.channels[bad - 1].k
        raise InadmissibleInitialCondition(
            f"|z{bad}(0)|={abs(z0[bad - 1]):.6g} is not below k{bad}={k:.6g}", channel=bad
        )
    for i, kx in enumerate(controller.config.constraint_box):
        if kx is not None and i < len(x0) and not abs(x0[i]) < kx:
            raise InadmissibleInitialCondition(
                f"|x{i + 1}(0)|={abs(x0[i]):.6g} violates the state constraint k_x{i + 1}={kx:.6g}",
                channel=i + 1,
            )


def _time_grid(integ: IntegratorConfig, t0: float):
    steps = max(1, math.ceil(integ.t_final / integ.h - 1e-9))
    return steps, [t0 + j * integ.h for j in range(steps)] + [t0 + integ.t_final]


def _integrate(rhs_aux, rhs, y0, t0, integ, record):
    """Drive RK4 or RKF45; ``rhs_aux(t, y)`` returns ``(dy, aux)`` for recording."""
    y = list(y0)
    if integ.method == RK4:
        steps, grid = _time_grid(integ, t0)
        for j in range(steps):
            t = grid[j]
            dy, aux = _guard(lambda: rhs_aux(t, y), t)
            if j % integ.stride == 0:
                record(t, y, aux)
            h = grid[j + 1] - t
            y = _guard(lambda: rk4_step(rhs, y, t, h, k1=dy), t)
        t = grid[-1]
        _, aux = _guard(lambda: rhs_aux(t, y), t)
        record(t, y, aux)
        return

    t, t_end, h = t0, t0 + integ.t_final, integ.h
    j = 0
    while True:
        dy, aux = _guard(lambda: rhs_aux(t, y), t)
        if j % integ.stride == 0:
            record(t, y, aux)
        if t >= t_end:
            return
        while True:
            h = min(h, t_end - t)
            failure = None
            try:
                y_new, err = rkf45_step(rhs, y, t, h, k1=dy)
                bad = not _finite(y_new)
            except (DomainError, NonFiniteError) as exc:
                bad, failure = True, exc
            if not bad:
                scale = [integ.abs_tol + integ.rel_tol * max(abs(a), abs(b)) for a, b in zip(y, y_new)]
                enorm = max(abs(e) / s for e, s in zip(err, scale))
                if enorm <= 1.0:
                    break
                h *= min(0.9, max(0.2, 0.9 * enorm ** -0.25))
            else:
                h *= 0.25
            if h < integ.h_min:
                if isinstance(failure, DomainError):
                    raise ConstraintBreach(failure.channel or 1, t, str(failure)) from failure
                raise NonFiniteState(t, "adaptive step size underflow")
        t_next = t + h
        if t_end - t_next < 1e-12 * max(1.0, abs(t_end)):
            t_next = t_end
        t, y = t_next, y_new
        j += 1
        h *= min(5.0, max(1.0, 0.9 * enorm ** -0.2)) if enorm > 0 else 5.0


def _metadata(controller: Controller, integ: IntegratorConfig, space, extra):
    cfg = controller.config
    meta = {
        "space": space,
        "design": cfg.design.value,
        "coupling": cfg.coupling.value,
        "kappa": list(cfg.kappa),
        "barriers": [{"kind": b.kind.value, "k": b.k, "beta": b.beta} for b in cfg.barriers],
        "constraint_box": list(cfg.constraint_box),
        "plant": controller.model.name,
        "reference": controller.ref.name,
        "integrator": {
            "method": integ.method, "h": integ.h, "t_final": integ.t_final,
            "abs_tol": integ.abs_tol, "rel_tol": integ.rel_tol, "stride": integ.stride,
        },
    }
    meta.update(extra or {})
    return meta


def simulate_x_space(controller: Controller, x0, integ: IntegratorConfig, t0=0.0, metadata=None) -> TrajectoryRecord:
    """Integrate plant + control law; the control is recomputed at every stage."""
    x0 = [float(v) for v in x0]
    if len(x0) != controller.n:
        raise ConfigError(f"initial state needs {controller.n} entries")
    try:
        ev = controller.errors(x0, t0)
    except DomainError as exc:
        raise InadmissibleInitialCondition(str(exc), channel=exc.channel) from exc
    _check_initial(controller, x0, ev.z)

    rec = StepRecorder()

    def rhs_aux(t, x):
        xdot, u, ev = controller.closed_loop(x, t)
        return xdot, (u, ev)

    def rhs(t, x):
        return controller.closed_loop(x, t)[0]

    def record(t, x, aux):
        u, ev = aux
        z = ev.z
        rec.add(t, list(x), list(z), list(ev.alpha[:-1]), u, controller.lyapunov(z),
                controller.lyapunov_rate(z, t, x))

    _integrate(rhs_aux, rhs, x0, t0, integ, record)
    return TrajectoryRecord.from_recorder(rec, _metadata(controller, integ, "x", {"x0": x0, **(metadata or {})}))


def simulate_z_space(controller: Controller, z0, integ: IntegratorConfig, t0=0.0, metadata=None) -> TrajectoryRecord:
    """Integrate the closed-loop error dynamics directly.

    States, stabilizing functions and the input are reconstructed from ``z``
    at each recorded sample.
    """
    z0 = [float(v) for v in z0]
    n = controller.n
    if len(z0) != n:
        raise ConfigError(f"initial error needs {n} entries")
    try:
        x0 = controller.reconstruct_x(z0, t0)
    except DomainError as exc:
        raise InadmissibleInitialCondition(str(exc), channel=exc.channel) from exc
    _check_initial(controller, x0, z0)

    rec = StepRecorder()
    m = max(n - 1, 1)

    def rhs(t, z):
        return controller.closed_loop_z_rhs(z, t, controller.reconstruct_x(z, t, m))

    def rhs_aux(t, z):
        return rhs(t, z), None

    def record(t, z, _aux):
        x = controller.reconstruct_x(z, t)
        u, ev = controller.control(x, t)
        rec.add(t, x, list(z), list(ev.alpha[:-1]), u, controller.lyapunov(z),
                controller.lyapunov_rate(z, t, x))

    _integrate(rhs_aux, rhs, z0, t0, integ, record)
    return TrajectoryRecord.from_recorder(rec, _metadata(controller, integ, "z", {"z0": z0, **(metadata or {})}))


def is_uniform(t, rtol=1e-9) -> bool:
    if len(t) < 3:
        return True
    d = np.diff(t)
    return bool(np.all(np.abs(d[:-1] - d[0]) <= rtol * max(abs(d[0]), 1e-300)))


def time_derivative(t, v):
    """Numerical ``dv/dt`` at interior samples.

    Uses the five-point fourth-order central stencil on a uniform grid
    (samples 2..N-3) and second-order ``numpy.gradient`` otherwise.
    Returns ``(indices, derivative)``.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    N = len(t)
    if N < 5:
        return np.arange(0), np.zeros(0)
    if is_uniform(t[:-1]) and abs((t[-1] - t[-2]) - (t[1] - t[0])) <= 1e-9 * abs(t[1] - t[0]):
        h = t[1] - t[0]
        d = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * h)
        return np.arange(2, N - 2), d
    return np.arange(N), np.gradient(v, t, edge_order=2)


class Summary(NamedTuple):
    max_abs_x: tuple
    max_abs_z: tuple
    tail_sup_z1: float
    control_effort: float
    max_vdot_residual: float
    max_v_increase: float

    def as_dict(self):
        d = {}
        for i, v in enumerate(self.max_abs_x):
            d[f"max_abs_x{i + 1}"] = v
        for i, v in enumerate(self.max_abs_z):
            d[f"max_abs_z{i + 1}"] = v
        d["tail_sup_z1"] = self.tail_sup_z1
        d["control_effort"] = self.control_effort
        d["max_vdot_residual"] = self.max_vdot_residual
        d["max_v_increase"] = self.max_v_increase
        return d


def tail_mask(t, tail_fraction=0.2):
    t = np.asarray(t)
    t0, t1 = t[0], t[-1]
    return t >= t1 - tail_fraction * (t1 - t0) - 1e-12 * max(1.0, abs(t1))


def metrics(rec: TrajectoryRecord, tail_fraction: float = 0.2) -> Summary:
    """Summary figures of a run (tail window = last ``tail_fraction`` of the horizon)."""
    if len(rec) == 0:
        raise ValueError("empty record")
    t = rec.t
    idx, dv = time_derivative(t, rec.V)
    resid = float(np.max(np.abs(dv - rec.vdot_analytic[idx]))) if len(idx) else 0.0
    effort = float(np.sum(0.5 * (rec.u[1:] ** 2 + rec.u[:-1] ** 2) * np.diff(t))) if len(t) > 1 else 0.0
    inc = float(max(0.0, np.max(np.diff(rec.V)))) if len(t) > 1 else 0.0
    return Summary(
        max_abs_x=tuple(float(v) for v in np.max(np.abs(rec.x), axis=0)),
        max_abs_z=tuple(float(v) for v in np.max(np.abs(rec.z), axis=0)),
        tail_sup_z1=float(np.max(np.abs(rec.z[tail_mask(t, tail_fraction), 0]))),
        control_effort=effort,
        max_vdot_residual=resid,
        max_v_increase=inc,
    )

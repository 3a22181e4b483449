"""Empirical checks of the closed-loop guarantees on recorded trajectories.

Each check returns a :class:`Check` carrying the worst observed value, the
tolerance it was judged against and where (in time) the worst case happened.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import barrier as bl
from .errors import DomainError
from .sim import TrajectoryRecord, tail_mask, time_derivative

PRINTED = "printed"
PROOF_CONSISTENT = "proof-consistent"


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    tolerance: float
    t: Optional[float] = None
    claim: str = ""
    detail: str = ""


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)
    bounds: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "bounds": self.bounds,
        }

    def to_text(self) -> str:
        lines = [f"{'check':<34} {'result':<6} {'worst':>13} {'tolerance':>11} {'t':>9}  claim"]
        for c in self.checks:
            t = "" if c.t is None else f"{c.t:9.4f}"
            lines.append(
                f"{c.name:<34} {'PASS' if c.passed else 'FAIL':<6} {c.worst:13.6g} {c.tolerance:11.3g} {t:>9}  {c.claim}"
            )
            if c.detail:
                lines.append(f"    {c.detail}")
        for name, vals in self.bounds.items():
            txt = ", ".join("-" if v is None else f"{v:.10g}" for v in vals)
            lines.append(f"bound {name}: [{txt}]")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def theorem1_bound(Vn0: float, beta: float, k1: float) -> float:
    """Bound on ``|z1(t)|`` implied by ``V(t) <= V(0)`` with a log p-BLF on channel 1."""
    if Vn0 < 0 or not beta > 0 or not k1 > 0:
        raise ValueError("need Vn0 >= 0, beta > 0, k1 > 0")
    return k1 * math.sqrt(-math.expm1(-2.0 * beta * Vn0))


def theorem2_bound(z0: Sequence[float], k: Sequence[float], beta: float, variant: str = PROOF_CONSISTENT) -> list:
    """Per-channel error bounds for the full-state log p-BLF design.

    ``printed`` evaluates ``k_i sqrt(1 - e^(-2 beta V(0)) prod_j (k_j^2 - z_j0^2)/k_j^2)``
    literally; ``proof-consistent`` drops the exponential factor, which is
    what ``V(t) <= V(0)`` actually gives (the product already equals
    ``e^(-2 beta V(0))``).
    """
    if len(z0) != len(k):
        raise ValueError("z0 and k need the same length")
    for i, (zi, ki) in enumerate(zip(z0, k)):
        if not abs(zi) < ki:
            raise DomainError(f"|z{i + 1}(0)|={abs(zi):.6g} is not below k{i + 1}={ki:.6g}", channel=i + 1)
    prod = 1.0
    for zi, ki in zip(z0, k):
        prod *= (ki * ki - zi * zi) / (ki * ki)
    if variant == PROOF_CONSISTENT:
        inner = prod
    elif variant == PRINTED:
        V0 = sum(0.5 / beta * math.log(ki * ki / (ki * ki - zi * zi)) for zi, ki in zip(z0, k))
        inner = math.exp(-2.0 * beta * V0) * prod
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return [ki * math.sqrt(1.0 - inner) for ki in k]


def level_set_bound(p: bl.BarrierParams, V0: float, iterations: int = 200) -> float:
    """Largest ``|z|`` with ``V(z) <= V0`` for a single barrier channel.

    Uses bisection on ``[0, k)``; every supported kind is even and increasing
    in ``|z|`` (ZoneLog is not).
    """
    if V0 < 0:
        raise ValueError("V0 must be non-negative")
    lo, hi = 0.0, p.k
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if bl.value(p, mid) <= V0:
            lo = mid
        else:
            hi = mid
    return lo


def check_bounds(rec: TrajectoryRecord, bounds: Sequence[Optional[float]], slack: float = 1e-9,
                 name: str = "error_bounds", claim: str = "errors stay in the invariant set from V(0)") -> Check:
    """``|z_i(t)| <= D_i + slack`` at every sample; ``None`` skips a channel."""
    if len(bounds) != rec.n:
        raise ValueError(f"need {rec.n} bounds, got {len(bounds)}")
    worst_margin, worst_t, worst_ch = math.inf, None, None
    for i, D in enumerate(bounds):
        if D is None:
            continue
        margin = D - np.abs(rec.z[:, i])
        j = int(np.argmin(margin))
        if margin[j] < worst_margin:
            worst_margin, worst_t, worst_ch = float(margin[j]), float(rec.t[j]), i + 1
    if worst_ch is None:
        return Check(name, True, 0.0, slack, None, claim, "no bounded channels")
    return Check(name, worst_margin >= -slack, worst_margin, slack, worst_t, claim,
                 f"worst margin on channel {worst_ch}")


def check_quadratic_bound(rec: TrajectoryRecord, Vn0: float, slack: float = 1e-9) -> Check:
    """``sum_{i>=2} z_i^2 <= 2 V(0)`` for the output-constrained design."""
    if rec.n < 2:
        return Check("quadratic_energy_bound", True, 0.0, slack, None, "sum of z_i^2 (i>=2) within 2V(0)")
    energy = np.sum(rec.z[:, 1:] ** 2, axis=1)
    margin = 2.0 * Vn0 - energy
    j = int(np.argmin(margin))
    return Check("quadratic_energy_bound", bool(margin[j] >= -slack), float(margin[j]), slack, float(rec.t[j]),
                 "sum of z_i^2 (i>=2) within 2V(0)")


def check_vdot(rec: TrajectoryRecord, gains: Optional[Sequence[float]] = None, tolerance: float = 1e-6) -> Check:
    """Numerical ``dV/dt`` of the recorded ``V`` against the closed-form rate.

    With ``gains`` the target is ``-sum kappa_i z_i^2``; otherwise the
    record's own ``vdot_analytic`` series.
    """
    if gains is not None:
        target = -np.sum(np.asarray(gains, dtype=float) * rec.z**2, axis=1)
    else:
        target = rec.vdot_analytic
    idx, dv = time_derivative(rec.t, rec.V)
    claim = "dV/dt equals -sum kappa_i z_i^2" if gains is not None else "dV/dt equals its closed-form rate"
    if len(idx) == 0:
        return Check("vdot_identity", True, 0.0, tolerance, None, claim, "too few samples")
    resid = np.abs(dv - target[idx])
    j = int(np.argmax(resid))
    return Check("vdot_identity", bool(resid[j] <= tolerance), float(resid[j]), tolerance, float(rec.t[idx[j]]), claim)


def check_monotone(rec: TrajectoryRecord, slack: float = 1e-9) -> Check:
    claim = "V is non-increasing"
    if len(rec) < 2:
        return Check("lyapunov_monotone", True, 0.0, slack, None, claim)
    d = np.diff(rec.V)
    j = int(np.argmax(d))
    return Check("lyapunov_monotone", bool(d[j] <= slack), float(d[j]), slack, float(rec.t[j + 1]), claim)


def check_convergence(rec: TrajectoryRecord, tail_fraction: float = 0.2, threshold: float = 1e-2,
                      channels: Optional[Sequence[int]] = None, floor: float = 1e-9) -> Check:
    """Tail sup of ``|z_i|`` below ``threshold`` and not above the preceding window's sup.

    ``channels`` are 1-based; default is channel 1 only. The window comparison
    allows ``floor`` of absolute slack so round-off level tails do not fail it.
    """
    channels = (1,) if channels is None else tuple(channels)
    t = rec.t
    tail = tail_mask(t, tail_fraction)
    if not tail.any():
        raise ValueError("tail window is empty")
    t1, span = t[-1], tail_fraction * (t[-1] - t[0])
    mid = (t >= t1 - 2 * span - 1e-12) & ~tail
    claim = "tracking errors converge to zero"
    worst, worst_t, ok = 0.0, None, True
    notes = []
    for ch in channels:
        a = np.abs(rec.z[:, ch - 1])
        tail_sup = float(np.max(a[tail]))
        j = int(np.flatnonzero(tail)[np.argmax(a[tail])])
        mid_sup = float(np.max(a[mid])) if mid.any() else math.inf
        if tail_sup > threshold or tail_sup > mid_sup + floor:
            ok = False
            notes.append(f"z{ch}: tail sup {tail_sup:.3g}, preceding window sup {mid_sup:.3g}")
        if tail_sup >= worst:
            worst, worst_t = tail_sup, float(t[j])
    return Check("tail_convergence", ok, worst, threshold, worst_t, claim, "; ".join(notes))


def check_constraints(rec: TrajectoryRecord, k_x: Sequence[Optional[float]]) -> Check:
    """Strict ``|x_i(t)| < k_xi`` at every sample (``None`` = unconstrained)."""
    claim = "state constraints are never violated"
    worst_margin, worst_t = math.inf, None
    for i, kx in enumerate(k_x):
        if kx is None:
            continue
        margin = kx - np.abs(rec.x[:, i])
        j = int(np.argmin(margin))
        if margin[j] < worst_margin:
            worst_margin, worst_t = float(margin[j]), float(rec.t[j])
    if worst_t is None:
        return Check("state_constraints", True, 0.0, 0.0, None, claim, "no constrained channels")
    return Check("state_constraints", worst_margin > 0, worst_margin, 0.0, worst_t, claim)


def check_barrier_invariance(rec: TrajectoryRecord, k: Sequence[Optional[float]]) -> Check:
    """``|z_i| < k_i`` on every barrier channel (``None`` = quadratic channel)."""
    claim = "errors never leave the barrier set"
    worst_margin, worst_t = math.inf, None
    for i, ki in enumerate(k):
        if ki is None:
            continue
        margin = ki - np.abs(rec.z[:, i])
        j = int(np.argmin(margin))
        if margin[j] < worst_margin:
            worst_margin, worst_t = float(margin[j]), float(rec.t[j])
    if worst_t is None:
        return Check("barrier_invariance", True, 0.0, 0.0, None, claim)
    return Check("barrier_invariance", worst_margin > 0, worst_margin, 0.0, worst_t, claim)


def check_cross_simulation(rec_x: TrajectoryRecord, rec_z: TrajectoryRecord, tolerance: float = 1e-5) -> Check:
    """Sup-norm distance between the z-series of two runs on the same grid."""
    claim = "state-space and error-space closed loops coincide"
    if rec_x.z.shape != rec_z.z.shape or not np.allclose(rec_x.t, rec_z.t, rtol=0, atol=1e-12):
        return Check("cross_simulation", False, math.inf, tolerance, None, claim, "time grids differ")
    diff = np.max(np.abs(rec_x.z - rec_z.z), axis=1)
    j = int(np.argmax(diff))
    return Check("cross_simulation", bool(diff[j] <= tolerance), float(diff[j]), tolerance, float(rec_x.t[j]), claim)


def gradient_audit(params_list: Sequence[bl.BarrierParams], samples: int, gradient: Callable = None,
                   seed: int = 0, tolerance: float = 1e-6) -> Check:
    """Analytic barrier gradients against central differences of the value.

    Points are drawn uniformly from ``(-0.9k, 0.9k)``; the step is ``1e-6 k``
    and the error is ``|g - fd| / max(1, |g|)``.
    """
    grad = bl.gradient if gradient is None else gradient
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for p in params_list:
        h = 1e-6 * p.k
        for z in rng.uniform(-0.9 * p.k, 0.9 * p.k, size=samples):
            z = float(z)
            g = grad(p, z)
            fd = (bl.value(p, z + h) - bl.value(p, z - h)) / (2.0 * h)
            err = abs(g - fd) / max(1.0, abs(g))
            if err > worst:
                worst, where = err, f"{p.kind.value} k={p.k:g} beta={p.beta:g} z={z:.6g}"
    return Check("gradient_audit", worst <= tolerance, worst, tolerance, None,
                 "barrier gradients match finite differences", where)


def check_reference(report) -> Check:
    """Wrap a :func:`pblf.plant.check_assumption1` report."""
    over = [m - b for m, b in zip(report.max_abs, report.bounds)]
    j = int(np.argmax(over))
    detail = ", ".join(f"|yd^({i})| max {m:.6g} / bound {b:.6g}" for i, (m, b) in enumerate(zip(report.max_abs, report.bounds)))
    return Check("reference_bounds", report.ok, float(over[j]), 0.0, None,
                 "reference and its derivatives stay within declared bounds", detail)

import math

import numpy as np
import pytest

from pblf import barrier as bl
from pblf import plant
from pblf.controller import Controller, ControllerConfig
from pblf.errors import ConfigError, ConstraintBreach, InadmissibleInitialCondition, NonFiniteState
from pblf.sim import (
    IntegratorConfig,
    TrajectoryRecord,
    is_uniform,
    metrics,
    rk4_step,
    rkf45_step,
    simulate_x_space,
    simulate_z_space,
    time_derivative,
)


def benchmark_controller(design="output-constrained", kappa=(2.0, 2.0), k=(0.56,)):
    barriers = tuple(bl.BarrierParams("LogPBLF", ki, 10.0) for ki in k)
    cfg = ControllerConfig(design, kappa, barriers, (0.56, None))
    return Controller(cfg, plant.paper_plant(), plant.paper_reference())


def test_rk4_examples():
    assert rk4_step(lambda t, y: [0.0, 0.0], [1.0, 2.0], 0.0, 0.1) == [1.0, 2.0]
    y = rk4_step(lambda t, y: [y[0]], [1.0], 0.0, 0.1)[0]
    assert y == pytest.approx(1.105170833, abs=1e-9)
    assert abs(y - math.exp(0.1)) < 1e-7
    y = [1.0]
    for j in range(10):
        y = rk4_step(lambda t, y: [-y[0]], y, 0.1 * j, 0.1)
    # ten steps carry the per-step h^5/120 defect: about 3.3e-7 in total
    growth = 1 - 0.1 + 0.1**2 / 2 - 0.1**3 / 6 + 0.1**4 / 24
    assert y[0] == pytest.approx(growth**10, rel=1e-14)
    assert abs(y[0] - math.exp(-1.0)) < 4e-7


def test_rk4_errors():
    with pytest.raises(NonFiniteState):
        rk4_step(lambda t, y: [math.inf], [1.0], 0.0, 0.1)
    with pytest.raises(ConfigError):
        rk4_step(lambda t, y: [0.0], [1.0], 0.0, 0.0)


def test_rkf45_error_estimate():
    y4, err = rkf45_step(lambda t, y: [y[0]], [1.0], 0.0, 0.1)
    assert abs(y4[0] - math.exp(0.1)) < 1e-6
    assert 0 < abs(err[0]) < 1e-6


def test_integrator_config_validation():
    with pytest.raises(ConfigError):
        IntegratorConfig(h=0.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(t_final=-1.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(method="Euler")
    with pytest.raises(ConfigError):
        IntegratorConfig(abs_tol=0.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(stride=0)
    assert IntegratorConfig(method="rkf45").method == "RKF45"


def test_benchmark_run_record(oc_run):
    _, rec = oc_run
    assert len(rec) == 30001
    assert rec.t[-1] == 30.0
    assert np.max(np.abs(rec.x[:, 0])) < 0.56
    assert abs(rec.z[-1, 0]) < 1e-3
    assert np.all(rec.V >= 0) and np.all(rec.vdot_analytic <= 0)
    for a in (rec.t, rec.x, rec.z, rec.alpha, rec.u, rec.V, rec.vdot_analytic):
        assert np.all(np.isfinite(a))
    with pytest.raises(ValueError):
        rec.x[0, 0] = 1.0
    assert rec.metadata["space"] == "x"
    assert rec.metadata["integrator"]["h"] == 1e-3


def test_benchmark_metrics(oc_run):
    _, rec = oc_run
    s = metrics(rec)
    assert s.max_abs_x[0] < 0.56
    assert s.tail_sup_z1 < 1e-2
    assert s.max_vdot_residual <= 1e-6
    assert s.max_v_increase <= 1e-9


def test_inadmissible_initial_error():
    c = benchmark_controller()
    with pytest.raises(InadmissibleInitialCondition):
        simulate_x_space(c, (0.2 + 0.6, 0.0), IntegratorConfig(t_final=0.1))
    with pytest.raises(InadmissibleInitialCondition):
        simulate_z_space(c, (0.6, 0.0), IntegratorConfig(t_final=0.1))
    with pytest.raises(InadmissibleInitialCondition) as ei:
        simulate_x_space(c, (0.7, 1.5), IntegratorConfig(t_final=0.1))
    assert ei.value.channel == 1


def test_zero_error_is_equilibrium():
    c = benchmark_controller()
    rec = simulate_z_space(c, (0.0, 0.0), IntegratorConfig(t_final=2.0))
    assert np.all(rec.z == 0.0)


def test_full_state_z_space_stays_in_barriers():
    c = benchmark_controller("full-state", k=(0.56, 2.0))
    rec = simulate_z_space(c, (0.05, 0.5), IntegratorConfig(h=1e-3, t_final=10.0))
    assert np.max(np.abs(rec.z[:, 0])) < 0.56
    assert np.max(np.abs(rec.z[:, 1])) < 2.0


def test_tiny_gain_drift_or_breach():
    c = benchmark_controller(kappa=(1e-6, 1e-6))
    try:
        rec = simulate_x_space(c, (0.55, 3.0), IntegratorConfig(h=1e-3, t_final=5.0))
    except ConstraintBreach as exc:
        assert exc.channel == 1
        assert 0.0 < exc.t <= 5.0
    else:
        assert np.max(np.abs(rec.z[:, 0])) < 0.56


def test_breach_reported_with_channel():
    # a large initial z2 pushes z1 against a narrow barrier faster than RK4 at h=0.05 can follow
    barriers = (bl.BarrierParams("LogPBLF", 0.06, 10.0),)
    cfg = ControllerConfig("output-constrained", (2.0, 2.0), barriers, (0.56, None))
    c = Controller(cfg, plant.paper_plant(), plant.paper_reference())
    with pytest.raises(ConstraintBreach) as ei:
        simulate_x_space(c, (0.25, 1.5), IntegratorConfig(h=0.05, t_final=5.0))
    assert ei.value.channel == 1


def test_rkf45_survives_narrow_barrier():
    barriers = (bl.BarrierParams("LogPBLF", 0.06, 10.0),)
    cfg = ControllerConfig("output-constrained", (2.0, 2.0), barriers, (0.56, None))
    c = Controller(cfg, plant.paper_plant(), plant.paper_reference())
    rec = simulate_x_space(c, (0.25, 1.5), IntegratorConfig(method="RKF45", h=1e-3, t_final=10.0))
    assert np.max(np.abs(rec.z[:, 0])) < 0.06
    assert rec.t[-1] == 10.0
    assert np.max(np.abs(rec.x[:, 0])) < 0.56


def test_x_and_z_space_agree_short_run():
    c = benchmark_controller()
    integ = IntegratorConfig(h=1e-3, t_final=3.0)
    rx = simulate_x_space(c, (0.25, 1.5), integ)
    rz = simulate_z_space(c, rx.z[0], integ)
    assert np.max(np.abs(rx.z - rz.z)) < 1e-9
    assert np.max(np.abs(rx.x - rz.x)) < 1e-9


def test_stride_and_determinism():
    c = benchmark_controller()
    a = simulate_x_space(c, (0.25, 1.5), IntegratorConfig(h=1e-3, t_final=1.0, stride=10))
    b = simulate_x_space(c, (0.25, 1.5), IntegratorConfig(h=1e-3, t_final=1.0, stride=10))
    assert len(a) == 101
    assert np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u)


def test_wrong_state_length():
    c = benchmark_controller()
    with pytest.raises(ConfigError):
        simulate_x_space(c, (0.25,), IntegratorConfig(t_final=0.1))


def make_record(t, z=None, u=None, V=None):
    t = np.asarray(t, dtype=float)
    N = len(t)
    zeros = np.zeros((N, 2))
    z = zeros if z is None else z
    return TrajectoryRecord.from_arrays(
        t, zeros, z, np.zeros((N, 1)), np.zeros(N) if u is None else u,
        np.zeros(N) if V is None else V, np.zeros(N),
    )


def test_metrics_trivial():
    rec = make_record(np.linspace(0, 30, 301))
    s = metrics(rec)
    assert all(v == 0.0 for v in s.as_dict().values())
    rec = make_record(np.linspace(0, 30, 301), u=np.ones(301))
    assert metrics(rec).control_effort == pytest.approx(30.0)


def test_record_validation():
    with pytest.raises(ValueError):
        TrajectoryRecord.from_arrays([0, 1], np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 1)),
                                     np.zeros(3), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        metrics(make_record([]))


def test_time_derivative_fourth_order():
    t = np.linspace(0, 1, 101)
    idx, d = time_derivative(t, np.sin(3 * t))
    assert np.max(np.abs(d - 3 * np.cos(3 * t[idx]))) < 1e-6
    assert is_uniform(t)
    tn = np.concatenate([[0.0], np.cumsum(np.linspace(0.01, 0.02, 60))])
    assert not is_uniform(tn)
    idx, d = time_derivative(tn, tn**2)
    assert np.allclose(d, 2 * tn[idx])


def test_errors_survive_pickling():
    import pickle

    e = pickle.loads(pickle.dumps(ConstraintBreach(2, 1.5, "z2")))
    assert (e.channel, e.t, str(e)) == (2, 1.5, "barrier breach on channel 2 at t=1.5: z2")
    e = pickle.loads(pickle.dumps(NonFiniteState(0.25)))
    assert e.t == 0.25

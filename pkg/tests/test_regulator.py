import numpy as np
import pytest
from hypothesis import given, strategies as st

from refab.control import CostWeights, RiccatiKernel, solve_riccati_steady
from refab.errors import DimensionMismatch
from refab.linear import LinearModel, build_ladder
from refab.regulator import (
    Exosystem,
    Stage,
    StagedController,
    build_staged_controller,
    exo_state,
    feedforward_gain,
    reference,
    regulator_residual,
    run_linear_tracking,
    run_tracking,
    solve_regulator,
    stage_control,
)
from refab.transport import DensityField, VelocityParams, grid

V1 = 8 / 3


def rk4(S, w0, t, steps=2000):
    w, h = np.array(w0, float), t / steps
    for _ in range(steps):
        k1 = S @ w
        k2 = S @ (w + h / 2 * k1)
        k3 = S @ (w + h / 2 * k2)
        k4 = S @ (w + h * k3)
        w = w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return w


def test_exo_zero_block():
    assert exo_state(Exosystem.step(2.0), 7.3) == pytest.approx([1.0])


def test_exo_rotation_quarter_turn():
    exo = Exosystem((2 * np.pi,), [1.0, 0.0], [1.0, 0.0])
    np.testing.assert_allclose(exo_state(exo, 0.25), [0.0, -1.0], atol=1e-15)
    np.testing.assert_allclose(exo_state(exo, 0.25), rk4(exo.S, exo.w0, 0.25), atol=1e-12)


@given(
    omegas=st.lists(st.floats(0.0, 10.0), min_size=1, max_size=3),
    t=st.floats(0.0, 20.0),
    seed=st.integers(0, 1000),
)
def test_exo_closed_form_properties(omegas, t, seed):
    rng = np.random.default_rng(seed)
    n = sum(1 if w == 0 else 2 for w in omegas)
    exo = Exosystem(tuple(omegas), rng.standard_normal(n), rng.standard_normal(n))
    np.testing.assert_array_equal(exo_state(exo, 0.0), exo.w0)
    w = exo_state(exo, t)
    assert np.linalg.norm(w) == pytest.approx(np.linalg.norm(exo.w0), rel=1e-12, abs=1e-14)
    assert np.allclose(np.real(np.linalg.eigvals(exo.S)), 0.0)
    if t < 2.0:
        np.testing.assert_allclose(w, rk4(exo.S, exo.w0, t), atol=1e-9)


def test_exo_validation():
    with pytest.raises(DimensionMismatch):
        Exosystem((1.0,), [1.0], [1.0])
    with pytest.raises(ValueError):
        Exosystem((-1.0,), [1.0, 0.0], [1.0, 0.0])


def test_step_regulator_is_constant():
    sol = solve_regulator(V1, Exosystem.step(V1 * 0.5), 100)
    np.testing.assert_allclose(sol.m_of_z, 0.5, rtol=1e-15)
    sol = solve_regulator(2.4, Exosystem.step(3.0), 100)
    np.testing.assert_allclose(sol.m_of_z, 3.0 / 2.4, rtol=1e-15)


@pytest.mark.parametrize("omega", [0.5, 2 * np.pi])
def test_rotation_regulator(omega):
    exo = Exosystem((omega,), [1.0, 0.0], [1.0, 0.0])
    sol = solve_regulator(V1, exo, 400)
    z = grid(400)
    phase = omega * (1 - z) / V1
    np.testing.assert_allclose(sol.m_of_z, np.c_[np.cos(phase), np.sin(phase)] / V1, atol=1e-15)
    np.testing.assert_array_equal(sol.m_of_z[-1], exo.q_r / V1)
    assert np.max(np.abs(regulator_residual(sol, exo))) <= 1e-10


def test_feedforward_gain_examples():
    n = 200
    z = grid(n)
    m = solve_regulator(V1, Exosystem.step(V1 * 0.5), n)
    assert feedforward_gain(None, m, 1.0) == pytest.approx([0.5])
    zero = RiccatiKernel(np.zeros((n + 1, n + 1)), V1, CostWeights())
    assert feedforward_gain(zero, m, 1.0) == pytest.approx([0.5])
    values = np.zeros((n + 1, n + 1))
    values[0] = 1 - z
    k = RiccatiKernel(values, V1, CostWeights())
    assert feedforward_gain(k, m, 1.0)[0] == pytest.approx(0.5 * (1 + 3 / 16), rel=1e-13)
    m0 = solve_regulator(V1, Exosystem.step(0.0), n)
    assert feedforward_gain(k, m0, 1.0) == pytest.approx([0.0])
    with pytest.raises(DimensionMismatch):
        feedforward_gain(k, solve_regulator(V1, Exosystem.step(1.0), n // 2), 1.0)


def _stage(model, level, n, kernel=None, R=1.0):
    exo = Exosystem.step(level)
    ff = solve_regulator(model.v_bar, exo, n)
    ff.m_w = feedforward_gain(kernel, ff, R)
    return Stage(model, exo, ff, kernel)


def test_stage_control_examples():
    n = 100
    model = LinearModel(V1, 1.5)
    st1 = _stage(model, V1 * 1.0, n)
    u, clamped = stage_control(st1, DensityField.constant(1.5, n), 1.0, np.array([1.0]))
    assert u == pytest.approx(4 + 8 / 3, rel=1e-14) and not clamped
    neg = _stage(model, -10.0, n)
    u, clamped = stage_control(neg, DensityField.constant(1.5, n), 1.0, np.array([1.0]))
    assert u == 0.0 and clamped


def test_hold_steady_state(fab):
    n = 200
    lad = build_ladder(fab, 1.5, 2.5, 3)
    stages = [_stage(m, 0.0, n) for m in lad.models[:-1]]
    ctrl = StagedController(lad, stages, 1.0)
    series = run_tracking(fab, ctrl, DensityField.constant(1.5, n), 5.0, 1 / (4 * n))
    assert np.max(np.abs(series.y - 4.0)) <= 1e-6
    assert np.all(series.extra["stage"] == 0)


def test_controller_stage_count(fab):
    lad = build_ladder(fab, 1.5, 2.5, 3)
    with pytest.raises(DimensionMismatch):
        StagedController(lad, [], 1.0)


@given(q0=st.sampled_from([0.0, 1.0, 30.0]), d=st.integers(2, 5), target=st.floats(2.0, 4.0))
def test_stage_index_never_decreases(q0, d, target):
    fab = VelocityParams(4.0, 0.5, 3)
    n = 40
    lad = build_ladder(fab, 1.5, target, d)
    ctrl = build_staged_controller(fab, lad, CostWeights(q0=q0), n)
    series = run_tracking(fab, ctrl, DensityField.constant(1.5, n), 6.0, 1 / (4 * n), engage_time=0.5, u_hold=4.0)
    stages = series.extra["stage"]
    assert np.all(np.diff(stages) >= 0)
    assert stages.max() <= d - 2
    assert np.all(series.u >= 0)


def test_linear_tracking_pure_delay():
    n = 200
    model = LinearModel(V1, 1.5)
    stage = _stage(model, V1 * 0.5, n)
    dt = 1 / (n * V1)  # the linear plant's own step: one cell per step
    t, _, u, y = run_linear_tracking(model, stage, np.zeros(n + 1), 2.0, dt)
    late = t > 1 / V1 + 2 * dt
    assert np.max(np.abs(y[late] - V1 * 0.5)) <= 1e-6
    np.testing.assert_allclose(u, V1 * 0.5)


def test_linear_tracking_with_kernel_converges():
    n = 100
    model = LinearModel(V1, 1.5)
    w = CostWeights(q0=5.0)
    kernel = solve_riccati_steady(model, w, n)
    stage = _stage(model, V1 * 0.5, n, kernel)
    t, state, u, y = run_linear_tracking(model, stage, 0.3 * np.sin(np.pi * grid(n)), 10.0)
    assert abs(y[-1] - V1 * 0.5) <= 1e-6


def test_linear_tracking_sinusoid():
    n = 200
    model = LinearModel(V1, 1.5)
    exo = Exosystem.step_and_sine(V1 * 0.5, 0.3, 2.0)
    ff = solve_regulator(model.v_bar, exo, n)
    ff.m_w = feedforward_gain(None, ff, 1.0)
    stage = Stage(model, exo, ff)
    dt = 1 / (n * V1)  # exact shift
    t, _, _, y = run_linear_tracking(model, stage, np.zeros(n + 1), 3.0, dt)
    late = t > 1 / V1 + 2 * dt
    ref = np.array([reference(exo, s) for s in t])
    assert np.max(np.abs(y[late] - ref[late])) <= 1e-12


def test_error_system():
    model = LinearModel(V1, 1.5)
    w = CostWeights(q0=3.0)
    exo = Exosystem.step_and_sine(V1 * 0.5, 0.3, 2.0)
    residuals = []
    for n in (50, 100, 200):
        kernel = solve_riccati_steady(model, w, n)
        ff = solve_regulator(model.v_bar, exo, n)
        ff.m_w = feedforward_gain(kernel, ff, w.R)
        stage = Stage(model, exo, ff, kernel)
        dt = 0.8 / (n * V1)
        t, rho, _, _ = run_linear_tracking(model, stage, 0.2 * np.cos(np.pi * grid(n)), 2.0, dt)
        ws = np.array([exo_state(exo, s) for s in t])
        e = rho - ws @ ff.m_of_z.T
        theta = V1 * dt * n
        transport = e[1:, 1:] - ((1 - theta) * e[:-1, 1:] + theta * e[:-1, :-1])
        residuals.append(np.max(np.abs(transport)))
        # boundary relation: v e(0, t) = -(1/R) int P(0, y) e(y, t) dy
        gains = stage.gain_row(w.R)
        boundary = model.v_bar * e[:, 0] + e @ gains
        assert np.max(np.abs(boundary)) <= 1e-10
    assert residuals[0] / residuals[1] > 1.8 and residuals[1] / residuals[2] > 1.8


def test_run_tracking_records_demand(fab):
    n = 50
    lad = build_ladder(fab, 1.5, 2.5, 2)
    ctrl = build_staged_controller(fab, lad, CostWeights(q0=0.0), n)
    s = run_tracking(fab, ctrl, DensityField.constant(1.5, n), 3.0, 1 / (4 * n), engage_time=1.0, u_hold=4.0)
    assert np.all(s.extra["d_r"][s.times < 1.0] == 4.0)
    assert np.allclose(s.extra["d_r"][s.times >= 1.0], 60 / 11)
    assert np.all(s.u[s.times < 1.0] == 4.0)
    np.testing.assert_allclose(s.e, s.y - s.extra["d_r"])

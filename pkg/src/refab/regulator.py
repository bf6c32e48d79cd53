"""Demand tracking: exosystem, regulator equations, feedforward and staged laws.

The reference is generated by w' = S w, r = q_r . w with S block diagonal
(1x1 zero blocks for steps, 2x2 rotation generators for sinusoids).  For a
frozen speed v the regulator equation v m'(z) + m(z) S = 0, m(1) = q_r / v
has the closed form m(z) = (q_r / v) exp(S (1 - z) / v), evaluated per block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .control import CostWeights, RiccatiKernel, simulate_feedback, solve_riccati_steady
from .errors import DimensionMismatch, NonPositiveVelocity, ResolutionViolation
from .kernels import BAD_RESOLUTION, BAD_VELOCITY, impl
from .linear import LinearModel, StageLadder
from .transport import (
    DensityField,
    TimeSeries,
    VelocityParams,
    check_resolution,
    grid,
    time_grid,
    trapezoid_weights,
)


@dataclass(frozen=True)
class Exosystem:
    """Signal model; ``frequencies[b] == 0`` is a step block, otherwise a rotation."""

    frequencies: tuple
    w0: np.ndarray
    q_r: np.ndarray

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.frequencies)
        if any(f < 0 for f in freqs):
            raise ValueError("block frequencies must be >= 0")
        n = sum(1 if f == 0 else 2 for f in freqs)
        w0 = np.asarray(self.w0, dtype=float).reshape(-1)
        q_r = np.asarray(self.q_r, dtype=float).reshape(-1)
        if w0.size != n or q_r.size != n:
            raise DimensionMismatch(f"blocks need state dimension {n}, got w0={w0.size}, q_r={q_r.size}")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "q_r", q_r)

    @classmethod
    def step(cls, level: float) -> "Exosystem":
        return cls((0.0,), [1.0], [level])

    @classmethod
    def step_and_sine(cls, level: float, amplitude: float, omega: float) -> "Exosystem":
        """r(t) = level + amplitude * sin(omega t)."""
        return cls((0.0, omega), [1.0, 0.0, 1.0], [level, amplitude, 0.0])

    @property
    def dim(self) -> int:
        return self.w0.size

    def blocks(self):
        """Yield ``(offset, omega)`` per block."""
        offset = 0
        for f in self.frequencies:
            yield offset, f
            offset += 1 if f == 0 else 2

    @property
    def S(self) -> np.ndarray:
        s = np.zeros((self.dim, self.dim))
        for i, f in self.blocks():
            if f != 0:
                s[i, i + 1] = f
                s[i + 1, i] = -f
        return s


def _rotate_rows(rows: np.ndarray, exo: Exosystem, s: np.ndarray) -> np.ndarray:
    """rows @ exp(S s) for every entry of ``s`` (rows broadcast against s)."""
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape + (exo.dim,))
    for i, f in exo.blocks():
        if f == 0:
            out[..., i] = rows[..., i]
            continue
        a, b = rows[..., i], rows[..., i + 1]
        c, sn = np.cos(f * s), np.sin(f * s)
        out[..., i] = a * c - b * sn
        out[..., i + 1] = a * sn + b * c
    return out


def exo_state(exo: Exosystem, t: float) -> np.ndarray:
    """w(t) = exp(S t) w0, plane rotation by omega*t per 2x2 block."""
    out = exo.w0.copy()
    for i, f in exo.blocks():
        if f != 0:
            a, b = exo.w0[i], exo.w0[i + 1]
            c, sn = np.cos(f * t), np.sin(f * t)
            out[i] = c * a + sn * b
            out[i + 1] = -sn * a + c * b
    return out


def reference(exo: Exosystem, t: float) -> float:
    return float(exo.q_r @ exo_state(exo, t))


@dataclass
class FeedforwardSolution:
    m_of_z: np.ndarray
    v_bar: float
    m_w: Optional[np.ndarray] = None

    @property
    def n_cells(self) -> int:
        return self.m_of_z.shape[0] - 1


def solve_regulator(v_bar: float, exo: Exosystem, n_cells: int) -> FeedforwardSolution:
    if not v_bar > 0:
        raise ValueError("v_bar must be > 0")
    z = grid(n_cells)
    rows = np.broadcast_to(exo.q_r / v_bar, (z.size, exo.dim))
    return FeedforwardSolution(_rotate_rows(rows, exo, (1.0 - z) / v_bar), float(v_bar))


def regulator_residual(sol: FeedforwardSolution, exo: Exosystem) -> np.ndarray:
    """v m' + m S at nodes 2..N-2, m' by fourth-order central differences."""
    n = sol.n_cells
    m = sol.m_of_z
    dm = (m[:-4] - 8.0 * m[1:-3] + 8.0 * m[3:-1] - m[4:]) * (n / 12.0)
    return sol.v_bar * dm + m[2:-2] @ exo.S


def feedforward_gain(kernel: Optional[RiccatiKernel], mz: FeedforwardSolution, R: float) -> np.ndarray:
    """m_w = (1 / (v R)) int P(0, y) m(y) dy + m(0); ``kernel=None`` means P = 0."""
    if kernel is None:
        return mz.m_of_z[0].copy()
    if kernel.values.shape[1] != mz.m_of_z.shape[0]:
        raise DimensionMismatch("kernel and m(z) live on different grids")
    w = trapezoid_weights(mz.n_cells)
    integral = (w * kernel.boundary_row()) @ mz.m_of_z
    return integral / (mz.v_bar * R) + mz.m_of_z[0]


@dataclass
class Stage:
    model: LinearModel
    exo: Exosystem
    feedforward: FeedforwardSolution
    kernel: Optional[RiccatiKernel] = None

    def gain_row(self, R: float) -> np.ndarray:
        if self.kernel is None:
            return np.zeros(self.feedforward.m_of_z.shape[0])
        return trapezoid_weights(self.kernel.n_cells) * self.kernel.boundary_row() / R


def stage_control(stage: Stage, rho: DensityField, R: float, w: np.ndarray):
    """Nominal flux + optimal feedback on rho - rho_bar + feedforward; returns ``(u, clamped)``."""
    vals = rho.values if isinstance(rho, DensityField) else np.asarray(rho, float)
    model = stage.model
    u = (
        model.nominal_flux
        - stage.gain_row(R) @ (vals - model.rho_bar)
        + model.v_bar * float(stage.feedforward.m_w @ w)
    )
    if u < 0:
        return 0.0, True
    return float(u), False


@dataclass
class StagedController:
    """One kernel / feedforward pair per ladder step k = 1..d-1."""

    ladder: StageLadder
    stages: List[Stage]
    R: float
    amplitude: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if len(self.stages) != self.ladder.d - 1:
            raise DimensionMismatch(f"need {self.ladder.d - 1} stages, got {len(self.stages)}")

    @property
    def target_flux(self) -> float:
        return self.ladder.stage_velocities[-1] * self.ladder.rho_levels[-1]

    def demand(self, t_since_engage: np.ndarray) -> np.ndarray:
        return self.target_flux + self.amplitude * np.sin(self.omega * np.asarray(t_since_engage))


def build_staged_controller(
    params: VelocityParams,
    ladder: StageLadder,
    weights: CostWeights,
    n_cells: int,
    amplitude: float = 0.0,
    omega: float = 0.0,
    kernel_source=None,
) -> StagedController:
    """Solve the per-stage Riccati kernels and regulator equations.

    ``kernel_source(model)``, when given, supplies kernels (e.g. a cache).
    Stage k tracks v_k * delta_rho (+ a sinusoid when ``amplitude`` != 0).
    """
    stages = []
    for model in ladder.models[:-1]:
        level = model.v_bar * ladder.delta_rho
        if amplitude:
            exo = Exosystem.step_and_sine(level, amplitude, omega)
        else:
            exo = Exosystem.step(level)
        if weights.q0 == 0 and weights.pf_kind == "zero":
            kernel = None
        elif kernel_source is not None:
            kernel = kernel_source(model)
        else:
            kernel = solve_riccati_steady(model, weights, n_cells)
        ff = solve_regulator(model.v_bar, exo, n_cells)
        ff.m_w = feedforward_gain(kernel, ff, weights.R)
        stages.append(Stage(model, exo, ff, kernel))
    return StagedController(ladder, stages, weights.R, amplitude, omega)


def run_tracking(
    plant: VelocityParams,
    controller: StagedController,
    rho0: DensityField,
    T: float,
    dt: float,
    engage_time: float = 0.0,
    u_hold: Optional[float] = None,
) -> TimeSeries:
    """Closed loop of the staged law on the nonlinear plant.

    Before ``engage_time`` the influx is held at ``u_hold`` (default: the
    first stage's nominal flux).  Afterwards stage k advances the first time
    rho(1, t) >= rho_bar_{k+1} and never goes back; negative law values are
    clamped to zero and flagged in ``extra["clamped"]``.
    """
    n_cells = rho0.n_cells
    check_resolution(dt, n_cells, plant.top_speed)
    times = time_grid(T, dt)
    first = controller.stages[0].model
    if u_hold is None:
        u_hold = first.nominal_flux
    engage = int(np.searchsorted(times, engage_time - 1e-12))
    since = np.maximum(times - times[min(engage, times.size - 1)], 0.0)
    n_st = len(controller.stages)
    rho_bars = np.array([s.model.rho_bar for s in controller.stages])
    nominal = np.array([s.model.nominal_flux for s in controller.stages])
    gains = np.array([s.gain_row(controller.R) for s in controller.stages])
    if gains.shape[1] != n_cells + 1:
        raise DimensionMismatch("controller grid does not match the plant grid")
    ff = np.empty((n_st, times.size))
    for k, s in enumerate(controller.stages):
        ws = np.array([exo_state(s.exo, t) for t in since])
        ff[k] = s.model.v_bar * (ws @ s.feedforward.m_w)
    switch = np.array(list(controller.ladder.rho_levels[1:n_st]) + [np.inf])
    code, p0, p1 = plant.kernel_args()
    L, v, y, u, stages, clamped, rho, status, step = impl.track(
        rho0.values, float(dt), 1.0 / n_cells, code, p0, p1, times.size - 1, engage,
        float(u_hold), rho_bars, nominal, gains, ff, switch,
    )
    if status == BAD_VELOCITY:
        raise NonPositiveVelocity(f"velocity dropped to <= 0 at t={times[step]}")
    if status == BAD_RESOLUTION:
        raise ResolutionViolation(f"shift exceeded one cell at t={times[step]}")
    d_r = np.where(np.arange(times.size) < engage, u_hold, controller.demand(since))
    series = TimeSeries(times, u, y, L, v, e=y - d_r)
    series.extra.update(d_r=d_r, stage=stages, clamped=clamped, rho_final=rho)
    return series


def run_linear_tracking(
    model: LinearModel,
    stage: Stage,
    rho_tilde0,
    T: float,
    dt: Optional[float] = None,
    R: float = 1.0,
):
    """Linear plant under the stage's feedback + feedforward.

    Returns ``(times, state, control, y_tilde)``.
    """
    rho0 = rho_tilde0.values if isinstance(rho_tilde0, DensityField) else np.asarray(rho_tilde0, float)
    n_cells = rho0.size - 1
    if dt is None:
        dt = 1.0 / (n_cells * model.v_bar)
    times = time_grid(T, dt)
    ws = np.array([exo_state(stage.exo, t) for t in times])
    ff = model.v_bar * (ws @ stage.feedforward.m_w)
    if stage.kernel is None:
        kernel = RiccatiKernel(np.zeros((n_cells + 1, n_cells + 1)), model.v_bar, CostWeights(q0=0.0, R=R))
    else:
        kernel = stage.kernel
    times, state, control = simulate_feedback(model, kernel, rho0, T, dt, feedforward=ff)
    return times, state, control, model.v_bar * state[:, -1]

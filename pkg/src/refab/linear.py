"""Frozen-velocity linearisation and the stage ladder.

Around a set point rho_bar the deviation rho - rho_bar is transported at the
constant speed v(rho_bar).  A ramp from rho_start to rho_target is split
into d equally spaced set points, each with its own frozen speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidLadder
from .transport import (
    DensityField,
    Influx,
    TimeSeries,
    VelocityParams,
    advect_constant,
    grid,
    sample_influx,
    simulate_nonlinear,
    steady_density_for_flux,
    time_grid,
    velocity,
    wip,
)


@dataclass(frozen=True)
class LinearModel:
    v_bar: float
    rho_bar: float

    def __post_init__(self):
        if not self.v_bar > 0:
            raise ValueError("v_bar must be > 0")

    @property
    def nominal_flux(self) -> float:
        return self.v_bar * self.rho_bar

    @property
    def transit_time(self) -> float:
        return 1.0 / self.v_bar


def linearize(params: VelocityParams, rho_bar: float) -> LinearModel:
    if rho_bar < 0:
        raise ValueError("rho_bar must be nonnegative")
    return LinearModel(v_bar=velocity(params, rho_bar), rho_bar=float(rho_bar))


@dataclass(frozen=True)
class StageLadder:
    rho_levels: tuple
    delta_rho: float
    stage_velocities: tuple

    @property
    def d(self) -> int:
        return len(self.rho_levels)

    @property
    def models(self):
        return [LinearModel(v, r) for r, v in zip(self.rho_levels, self.stage_velocities)]

    def counted_d(self) -> int:
        """Stage count recovered from the span: (rho_d - rho_1)/delta + 1."""
        span = self.rho_levels[-1] - self.rho_levels[0]
        return int(round(span / self.delta_rho)) + 1


def build_ladder(params: VelocityParams, rho_start: float, rho_target: float, d: int = 3) -> StageLadder:
    if int(d) != d or d < 2:
        raise InvalidLadder(f"d must be an integer >= 2, got {d}")
    if not rho_target > rho_start or not rho_start > 0:
        raise InvalidLadder("need rho_target > rho_start > 0")
    delta = (rho_target - rho_start) / (d - 1)
    levels = [rho_start + k * delta for k in range(d)]
    speeds = [velocity(params, r) for r in levels]
    return StageLadder(tuple(levels), delta, tuple(speeds))


def ladder_for_flux(params: VelocityParams, flux_start: float, flux_target: float, d: int = 3) -> StageLadder:
    return build_ladder(
        params,
        steady_density_for_flux(params, flux_start),
        steady_density_for_flux(params, flux_target),
        d,
    )


def simulate_linear(
    model: LinearModel,
    rho_tilde0: Union[DensityField, np.ndarray],
    u_tilde: Influx,
    T: float,
    dt: float,
    keep_history: bool = False,
):
    """Transport a deviation profile at speed v_bar.

    Returns ``(TimeSeries, final profile)``; ``L`` records the integrated
    deviation and ``v`` the constant speed.  Deviations may be negative.
    """
    rho = rho_tilde0.values if isinstance(rho_tilde0, DensityField) else np.asarray(rho_tilde0, float)
    times = time_grid(T, dt)
    u = sample_influx(u_tilde, times)
    y, loads, final, hist = advect_constant(rho, u, model.v_bar, dt, keep_history)
    series = TimeSeries(times, u, y, loads, np.full(times.shape, model.v_bar))
    if keep_history:
        series.extra["rho"] = hist
    return series, final


def linearization_discrepancy(
    params: VelocityParams,
    rho_bar: float,
    eps: float,
    n_cells: int = 100,
    transits: float = 2.0,
) -> float:
    """max_t |y_nonlinear - (v(rho_bar) rho_bar + y_linear)| for a raised-cosine wave.

    Both runs start from rho_bar + eps*h(z), h = (1 - cos 2 pi z)/2, and the
    inflow continues the same wave periodically.  Freezing the speed drops
    v'(rho_bar) rho_bar (L - rho_bar), so the discrepancy is O(eps^2) only
    around the empty line (rho_bar = 0); elsewhere it is O(eps).
    """
    model = linearize(params, rho_bar)
    vb = model.v_bar
    dt = 1.0 / (n_cells * params.top_speed)
    T = transits / vb
    shape0 = 0.5 * (1.0 - np.cos(2.0 * np.pi * grid(n_cells)))

    def wave(t):
        return eps * vb * 0.5 * (1.0 - np.cos(2.0 * np.pi * vb * t))

    lin, _ = simulate_linear(model, eps * shape0, wave, T, dt)
    nonlin, _ = simulate_nonlinear(
        params,
        DensityField(rho_bar + eps * shape0),
        lambda t: model.nominal_flux + wave(t),
        T,
        dt,
    )
    return float(np.max(np.abs(nonlin.y - (model.nominal_flux + lin.y))))


__all__ = [
    "LinearModel", "StageLadder", "linearize", "build_ladder", "ladder_for_flux",
    "simulate_linear", "linearization_discrepancy", "wip",
]

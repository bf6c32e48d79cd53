"""Mini-fab step-demand scenario, closed-loop metrics and parameter sweeps."""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from typing import List, Optional, Sequence

import numpy as np

from .control import CostWeights
from .errors import InfeasibleFlux, RefabError
from .linear import build_ladder
from .regulator import build_staged_controller, run_tracking
from .transport import DensityField, TimeSeries, VelocityParams, capacity, steady_density_for_flux

MINIFAB_FLUX_START = 4.0
MINIFAB_FLUX_TARGET = 60.0 / 11.0

# Large enough that the frozen-speed offset of the final stage stays inside
# the 2% band for d=3 (see README, "Weights").
MINIFAB_WEIGHTS = CostWeights(q0=100.0, R=1.0)

METRICS_HEADER = ("d", "N", "q0", "R", "dip", "settling", "terminal_error", "clamp_fraction")


def minifab_params() -> VelocityParams:
    """Six-step line, steps 4-6 revisiting the first group: P1 = 3h of P = 6h."""
    return VelocityParams(v_max=4.0, alpha=3.0 / 6.0, m=3)


@dataclass(frozen=True)
class MinifabScenario:
    params: VelocityParams = field(default_factory=minifab_params)
    flux_start: float = MINIFAB_FLUX_START
    flux_target: float = MINIFAB_FLUX_TARGET
    d: int = 3
    weights: CostWeights = MINIFAB_WEIGHTS
    n_cells: int = 200
    T: float = 10.0
    dt: Optional[float] = None
    step_time: float = 1.0
    band: float = 0.02
    amplitude: float = 0.0
    omega: float = 0.0
    rho_start: Optional[float] = None
    rho_target: Optional[float] = None

    def __post_init__(self):
        cap = capacity(self.params)
        for flux in (self.flux_start, self.flux_target):
            if not 0 < flux < cap:
                raise InfeasibleFlux(f"flux {flux} outside (0, {cap})")
        if self.flux_target + abs(self.amplitude) >= cap:
            raise InfeasibleFlux(f"peak demand {self.flux_target + abs(self.amplitude)} >= capacity {cap}")
        if self.n_cells < 2:
            raise ValueError("n_cells must be >= 2")
        if not self.T > 0 or not self.band > 0:
            raise ValueError("T and band must be > 0")

    @property
    def time_step(self) -> float:
        return self.dt if self.dt is not None else 1.0 / (self.n_cells * self.params.top_speed)

    def ladder(self):
        start = self.rho_start
        if start is None:
            start = steady_density_for_flux(self.params, self.flux_start)
        target = self.rho_target
        if target is None:
            target = steady_density_for_flux(self.params, self.flux_target)
        return build_ladder(self.params, start, target, self.d)


@dataclass(frozen=True)
class TrackingMetrics:
    """``dip_magnitude`` is y(step-) - min y over the first transit (> 0 when y dips).

    ``settling_time`` is None when |e| never stays inside the band.
    """

    dip_magnitude: float
    settling_time: Optional[float]
    terminal_error: float
    clamp_fraction: float

    @property
    def settled(self) -> bool:
        return self.settling_time is not None


def tracking_metrics(series: TimeSeries, step_time: float, first_speed: float, band: float) -> TrackingMetrics:
    t, y, e = series.times, series.y, series.e
    before = np.flatnonzero(t < step_time - 1e-12)
    y_pre = y[before[-1]] if before.size else y[0]
    window = (t > step_time + 1e-12) & (t < step_time + 1.0 / first_speed)
    dip = float(y_pre - y[window].min()) if window.any() else 0.0
    tol = band * abs(series.extra["d_r"][-1])
    outside = np.flatnonzero((np.abs(e) > tol) & (t >= step_time))
    if outside.size == 0:
        settling = float(step_time)
    elif outside[-1] == t.size - 1:
        settling = None
    else:
        settling = float(t[outside[-1] + 1])
    clamped = series.extra.get("clamped")
    clamp = float(np.mean(clamped)) if clamped is not None else 0.0
    return TrackingMetrics(dip, settling, float(abs(e[-1])), clamp)


def run_scenario(scenario: MinifabScenario, kernel_source=None):
    """Hold the start flux until ``step_time``, then hand over to the staged law."""
    ladder = scenario.ladder()
    controller = build_staged_controller(
        scenario.params, ladder, scenario.weights, scenario.n_cells,
        amplitude=scenario.amplitude, omega=scenario.omega, kernel_source=kernel_source,
    )
    rho0 = DensityField.constant(ladder.rho_levels[0], scenario.n_cells)
    series = run_tracking(
        scenario.params, controller, rho0, scenario.T, scenario.time_step,
        engage_time=scenario.step_time, u_hold=scenario.flux_start,
    )
    metrics = tracking_metrics(series, scenario.step_time, ladder.stage_velocities[0], scenario.band)
    return series, metrics


def run_step_demand(
    d: int,
    weights: Optional[CostWeights] = None,
    n_cells: int = 200,
    T: float = 10.0,
    dt: Optional[float] = None,
    step_time: float = 1.0,
    kernel_source=None,
):
    """Mini-fab step from 4 to 60/11 at ``step_time``; returns ``(series, metrics)``."""
    scenario = MinifabScenario(
        d=d, weights=weights if weights is not None else MINIFAB_WEIGHTS,
        n_cells=n_cells, T=T, dt=dt, step_time=step_time,
    )
    return run_scenario(scenario, kernel_source)


@dataclass(frozen=True)
class SweepRow:
    d: int
    n_cells: int
    q0: float
    R: float
    metrics: Optional[TrackingMetrics] = None
    error: Optional[str] = None

    def cells(self) -> List[str]:
        head = [str(self.d), str(self.n_cells), repr(float(self.q0)), repr(float(self.R))]
        if self.metrics is None:
            return head + [f"ERR:{self.error}"] * 4
        m = self.metrics
        settle = "unsettled" if m.settling_time is None else repr(m.settling_time)
        return head + [repr(m.dip_magnitude), settle, repr(m.terminal_error), repr(m.clamp_fraction)]


def sweep_workers(n_jobs: int) -> int:
    cap = os.environ.get("REFAB_THREADS")
    limit = int(cap) if cap and cap.strip().isdigit() and int(cap) > 0 else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def sweep(
    d_values: Sequence[int],
    n_values: Sequence[int],
    weights_grid: Sequence[CostWeights],
    base: Optional[MinifabScenario] = None,
    max_workers: Optional[int] = None,
) -> List[SweepRow]:
    """Cartesian product d x N x weights, rows in that nested order.

    A failing combination yields a row with ``error`` set instead of aborting.
    """
    if not d_values or not n_values or not weights_grid:
        raise ValueError("sweep needs nonempty d, N and weight lists")
    base = base if base is not None else MinifabScenario()
    combos = list(product(d_values, n_values, weights_grid))

    def run(combo):
        d, n, w = combo
        try:
            scenario = replace(base, d=d, n_cells=n, weights=w, dt=None)
            _, metrics = run_scenario(scenario)
            return SweepRow(d, n, w.q0, w.R, metrics)
        except (RefabError, ValueError) as exc:
            return SweepRow(d, n, w.q0, w.R, error=type(exc).__name__)

    workers = max_workers if max_workers is not None else sweep_workers(len(combos))
    if workers <= 1:
        return [run(c) for c in combos]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, combos))


def sweep_csv(rows: Sequence[SweepRow], target=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for row in rows:
        writer.writerow(row.cells())
    text = buf.getvalue()
    if target is not None:
        with open(target, "w", newline="") as fh:
            fh.write(text)
    return text

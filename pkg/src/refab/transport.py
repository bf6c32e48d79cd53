"""Nonlinear continuum model of a re-entrant production line.

The density rho(z, t) on z in [0, 1] is advected with a velocity that
depends only on the total load L(t) (work in progress), so within a time
step the profile is shifted rigidly.  The integrator is semi-Lagrangian:
follow the characteristic back by v*dt and interpolate linearly; nodes
whose characteristic starts at z=0 take the inflow density u/v.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    InfeasibleFlux,
    NegativeInflux,
    NonPositiveVelocity,
    ResolutionViolation,
)
from .kernels import BAD_RESOLUTION, BAD_VELOCITY, CONSTANT, LINEAR, REENTRANT, impl

VARIANTS = ("reentrant", "mm1", "linear")

Influx = Union[float, Callable[[float], float], Sequence[float], np.ndarray]


@dataclass(frozen=True)
class VelocityParams:
    """Parameters of the WIP-dependent velocity law.

    ``variant`` selects v_max/(1 + cL) ("reentrant"), v_max/(1 + L) ("mm1")
    or v0 (1 - L/L_max) ("linear").
    """

    v_max: float
    alpha: float = 0.0
    m: int = 1
    variant: str = "reentrant"
    v0: Optional[float] = None
    L_max: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.v_max > 0:
            raise ValueError("v_max must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must satisfy 0 <= alpha <= 1")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.variant == "linear":
            if self.v0 is None or not self.v0 > 0:
                raise ValueError("linear variant requires v0 > 0")
            if self.L_max is None or not self.L_max > 0:
                raise ValueError("linear variant requires L_max > 0")

    @classmethod
    def linear(cls, v0: float, L_max: float) -> "VelocityParams":
        return cls(v_max=v0, variant="linear", v0=v0, L_max=L_max)

    @property
    def congestion(self) -> float:
        """c = alpha^2 + (1 - alpha)^2 / m; equals 1 for the M/M/1 law."""
        if self.variant == "mm1":
            return 1.0
        return self.alpha**2 + (1.0 - self.alpha) ** 2 / self.m

    @property
    def top_speed(self) -> float:
        return self.v0 if self.variant == "linear" else self.v_max

    def kernel_args(self):
        if self.variant == "linear":
            return LINEAR, float(self.v0), float(self.L_max)
        return REENTRANT, float(self.v_max), float(self.congestion)


def velocity(params: VelocityParams, L: float) -> float:
    if L < 0:
        raise ValueError("load must be nonnegative")
    if params.variant == "linear":
        if L >= params.L_max:
            raise NonPositiveVelocity(f"L={L} >= L_max={params.L_max}")
        return params.v0 * (1.0 - L / params.L_max)
    return params.v_max / (1.0 + params.congestion * L)


def steady_density_for_flux(params: VelocityParams, flux: float) -> float:
    """Uniform density whose outflux v(rho) * rho equals ``flux``."""
    if not flux > 0:
        raise ValueError("flux must be > 0")
    if params.variant == "linear":
        # v0 (1 - r/Lmax) r = F, take the root on the uncongested branch
        v0, lmax = params.v0, params.L_max
        disc = 1.0 - 4.0 * flux / (v0 * lmax)
        if disc < 0:
            raise InfeasibleFlux(f"flux {flux} exceeds capacity {v0 * lmax / 4}")
        return 2.0 * flux / (v0 * (1.0 + math.sqrt(disc)))
    c = params.congestion
    if params.v_max <= c * flux:
        raise InfeasibleFlux(f"flux {flux} >= capacity v_max/c = {params.v_max / c}")
    return flux / (params.v_max - c * flux)


def capacity(params: VelocityParams) -> float:
    """Supremum of sustainable throughput."""
    if params.variant == "linear":
        return params.v0 * params.L_max / 4.0
    return params.v_max / params.congestion


def grid(n_cells: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_cells + 1)


def trapezoid_weights(n_cells: int) -> np.ndarray:
    w = np.full(n_cells + 1, 1.0 / n_cells)
    w[0] = w[-1] = 0.5 / n_cells
    return w


@dataclass(frozen=True)
class DensityField:
    """Nonnegative density samples at z_i = i/N, i = 0..N."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise DimensionMismatch("density field needs at least two samples")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("density samples must be finite and nonnegative")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_cells(self) -> int:
        return self.values.size - 1

    @property
    def z(self) -> np.ndarray:
        return grid(self.n_cells)

    @classmethod
    def constant(cls, value: float, n_cells: int) -> "DensityField":
        return cls(np.full(n_cells + 1, float(value)))

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], n_cells: int) -> "DensityField":
        return cls(np.asarray(fn(grid(n_cells)), dtype=float) * np.ones(n_cells + 1))


def wip(field: Union[DensityField, np.ndarray]) -> float:
    vals = field.values if isinstance(field, DensityField) else np.asarray(field, dtype=float)
    return float(impl.trapezoid(vals, 1.0 / (vals.size - 1)))


@dataclass
class TimeSeries:
    """Per-step records; t=0 holds the initial state."""

    times: np.ndarray
    u: np.ndarray
    y: np.ndarray
    L: np.ndarray
    v: np.ndarray
    e: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        for name in ("u", "y", "L", "v", "e"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise DimensionMismatch(f"record {name} has length {len(arr)}, expected {n}")

    def __len__(self):
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        if name == "t":
            return self.times
        if name in ("u", "y", "L", "v"):
            return getattr(self, name)
        if name == "e":
            return self.e if self.e is not None else np.full(len(self), np.nan)
        return self.extra[name]

    def to_csv(self, target=None, columns=("t", "u", "y", "L", "v", "e")) -> str:
        """Write with ``repr``-exact floats; returns the text when no target."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        cols = [np.asarray(self.column(c), dtype=float) for c in columns]
        for row in zip(*cols):
            writer.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text


def mass_defect(series: TimeSeries) -> float:
    """L(T) - L(0) - int_0^T (u - y) dt with the trapezoid rule in time."""
    net = series.u - series.y
    dt = np.diff(series.times)
    flow = float(np.sum(0.5 * dt * (net[1:] + net[:-1])))
    return float(series.L[-1] - series.L[0] - flow)


def time_grid(T: float, dt: float) -> np.ndarray:
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        n_steps = max(1, int(math.ceil(T / dt - 1e-9)))
    return np.arange(n_steps + 1) * dt


def sample_influx(influx: Influx, times: np.ndarray) -> np.ndarray:
    if callable(influx):
        out = np.array([float(influx(float(t))) for t in times])
    else:
        arr = np.asarray(influx, dtype=float)
        out = np.full(times.shape, float(arr)) if arr.ndim == 0 else arr.copy()
    if out.shape != times.shape:
        raise DimensionMismatch(f"influx has {out.shape[0]} samples, need {times.shape[0]}")
    return out


def check_resolution(dt: float, n_cells: int, speed: float) -> None:
    if dt * speed > (1.0 / n_cells) * (1.0 + 1e-12):
        raise ResolutionViolation(
            f"dt={dt} exceeds dz/v={1.0 / (n_cells * speed)} (N={n_cells}, v={speed})"
        )


def _raise_status(status, step, times):
    if status == BAD_VELOCITY:
        raise NonPositiveVelocity(f"velocity dropped to <= 0 at t={times[step]}")
    if status == BAD_RESOLUTION:
        raise ResolutionViolation(f"shift exceeded one cell at t={times[step]}")


def simulate_nonlinear(
    params: VelocityParams,
    rho0: DensityField,
    influx: Influx,
    T: float,
    dt: float,
    keep_history: bool = False,
):
    """Run the open-loop plant; returns ``(TimeSeries, final DensityField)``.

    With ``keep_history`` the full space-time array is stored in
    ``series.extra["rho"]``.
    """
    n_cells = rho0.n_cells
    check_resolution(dt, n_cells, params.top_speed)
    times = time_grid(T, dt)
    u = sample_influx(influx, times)
    if np.any(u < 0):
        raise NegativeInflux(f"influx negative at t={times[np.argmax(u < 0)]}")
    code, p0, p1 = params.kernel_args()
    L, v, y, rho, hist, status, step = impl.advect(
        rho0.values, u, float(dt), 1.0 / n_cells, code, p0, p1, keep_history
    )
    _raise_status(status, step, times)
    series = TimeSeries(times, u, y, L, v)
    if keep_history:
        series.extra["rho"] = hist
    return series, DensityField(rho)


def advect_constant(rho0: np.ndarray, influx: np.ndarray, v: float, dt: float, keep_history=False):
    """Constant-speed transport of a (possibly signed) profile; raw kernel call."""
    rho0 = np.asarray(rho0, dtype=float)
    n_cells = rho0.size - 1
    check_resolution(dt, n_cells, v)
    loads, _, outs, rho, hist, _, _ = impl.advect(
        rho0, np.asarray(influx, dtype=float), float(dt), 1.0 / n_cells, CONSTANT, float(v), 0.0,
        keep_history,
    )
    return outs, loads, rho, hist

"""Linear-quadratic boundary control of the frozen-speed transport model.

Two routes to the same optimum:

* open loop: forward state run, backward co-state run, steepest descent on
  the influx until R u + lambda(0, t) vanishes;
* state feedback: the kernel Riccati equation
  v (P_z + P_y) + q1 - P(z, 0) P(0, y) / R = 0,  P(1, .) = P(., 1) = 0,
  relaxed in pseudo-time, and the law u = -(1/R) int P(0, y) rho(y) dy.

The co-state sweep is the exact discrete adjoint of the forward shift
scheme, so gradients agree with finite differences of the discrete cost to
rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DimensionMismatch, NoConvergence, NonSymmetricKernel
from .kernels import CONSTANT, impl
from .linear import LinearModel
from .transport import DensityField, check_resolution, grid, time_grid, trapezoid_weights

Q1_KINDS = ("constant", "gaussian")
PF_KINDS = ("zero", "constant")


@dataclass(frozen=True)
class CostWeights:
    """State kernel q1(z, y), input weight R and terminal kernel P_f(z, y)."""

    q0: float = 1.0
    R: float = 1.0
    q1_kind: str = "constant"
    sigma: float = 0.05
    pf_kind: str = "zero"
    p0: float = 0.0

    def __post_init__(self):
        if self.q1_kind not in Q1_KINDS:
            raise ValueError(f"q1 kind must be one of {Q1_KINDS}")
        if self.pf_kind not in PF_KINDS:
            raise ValueError(f"pf kind must be one of {PF_KINDS}")
        if not self.q0 >= 0:
            raise ValueError("q0 must be >= 0")
        if not self.R > 0:
            raise ValueError("R must be > 0")
        if not self.p0 >= 0:
            raise ValueError("p0 must be >= 0")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    def q1_matrix(self, n_cells: int) -> np.ndarray:
        z = grid(n_cells)
        if self.q1_kind == "constant":
            return np.full((z.size, z.size), float(self.q0))
        diff = z[:, None] - z[None, :]
        return self.q0 * np.exp(-0.5 * (diff / self.sigma) ** 2)

    def pf_matrix(self, n_cells: int) -> np.ndarray:
        value = self.p0 if self.pf_kind == "constant" else 0.0
        return np.full((n_cells + 1, n_cells + 1), float(value))


def apply_kernel(kernel: np.ndarray, f: np.ndarray) -> np.ndarray:
    """(K f)(z) = int K(z, y) f(y) dy with the trapezoid rule; works row-wise."""
    w = trapezoid_weights(kernel.shape[0] - 1)
    return (np.asarray(f) * w) @ kernel.T


def time_weights(n_t: int, dt: float) -> np.ndarray:
    tau = np.full(n_t, dt)
    tau[0] = tau[-1] = 0.5 * dt
    return tau


def cost(weights: CostWeights, state: np.ndarray, control: np.ndarray, dt: float) -> float:
    """Discrete J = 1/2 sum_t tau [<rho, q1 rho> + R u^2] + 1/2 <rho_T, P_f rho_T>."""
    state = np.atleast_2d(np.asarray(state, dtype=float))
    control = np.asarray(control, dtype=float)
    if state.shape[0] != control.shape[0]:
        raise DimensionMismatch(f"{state.shape[0]} state rows vs {control.shape[0]} controls")
    n_cells = state.shape[1] - 1
    w = trapezoid_weights(n_cells)
    tau = time_weights(control.size, dt)
    running = np.einsum("ti,ti->t", state * w, apply_kernel(weights.q1_matrix(n_cells), state))
    final = state[-1] * w @ apply_kernel(weights.pf_matrix(n_cells), state[-1])
    return 0.5 * float(tau @ (running + weights.R * control**2)) + 0.5 * float(final)


def _theta(model: LinearModel, n_cells: int, dt: float) -> float:
    check_resolution(dt, n_cells, model.v_bar)
    return min(model.v_bar * dt * n_cells, 1.0)


def forward_state(model: LinearModel, rho_tilde0: np.ndarray, control: np.ndarray, dt: float) -> np.ndarray:
    """Space-time deviation grid driven by ``control``; rho(0, t_n) = u_n / v_bar for all n."""
    rho = np.array(rho_tilde0, dtype=float)
    n_cells = rho.size - 1
    _theta(model, n_cells, dt)
    rho[0] = control[0] / model.v_bar
    _, _, _, _, hist, _, _ = impl.advect(
        rho, np.asarray(control, dtype=float), float(dt), 1.0 / n_cells, CONSTANT, float(model.v_bar), 0.0, True
    )
    return hist


def _adjoint_mu(model, weights, state, dt):
    n_t, n_nodes = state.shape
    n_cells = n_nodes - 1
    w = trapezoid_weights(n_cells)
    source = apply_kernel(weights.q1_matrix(n_cells), state)
    terminal = w * apply_kernel(weights.pf_matrix(n_cells), state[-1])
    tau = time_weights(n_t, dt)
    mu = impl.adjoint(source, terminal, _theta(model, n_cells, dt), tau, w)
    return mu, tau, w


def _scale_costate(model, mu, tau, w):
    lam = mu / w
    lam[:, 0] = mu[:, 0] / (model.v_bar * tau)
    return lam


def costate_sweep(model: LinearModel, weights: CostWeights, state: np.ndarray, T: float, dt: float) -> np.ndarray:
    """Backward transport of the co-state lambda(z, t) from lambda(., T) = P_f rho(., T).

    The boundary column is the trace that enters the optimality condition,
    i.e. d J / d u_n = tau_n (R u_n + lambda(0, t_n)).
    """
    state = np.asarray(state, dtype=float)
    if state.shape[0] != time_grid(T, dt).size:
        raise DimensionMismatch("state grid does not match the time horizon")
    mu, tau, w = _adjoint_mu(model, weights, state, dt)
    return _scale_costate(model, mu, tau, w)


def gradient(model: LinearModel, weights: CostWeights, rho_tilde0, control, dt):
    """Return ``(g, J, state, costate)`` with g_n = R u_n + lambda(0, t_n)."""
    control = np.asarray(control, dtype=float)
    state = forward_state(model, rho_tilde0, control, dt)
    mu, tau, w = _adjoint_mu(model, weights, state, dt)
    lam = _scale_costate(model, mu, tau, w)
    g = weights.R * control + lam[:, 0]
    return g, cost(weights, state, control, dt), state, lam


@dataclass
class OpenLoopSolution:
    times: np.ndarray
    control: np.ndarray
    state: np.ndarray
    costate: np.ndarray
    cost: float
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def solve_open_loop(
    model: LinearModel,
    weights: CostWeights,
    rho_tilde0: Union[DensityField, np.ndarray],
    T: float,
    dt: Optional[float] = None,
    max_iter: int = 500,
    tol: float = 1e-8,
) -> OpenLoopSolution:
    """Steepest descent on the influx with step halving on cost increase.

    The first trial step 1/R turns the update into u <- -lambda(0, .)/R.
    """
    rho0 = rho_tilde0.values if isinstance(rho_tilde0, DensityField) else np.asarray(rho_tilde0, float)
    n_cells = rho0.size - 1
    if dt is None:
        dt = 1.0 / (n_cells * model.v_bar)
    times = time_grid(T, dt)
    u = np.zeros(times.size)
    step = 1.0 / weights.R
    g, J, state, lam = gradient(model, weights, rho0, u, dt)
    history = [J]
    residual = float(np.max(np.abs(g)))
    it = 0
    while residual > tol and it < max_iter:
        it += 1
        for _ in range(60):
            trial = u - step * g
            g_new, J_new, state_new, lam_new = gradient(model, weights, rho0, trial, dt)
            if J_new <= J:
                break
            step *= 0.5
        else:
            break
        u, g, J, state, lam = trial, g_new, J_new, state_new, lam_new
        history.append(J)
        residual = float(np.max(np.abs(g)))
    sol = OpenLoopSolution(times, u, state, lam, J, it, residual, history)
    if residual > tol:
        raise NoConvergence(residual, sol)
    return sol


@dataclass
class RiccatiKernel:
    """Steady feedback kernel P(z_i, y_j) on the unit square."""

    values: np.ndarray
    v_bar: float
    weights: CostWeights
    residual: float = 0.0
    steps: int = 0

    @property
    def n_cells(self) -> int:
        return self.values.shape[0] - 1

    @property
    def R(self) -> float:
        return self.weights.R

    def boundary_row(self) -> np.ndarray:
        """P(0, y) sampled on the grid."""
        return self.values[0]

    def gain_row(self) -> np.ndarray:
        """Row g with u = -g . rho (trapezoid weights and 1/R folded in)."""
        return trapezoid_weights(self.n_cells) * self.values[0] / self.R

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.values - self.values.T)))


def _relax(model, weights, n_cells, pseudo_dt, tol, max_steps, keep_history):
    dz = 1.0 / n_cells
    full = dz / model.v_bar
    if pseudo_dt is None:
        pseudo_dt = full
    if not 0 < pseudo_dt <= full * (1 + 1e-12):
        raise ValueError(f"pseudo_dt must lie in (0, dz/v_bar] = (0, {full}]")
    omega = min(pseudo_dt / full, 1.0)
    return impl.riccati_relax(
        weights.pf_matrix(n_cells),
        weights.q1_matrix(n_cells),
        0.5 * full,
        1.0 / weights.R,
        omega,
        float(pseudo_dt),
        float(tol),
        int(max_steps),
        keep_history,
    )


def solve_riccati_steady(
    model: LinearModel,
    weights: CostWeights,
    n_cells: int = 200,
    pseudo_dt: Optional[float] = None,
    tol: float = 1e-9,
    max_steps: int = 100_000,
) -> RiccatiKernel:
    """Relax the differential Riccati equation backward from P_f to steady state.

    Transport is upwinded along the diagonal characteristic (z + s, y + s),
    entering from the edges z=1 and y=1 where P vanishes; the source is
    integrated with the trapezoid rule along that diagonal, and the
    quadratic term uses the current iterate.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    p, residual, steps, _ = _relax(model, weights, n_cells, pseudo_dt, tol, max_steps, False)
    kernel = RiccatiKernel(p, model.v_bar, weights, float(residual), int(steps))
    if not np.all(np.isfinite(p)) or residual > tol:
        raise NoConvergence(residual, kernel)
    if kernel.symmetry_defect() > 100 * tol:
        raise NonSymmetricKernel(f"symmetry defect {kernel.symmetry_defect():.3e}")
    return kernel


def solve_riccati_transient(
    model: LinearModel,
    weights: CostWeights,
    n_cells: int,
    T: float,
    dt: Optional[float] = None,
) -> np.ndarray:
    """Time-varying kernels P(., ., t_n), n = 0..M, with P(., ., T) = P_f."""
    if dt is None:
        dt = 1.0 / (n_cells * model.v_bar)
    n_steps = time_grid(T, dt).size - 1
    _, _, _, hist = _relax(model, weights, n_cells, dt, -1.0, n_steps, True)
    return hist[::-1].copy()


def riccati_residual(kernel: RiccatiKernel) -> np.ndarray:
    """Steady-equation residual at interior nodes with a centred diagonal difference."""
    p = kernel.values
    n = kernel.n_cells
    q = kernel.weights.q1_matrix(n)
    diag = (p[2:, 2:] - p[:-2, :-2]) * (n / 2.0)
    quad = np.outer(p[1:-1, 0], p[0, 1:-1]) / kernel.R
    return kernel.v_bar * diag + q[1:-1, 1:-1] - quad


def feedback_control(kernel: RiccatiKernel, rho_tilde: Union[DensityField, np.ndarray]) -> float:
    rho = rho_tilde.values if isinstance(rho_tilde, DensityField) else np.asarray(rho_tilde, float)
    if rho.size != kernel.values.shape[1]:
        raise DimensionMismatch(f"field has {rho.size} samples, kernel {kernel.values.shape[1]}")
    return -float(kernel.gain_row() @ rho)


def simulate_feedback(
    model: LinearModel,
    kernel: Union[RiccatiKernel, np.ndarray],
    rho_tilde0: Union[DensityField, np.ndarray],
    T: float,
    dt: Optional[float] = None,
    R: Optional[float] = None,
    feedforward=None,
):
    """Linear plant under u = -(1/R) int P(0, y) rho dy (+ feedforward).

    ``kernel`` is a steady :class:`RiccatiKernel` or a stack of time-varying
    kernel arrays (then ``R`` is required).  Returns ``(times, state, control)``.
    """
    rho0 = rho_tilde0.values if isinstance(rho_tilde0, DensityField) else np.asarray(rho_tilde0, float)
    n_cells = rho0.size - 1
    if dt is None:
        dt = 1.0 / (n_cells * model.v_bar)
    times = time_grid(T, dt)
    w = trapezoid_weights(n_cells)
    if isinstance(kernel, RiccatiKernel):
        rows = np.broadcast_to(kernel.gain_row(), (times.size, n_cells + 1))
    else:
        stack = np.asarray(kernel, dtype=float)
        if stack.shape[0] != times.size or R is None:
            raise DimensionMismatch("kernel stack must have one kernel per time step, and R is required")
        rows = stack[:, 0, :] * w / R
    if rows.shape[1] != n_cells + 1:
        raise DimensionMismatch("kernel grid does not match the state grid")
    ff = np.zeros(times.size) if feedforward is None else np.asarray(feedforward, dtype=float)
    state, control = impl.feedback_linear(
        rho0, _theta(model, n_cells, dt), float(model.v_bar), np.ascontiguousarray(rows), ff
    )
    return times, state, control

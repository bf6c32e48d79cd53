"""Vectorised numpy implementations of the hot loops.

Signatures mirror :mod:`refab.kernels._numba` exactly; the time loop stays
in Python but every per-step operation is a whole-array numpy expression.
"""

import numpy as np

# velocity law codes, shared with the numba backend
REENTRANT = 0
LINEAR = 1
CONSTANT = 2

OK = 0
BAD_VELOCITY = 1
BAD_RESOLUTION = 2

_SHIFT_SLACK = 1e-12


def trapezoid(values, dz):
    return dz * (values.sum() - 0.5 * (values[0] + values[-1]))


def velocity_of(code, p0, p1, load):
    if code == REENTRANT:
        return p0 / (1.0 + p1 * load)
    if code == LINEAR:
        return p0 * (1.0 - load / p1)
    return p0


def _shift(rho, theta, ghost):
    out = np.empty_like(rho)
    out[1:] = (1.0 - theta) * rho[1:] + theta * rho[:-1]
    out[0] = ghost
    return out


def advect(rho0, influx, dt, dz, code, p0, p1, keep_history):
    """Open-loop run; ``influx`` holds u at every record time t_0..t_M."""
    n_steps = influx.shape[0] - 1
    loads = np.empty(n_steps + 1)
    vels = np.empty(n_steps + 1)
    outs = np.empty(n_steps + 1)
    history = np.empty((n_steps + 1 if keep_history else 1, rho0.shape[0]))
    rho = rho0.astype(np.float64).copy()
    status = OK
    for n in range(n_steps + 1):
        load = trapezoid(rho, dz)
        v = velocity_of(code, p0, p1, load)
        loads[n] = load
        vels[n] = v
        outs[n] = v * rho[-1]
        if keep_history:
            history[n] = rho
        if v <= 0.0:
            return loads, vels, outs, rho, history, BAD_VELOCITY, n
        if n == n_steps:
            break
        theta = v * dt / dz
        if theta > 1.0 + _SHIFT_SLACK:
            return loads, vels, outs, rho, history, BAD_RESOLUTION, n
        rho = _shift(rho, min(theta, 1.0), influx[n + 1] / v)
    if not keep_history:
        history[0] = rho
    return loads, vels, outs, rho, history, status, n_steps


def track(rho0, dt, dz, code, p0, p1, n_steps, engage, u_hold,
          rho_bars, nominal, gains, feedforward, switch_levels):
    """Closed-loop run of the staged law on the nonlinear plant.

    ``gains[k]`` already carries quadrature weights and 1/R, so the feedback
    term is a plain dot product with the deviation from ``rho_bars[k]``.
    """
    loads = np.empty(n_steps + 1)
    vels = np.empty(n_steps + 1)
    outs = np.empty(n_steps + 1)
    influx = np.empty(n_steps + 1)
    stages = np.zeros(n_steps + 1, dtype=np.int64)
    clamped = np.zeros(n_steps + 1, dtype=np.bool_)
    rho = rho0.astype(np.float64).copy()
    n_stages = rho_bars.shape[0]
    k = 0
    for n in range(n_steps + 1):
        load = trapezoid(rho, dz)
        v = velocity_of(code, p0, p1, load)
        loads[n] = load
        vels[n] = v
        outs[n] = v * rho[-1]
        if v <= 0.0:
            return loads, vels, outs, influx, stages, clamped, rho, BAD_VELOCITY, n
        if n < engage:
            u = u_hold
        else:
            while k < n_stages - 1 and rho[-1] >= switch_levels[k]:
                k += 1
            u = nominal[k] - gains[k] @ (rho - rho_bars[k]) + feedforward[k, n]
            if u < 0.0:
                u = 0.0
                clamped[n] = True
        influx[n] = u
        stages[n] = k
        if n == n_steps:
            break
        theta = v * dt / dz
        if theta > 1.0 + _SHIFT_SLACK:
            return loads, vels, outs, influx, stages, clamped, rho, BAD_RESOLUTION, n
        rho = _shift(rho, min(theta, 1.0), u / v)
    return loads, vels, outs, influx, stages, clamped, rho, OK, n_steps


def feedback_linear(rho0, theta, v_bar, gain_rows, feedforward):
    """Linear closed loop with the boundary algebraic loop solved exactly.

    ``gain_rows[n]`` weights the state at step n (weights and 1/R folded in).
    The inflow sample rho_0 = u/v_bar also enters the law, hence the
    ``gain_rows[n, 0]`` term in the denominator.  This holds at t=0 too, so
    the initial boundary sample is replaced by u_0/v_bar.
    """
    n_steps = gain_rows.shape[0] - 1
    history = np.empty((n_steps + 1, rho0.shape[0]))
    influx = np.empty(n_steps + 1)
    rho = rho0.astype(np.float64).copy()
    for n in range(n_steps + 1):
        if n > 0:
            rho = _shift(rho, theta, 0.0)
        partial = gain_rows[n, 1:] @ rho[1:]
        u = (feedforward[n] - partial) / (1.0 + gain_rows[n, 0] / v_bar)
        rho[0] = u / v_bar
        influx[n] = u
        history[n] = rho
    return history, influx


def adjoint(source, terminal, theta, tau, weights):
    """Exact discrete adjoint of the linear shift scheme.

    Returns mu[n, i] = dJ/d rho[n, i] for the trapezoid-weighted cost whose
    running part at step n is ``tau[n] * weights * source[n]``.
    """
    n_t = source.shape[0]
    mu = np.empty_like(source)
    mu[-1] = tau[-1] * weights * source[-1] + terminal
    for n in range(n_t - 2, -1, -1):
        nxt = mu[n + 1]
        cur = tau[n] * weights * source[n]
        cur[1:] += (1.0 - theta) * nxt[1:]
        cur[:-1] += theta * nxt[1:]
        mu[n] = cur
    return mu


def riccati_relax(p_init, q, half_step, inv_r, omega, pseudo_dt, tol,
                  max_steps, keep_history):
    """March the kernel Riccati equation backward along diagonal characteristics.

    One full step (omega=1) moves information one grid diagonal and integrates
    the source with the trapezoid rule; omega<1 under-relaxes toward it.
    """
    p = p_init.astype(np.float64).copy()
    history = np.empty((max_steps + 1 if keep_history else 1,) + p.shape)
    if keep_history:
        history[0] = p
    residual = np.inf
    steps = 0
    for steps in range(1, max_steps + 1):
        f = q - inv_r * np.outer(p[:, 0], p[0, :])
        target = np.zeros_like(p)
        target[:-1, :-1] = p[1:, 1:] + half_step * (f[:-1, :-1] + f[1:, 1:])
        new = p + omega * (target - p)
        residual = np.abs(new - p).max() / pseudo_dt
        p = new
        if keep_history:
            history[steps] = p
        if residual <= tol:
            break
    return p, residual, steps, history

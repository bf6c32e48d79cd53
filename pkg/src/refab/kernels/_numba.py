"""numba-compiled versions of the hot loops (scalar loops, whole run in nopython)."""

import numpy as np
from numba import njit

from ._numpy import BAD_RESOLUTION, BAD_VELOCITY, LINEAR, OK, REENTRANT

_SHIFT_SLACK = 1e-12


@njit(cache=True)
def trapezoid(values, dz):
    total = 0.0
    for i in range(values.shape[0]):
        total += values[i]
    return dz * (total - 0.5 * (values[0] + values[-1]))


@njit(cache=True)
def velocity_of(code, p0, p1, load):
    if code == REENTRANT:
        return p0 / (1.0 + p1 * load)
    if code == LINEAR:
        return p0 * (1.0 - load / p1)
    return p0


@njit(cache=True)
def _shift_inplace(rho, theta, ghost):
    for i in range(rho.shape[0] - 1, 0, -1):
        rho[i] = (1.0 - theta) * rho[i] + theta * rho[i - 1]
    rho[0] = ghost


@njit(cache=True, nogil=True)
def advect(rho0, influx, dt, dz, code, p0, p1, keep_history):
    n_steps = influx.shape[0] - 1
    loads = np.empty(n_steps + 1)
    vels = np.empty(n_steps + 1)
    outs = np.empty(n_steps + 1)
    history = np.empty((n_steps + 1 if keep_history else 1, rho0.shape[0]))
    rho = rho0.astype(np.float64).copy()
    for n in range(n_steps + 1):
        load = trapezoid(rho, dz)
        v = velocity_of(code, p0, p1, load)
        loads[n] = load
        vels[n] = v
        outs[n] = v * rho[-1]
        if keep_history:
            history[n, :] = rho
        if v <= 0.0:
            return loads, vels, outs, rho, history, BAD_VELOCITY, n
        if n == n_steps:
            break
        theta = v * dt / dz
        if theta > 1.0 + _SHIFT_SLACK:
            return loads, vels, outs, rho, history, BAD_RESOLUTION, n
        _shift_inplace(rho, min(theta, 1.0), influx[n + 1] / v)
    if not keep_history:
        history[0, :] = rho
    return loads, vels, outs, rho, history, OK, n_steps


@njit(cache=True, nogil=True)
def track(rho0, dt, dz, code, p0, p1, n_steps, engage, u_hold,
          rho_bars, nominal, gains, feedforward, switch_levels):
    loads = np.empty(n_steps + 1)
    vels = np.empty(n_steps + 1)
    outs = np.empty(n_steps + 1)
    influx = np.empty(n_steps + 1)
    stages = np.zeros(n_steps + 1, dtype=np.int64)
    clamped = np.zeros(n_steps + 1, dtype=np.bool_)
    rho = rho0.astype(np.float64).copy()
    n_stages = rho_bars.shape[0]
    n_nodes = rho.shape[0]
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
            acc = 0.0
            for j in range(n_nodes):
                acc += gains[k, j] * (rho[j] - rho_bars[k])
            u = nominal[k] - acc + feedforward[k, n]
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
        _shift_inplace(rho, min(theta, 1.0), u / v)
    return loads, vels, outs, influx, stages, clamped, rho, OK, n_steps


@njit(cache=True, nogil=True)
def feedback_linear(rho0, theta, v_bar, gain_rows, feedforward):
    n_steps = gain_rows.shape[0] - 1
    n_nodes = rho0.shape[0]
    history = np.empty((n_steps + 1, n_nodes))
    influx = np.empty(n_steps + 1)
    rho = rho0.astype(np.float64).copy()
    for n in range(n_steps + 1):
        if n > 0:
            _shift_inplace(rho, theta, 0.0)
        partial = 0.0
        for j in range(1, n_nodes):
            partial += gain_rows[n, j] * rho[j]
        u = (feedforward[n] - partial) / (1.0 + gain_rows[n, 0] / v_bar)
        rho[0] = u / v_bar
        influx[n] = u
        history[n, :] = rho
    return history, influx


@njit(cache=True, nogil=True)
def adjoint(source, terminal, theta, tau, weights):
    n_t, n_nodes = source.shape
    mu = np.empty_like(source)
    for i in range(n_nodes):
        mu[n_t - 1, i] = tau[n_t - 1] * weights[i] * source[n_t - 1, i] + terminal[i]
    for n in range(n_t - 2, -1, -1):
        for i in range(n_nodes):
            val = tau[n] * weights[i] * source[n, i]
            if i >= 1:
                val += (1.0 - theta) * mu[n + 1, i]
            if i <= n_nodes - 2:
                val += theta * mu[n + 1, i + 1]
            mu[n, i] = val
    return mu


@njit(cache=True, nogil=True)
def riccati_relax(p_init, q, half_step, inv_r, omega, pseudo_dt, tol,
                  max_steps, keep_history):
    n = p_init.shape[0]
    p = p_init.astype(np.float64).copy()
    new = np.zeros_like(p)
    f = np.empty_like(p)
    history = np.empty((max_steps + 1 if keep_history else 1, n, n))
    if keep_history:
        history[0] = p
    residual = np.inf
    steps = 0
    for step in range(1, max_steps + 1):
        steps = step
        for i in range(n):
            for j in range(n):
                f[i, j] = q[i, j] - inv_r * p[i, 0] * p[0, j]
        residual = 0.0
        for i in range(n):
            for j in range(n):
                if i == n - 1 or j == n - 1:
                    target = 0.0
                else:
                    target = p[i + 1, j + 1] + half_step * (f[i, j] + f[i + 1, j + 1])
                val = p[i, j] + omega * (target - p[i, j])
                diff = abs(val - p[i, j])
                if diff > residual:
                    residual = diff
                new[i, j] = val
        residual /= pseudo_dt
        p, new = new, p
        if keep_history:
            history[step] = p
        if residual <= tol:
            break
    return p, residual, steps, history

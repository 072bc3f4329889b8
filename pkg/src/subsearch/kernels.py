"""Hot loops: current-field interpolation and explicit-Euler particle stepping.

Every kernel has a scalar-loop body compiled by numba and a vectorised numpy
twin with the same arithmetic in the same order, so both backends agree to the
last bit on IEEE hardware.  ``integrate`` and ``sample_points`` dispatch on
:data:`subsearch._accel.USE_NUMBA`.
"""

import math

import numpy as np

from . import _accel
from ._accel import njit

DRIFT = 0
SINK = 1


# --------------------------------------------------------------------------
# trilinear sampling
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _axis_weights(p, o, h, n):
    f = (p - o) / h
    if f < 0.0:
        f = 0.0
    if f > n - 1:
        f = float(n - 1)
    if n == 1:
        return 0, 0, 0.0
    i0 = int(math.floor(f))
    if i0 >= n - 1:
        i0 = n - 2
    return i0, i0 + 1, f - i0


@njit(cache=True, nogil=True)
def _sample_one(uvw, origin, spacing, x, y, z, out):
    nx, ny, nz = uvw.shape[1], uvw.shape[2], uvw.shape[3]
    i0, i1, fx = _axis_weights(x, origin[0], spacing[0], nx)
    j0, j1, fy = _axis_weights(y, origin[1], spacing[1], ny)
    k0, k1, fz = _axis_weights(z, origin[2], spacing[2], nz)
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    for c in range(3):
        a = uvw[c]
        c00 = a[i0, j0, k0] * gx + a[i1, j0, k0] * fx
        c10 = a[i0, j1, k0] * gx + a[i1, j1, k0] * fx
        c01 = a[i0, j0, k1] * gx + a[i1, j0, k1] * fx
        c11 = a[i0, j1, k1] * gx + a[i1, j1, k1] * fx
        c0 = c00 * gy + c10 * fy
        c1 = c01 * gy + c11 * fy
        out[c] = c0 * gz + c1 * fz


@njit(cache=True, nogil=True)
def _sample_points_nb(uvw, origin, spacing, pts):
    out = np.empty((pts.shape[0], 3))
    buf = np.empty(3)
    for i in range(pts.shape[0]):
        _sample_one(uvw, origin, spacing, pts[i, 0], pts[i, 1], pts[i, 2], buf)
        out[i, 0] = buf[0]
        out[i, 1] = buf[1]
        out[i, 2] = buf[2]
    return out


def _axis_weights_np(p, o, h, n):
    f = np.clip((p - o) / h, 0.0, float(n - 1))
    if n == 1:
        z = np.zeros(p.shape, dtype=np.int64)
        return z, z, np.zeros(p.shape)
    i0 = np.minimum(np.floor(f).astype(np.int64), n - 2)
    return i0, i0 + 1, f - i0


def _sample_points_np(uvw, origin, spacing, pts):
    _, nx, ny, nz = uvw.shape
    i0, i1, fx = _axis_weights_np(pts[:, 0], origin[0], spacing[0], nx)
    j0, j1, fy = _axis_weights_np(pts[:, 1], origin[1], spacing[1], ny)
    k0, k1, fz = _axis_weights_np(pts[:, 2], origin[2], spacing[2], nz)
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    out = np.empty((pts.shape[0], 3))
    for c in range(3):
        a = uvw[c]
        c00 = a[i0, j0, k0] * gx + a[i1, j0, k0] * fx
        c10 = a[i0, j1, k0] * gx + a[i1, j1, k0] * fx
        c01 = a[i0, j0, k1] * gx + a[i1, j0, k1] * fx
        c11 = a[i0, j1, k1] * gx + a[i1, j1, k1] * fx
        c0 = c00 * gy + c10 * fy
        c1 = c01 * gy + c11 * fy
        out[:, c] = c0 * gz + c1 * fz
    return out


def sample_points(uvw, origin, spacing, pts):
    """Interpolate the (3, nx, ny, nz) velocity lattice at ``pts`` (M, 3)."""
    pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 3)
    if _accel.USE_NUMBA:
        return _sample_points_nb(uvw, origin, spacing, pts)
    return _sample_points_np(uvw, origin, spacing, pts)


# --------------------------------------------------------------------------
# particle integration
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _integrate_nb(pos, vel, v0h, grounded, t_end, t_start, n_steps, dt, regime,
                  a_z, vz_cap, seabed, uvw, origin, spacing, pert, win_first, tau,
                  record_every, rec_pos, rec_vel, rec_gnd):
    n = pos.shape[0]
    n_win = pert.shape[1]
    buf = np.empty(3)
    for i in range(n):
        x, y, z = pos[i, 0], pos[i, 1], pos[i, 2]
        vx, vy, vz = vel[i, 0], vel[i, 1], vel[i, 2]
        g = grounded[i]
        te = t_end[i]
        for s in range(n_steps + 1):
            if record_every > 0 and s % record_every == 0:
                r = s // record_every
                rec_pos[i, r, 0] = x
                rec_pos[i, r, 1] = y
                rec_pos[i, r, 2] = z
                rec_vel[i, r, 0] = vx
                rec_vel[i, r, 1] = vy
                rec_vel[i, r, 2] = vz
                rec_gnd[i, r] = g
            if s == n_steps or g:
                continue
            t = t_start + s * dt
            k = int(math.floor(t / tau)) - win_first
            if k < 0:
                k = 0
            if k > n_win - 1:
                k = n_win - 1
            _sample_one(uvw, origin, spacing, x, y, z, buf)
            hx = v0h[i, 0] + buf[0] + pert[i, k, 0]
            hy = v0h[i, 1] + buf[1] + pert[i, k, 1]
            if regime == DRIFT:
                x = x + hx * dt
                y = y + hy * dt
                vx, vy, vz = hx, hy, 0.0
                te = t + dt
            else:
                z_new = z + vz * dt
                vz_new = vz - a_z * dt
                if vz_cap > 0.0 and vz_new < -vz_cap:
                    vz_new = -vz_cap
                if z_new <= -seabed:
                    frac = (z + seabed) / (z - z_new)
                    x = x + hx * (frac * dt)
                    y = y + hy * (frac * dt)
                    z = -seabed
                    vx, vy, vz = 0.0, 0.0, 0.0
                    g = True
                    te = t + frac * dt
                else:
                    if z_new > 0.0:
                        z_new = 0.0
                    x = x + hx * dt
                    y = y + hy * dt
                    z = z_new
                    vx, vy, vz = hx, hy, vz_new
                    te = t + dt
        pos[i, 0], pos[i, 1], pos[i, 2] = x, y, z
        vel[i, 0], vel[i, 1], vel[i, 2] = vx, vy, vz
        grounded[i] = g
        t_end[i] = te


def _integrate_np(pos, vel, v0h, grounded, t_end, t_start, n_steps, dt, regime,
                  a_z, vz_cap, seabed, uvw, origin, spacing, pert, win_first, tau,
                  record_every, rec_pos, rec_vel, rec_gnd):
    n_win = pert.shape[1]
    rows = np.arange(pos.shape[0])
    for s in range(n_steps + 1):
        if record_every > 0 and s % record_every == 0:
            r = s // record_every
            rec_pos[:, r] = pos
            rec_vel[:, r] = vel
            rec_gnd[:, r] = grounded
        if s == n_steps:
            break
        live = ~grounded
        if not live.any():
            continue
        idx = rows[live]
        t = t_start + s * dt
        k = min(max(int(math.floor(t / tau)) - win_first, 0), n_win - 1)
        p = pos[idx]
        cur = _sample_points_np(uvw, origin, spacing, p)
        hx = v0h[idx, 0] + cur[:, 0] + pert[idx, k, 0]
        hy = v0h[idx, 1] + cur[:, 1] + pert[idx, k, 1]
        if regime == DRIFT:
            pos[idx, 0] = p[:, 0] + hx * dt
            pos[idx, 1] = p[:, 1] + hy * dt
            vel[idx, 0] = hx
            vel[idx, 1] = hy
            vel[idx, 2] = 0.0
            t_end[idx] = t + dt
            continue
        z = p[:, 2]
        vz = vel[idx, 2]
        z_new = z + vz * dt
        vz_new = vz - a_z * dt
        if vz_cap > 0.0:
            vz_new = np.where(vz_new < -vz_cap, -vz_cap, vz_new)
        hit = z_new <= -seabed
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(hit, (z + seabed) / (z - z_new), 1.0)
        step = np.where(hit, frac * dt, dt)
        pos[idx, 0] = p[:, 0] + hx * step
        pos[idx, 1] = p[:, 1] + hy * step
        pos[idx, 2] = np.where(hit, -seabed, np.minimum(z_new, 0.0))
        vel[idx, 0] = np.where(hit, 0.0, hx)
        vel[idx, 1] = np.where(hit, 0.0, hy)
        vel[idx, 2] = np.where(hit, 0.0, vz_new)
        grounded[idx] = hit
        t_end[idx] = np.where(hit, t + frac * dt, t + dt)


def integrate(pos, vel, v0h, grounded, t_end, *, t_start, n_steps, dt, regime,
              a_z, vz_cap, seabed, uvw, origin, spacing, pert, win_first, tau,
              record_every=0, rec_pos=None, rec_vel=None, rec_gnd=None):
    """Advance particles ``n_steps`` explicit-Euler steps in place.

    ``pert`` holds per-particle horizontal perturbation velocities, shape
    (N, W, 2), one row per persistence window starting at ``win_first``.
    Grounded particles are frozen; ``t_end`` receives the time of each
    particle's last state (the interpolated touchdown time when it grounds).
    """
    n = pos.shape[0]
    if rec_pos is None:
        record_every = 0
        rec_pos = np.empty((n, 0, 3))
        rec_vel = np.empty((n, 0, 3))
        rec_gnd = np.empty((n, 0), dtype=np.bool_)
    fn = _integrate_nb if _accel.USE_NUMBA else _integrate_np
    fn(pos, vel, v0h, grounded, t_end, float(t_start), int(n_steps), float(dt),
       int(regime), float(a_z), float(vz_cap), float(seabed), uvw, origin, spacing,
       pert, int(win_first), float(tau), int(record_every), rec_pos, rec_vel, rec_gnd)

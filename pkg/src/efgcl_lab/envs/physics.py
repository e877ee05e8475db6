"""Batched semi-implicit Euler integrator with impulse-based ground contact.

Generalized coordinates per environment: trunk position (x, z), trunk angle
theta (never wrapped) and one extension joint per leg. The mass matrix is
diagonal; locked coordinates get zero inverse mass. Contacts are solved with
accumulated sequential impulses (inelastic normal, Coulomb friction) and any
residual penetration is removed by a mass-weighted position projection.
"""

from __future__ import annotations

import math

import numba
import numpy as np

CAUSE_NONE = 0
CAUSE_BODY_CONTACT = 1
CAUSE_TIME_LIMIT = 2
CAUSE_FAULT = 3
CAUSE_NAMES = {CAUSE_NONE: "none", CAUSE_BODY_CONTACT: "body_contact", CAUSE_TIME_LIMIT: "time_limit",
               CAUSE_FAULT: "fault"}

_FOOT_TOL = 1e-4
_WINDOW_EPS = 1e-9


@numba.njit(cache=True)
def _trunk_touches(z, c, s, a, b):
    lowest = 1e9
    for sx in (-1.0, 1.0):
        for sz in (-1.0, 1.0):
            zc = z + s * sx * a + c * sz * b
            if zc < lowest:
                lowest = zc
    return lowest <= 0.0


@numba.njit(cache=True)
def step_kernel(x, z, th, vx, vz, om, q, qd, contact, hmax, t, term, cause,
                targets, ext_p, ext_f, ext_win, ext_n,
                params, hips, n_sub, n_iter):
    """Advance every non-terminated environment by ``n_sub`` substeps in place.

    ``params`` = [m, g, I_trunk, I_joint, lever, leg_min, q_min, q_max, kp, kd,
    tau_max, mu, half_len, half_height, dt, planar].
    """
    m, g, Ib, Ij = params[0], params[1], params[2], params[3]
    r, lmin, qmin, qmax = params[4], params[5], params[6], params[7]
    kp, kd, tmax, mu = params[8], params[9], params[10], params[11]
    a, b, dt = params[12], params[13], params[14]
    planar = params[15] > 0.5
    wz = 1.0 / m
    wx = wz if planar else 0.0
    wth = 1.0 / Ib if planar else 0.0
    wq = 1.0 / Ij
    n_env = z.shape[0]
    nj = q.shape[1]
    pn = np.zeros(nj)
    pt = np.zeros(nj)
    pl = np.zeros(nj)
    for i in range(n_env):
        if term[i]:
            continue
        for k in range(n_sub):
            tk = t[i] + k * dt
            c = math.cos(th[i])
            s = math.sin(th[i])
            fx = 0.0
            fz = -m * g
            tq = 0.0
            for e in range(ext_n[i]):
                if tk + _WINDOW_EPS >= ext_win[i, e, 0] and tk + _WINDOW_EPS < ext_win[i, e, 1]:
                    px = ext_p[i, e, 0]
                    pz = ext_p[i, e, 1]
                    dxw = c * px - s * pz
                    dzw = s * px + c * pz
                    fx += ext_f[i, e, 0]
                    fz += ext_f[i, e, 1]
                    tq += dxw * ext_f[i, e, 1] - dzw * ext_f[i, e, 0]
            vx[i] += dt * fx * wx
            vz[i] += dt * fz * wz
            om[i] += dt * tq * wth
            for j in range(nj):
                tau = kp * (targets[i, j] - q[i, j]) - kd * qd[i, j]
                if tau > tmax:
                    tau = tmax
                elif tau < -tmax:
                    tau = -tmax
                qd[i, j] += dt * tau * wq
                pn[j] = 0.0
                pt[j] = 0.0
                pl[j] = 0.0

            # velocity-level constraints: joint stops and speculative foot contacts
            for _ in range(n_iter):
                for j in range(nj):
                    if q[i, j] <= qmin:
                        new = max(pl[j] - (qd[i, j] + (q[i, j] - qmin) / dt) / wq, 0.0)
                        qd[i, j] += wq * (new - pl[j])
                        pl[j] = new
                    elif q[i, j] >= qmax:
                        new = min(pl[j] - (qd[i, j] + (q[i, j] - qmax) / dt) / wq, 0.0)
                        qd[i, j] += wq * (new - pl[j])
                        pl[j] = new
                    bx = hips[j, 0]
                    bz = hips[j, 1] - (lmin + r * q[i, j])
                    dxw = c * bx - s * bz
                    dzw = s * bx + c * bz
                    gap = z[i] + dzw
                    if gap > 0.05:
                        continue
                    if gap < 0.0:
                        gap = 0.0
                    vfz = vz[i] + om[i] * dxw - r * c * qd[i, j]
                    kzz = wz + wth * dxw * dxw + wq * r * r * c * c
                    new = max(pn[j] + (-gap / dt - vfz) / kzz, 0.0)
                    d = new - pn[j]
                    pn[j] = new
                    vz[i] += wz * d
                    om[i] += wth * dxw * d
                    qd[i, j] -= wq * r * c * d
                    kxx = wx + wth * dzw * dzw + wq * r * r * s * s
                    if kxx > 1e-12:
                        vfx = vx[i] - om[i] * dzw + r * s * qd[i, j]
                        lim = mu * pn[j]
                        new = min(max(pt[j] - vfx / kxx, -lim), lim)
                        d = new - pt[j]
                        pt[j] = new
                        vx[i] += wx * d
                        om[i] -= wth * dzw * d
                        qd[i, j] += wq * r * s * d

            x[i] += dt * vx[i]
            z[i] += dt * vz[i]
            th[i] += dt * om[i]
            for j in range(nj):
                q[i, j] += dt * qd[i, j]

            # position projection for residual penetration
            c = math.cos(th[i])
            s = math.sin(th[i])
            for j in range(nj):
                if q[i, j] < qmin:
                    q[i, j] = qmin
                elif q[i, j] > qmax:
                    q[i, j] = qmax
                bx = hips[j, 0]
                bz = hips[j, 1] - (lmin + r * q[i, j])
                dxw = c * bx - s * bz
                gap = z[i] + s * bx + c * bz
                if gap < 0.0:
                    wqe = 0.0 if (q[i, j] <= qmin or q[i, j] >= qmax) else wq
                    kzz = wz + wth * dxw * dxw + wqe * r * r * c * c
                    lam = -gap / kzz
                    z[i] += wz * lam
                    th[i] += wth * dxw * lam
                    q[i, j] -= wqe * r * c * lam
            if z[i] > hmax[i]:
                hmax[i] = z[i]

            c = math.cos(th[i])
            s = math.sin(th[i])
            if _trunk_touches(z[i], c, s, a, b):
                contact[i, nj] = True
                term[i] = True
                cause[i] = CAUSE_BODY_CONTACT
                break

        c = math.cos(th[i])
        s = math.sin(th[i])
        for j in range(nj):
            bx = hips[j, 0]
            bz = hips[j, 1] - (lmin + r * q[i, j])
            contact[i, j] = z[i] + s * bx + c * bz <= _FOOT_TOL
        if not term[i]:
            contact[i, nj] = _trunk_touches(z[i], c, s, a, b)
        finite = math.isfinite(z[i]) and math.isfinite(vz[i]) and math.isfinite(th[i]) and math.isfinite(om[i])
        for j in range(nj):
            finite = finite and math.isfinite(q[i, j]) and math.isfinite(qd[i, j])
        if not finite:
            term[i] = True
            cause[i] = CAUSE_FAULT


def kernel_params(cfg) -> np.ndarray:
    return np.array([
        cfg.mass, cfg.gravity, cfg.trunk_inertia, cfg.joint_inertia, cfg.leg_lever, cfg.leg_min_length,
        cfg.q_min, cfg.q_max, cfg.kp, cfg.kd, cfg.torque_limit, cfg.friction, cfg.trunk_half_length,
        cfg.trunk_half_height, cfg.dt_sim, 1.0 if cfg.planar else 0.0,
    ])

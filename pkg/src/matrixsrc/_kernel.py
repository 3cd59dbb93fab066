"""Compiled inner loop: one HF half-cycle of fixed RK4 steps.

Mirrors ``circuit.network_state`` / ``circuit.step_tank`` step by step; the
pure-Python versions are the reference the tests compare against.
"""

import numba
import numpy as np

OFF, FULL, INTO, OUT = 0, 1, 2, 3

ERR_NONE = 0
ERR_SHORT = 1
ERR_OPEN = 2
ERR_NONFINITE = 3


@numba.njit(cache=True)
def _node(codes, base, v, k, need):
    # returns (phase or -1, error code)
    full = -1
    for x in range(3):
        if codes[k, base + x] == FULL:
            if full >= 0:
                return -1, ERR_SHORT
            full = x
    if full >= 0:
        vp = v[k, full]
        for x in range(3):
            if x == full:
                continue
            c = codes[k, base + x]
            if (c == INTO and v[k, x] > vp) or (c == OUT and v[k, x] < vp):
                return -1, ERR_SHORT
        return full, ERR_NONE
    if need == OFF:
        return -1, ERR_NONE
    pick = -1
    for x in range(3):
        if codes[k, base + x] == need:
            if pick < 0:
                pick = x
            elif need == INTO and v[k, x] > v[k, pick]:
                pick = x
            elif need == OUT and v[k, x] < v[k, pick]:
                pick = x
    if pick < 0:
        return -1, ERR_OPEN
    return pick, ERR_NONE


@numba.njit(cache=True)
def run_steps(codes, v, i0, vc0, vprev, L, C, r, nvb, i_eps, dt,
              out_i, out_vc, out_vmx, out_vrefl, out_conn):
    """Advance ``len(codes)`` steps.  Sample ``k`` holds the state at the
    start of step ``k`` and the voltages applied during it.

    Returns (i, vc, vmx_last, e_in, e_out, err, err_step).
    """
    m = codes.shape[0]
    i = i0
    vc = vc0
    vm = vprev
    e_in = 0.0
    e_out = 0.0
    for k in range(m):
        if i >= i_eps:
            need_t, need_b = INTO, OUT
            vr = nvb
        elif i <= -i_eps:
            need_t, need_b = OUT, INTO
            vr = -nvb
        else:
            need_t, need_b = OFF, OFF
            vr = 0.0
        ct, e1 = _node(codes, 0, v, k, need_t)
        cb, e2 = _node(codes, 3, v, k, need_b)
        if e1 != ERR_NONE:
            return i, vc, vm, e_in, e_out, e1, k
        if e2 != ERR_NONE:
            return i, vc, vm, e_in, e_out, e2, k
        if ct >= 0 and cb >= 0:
            vm = v[k, ct] - v[k, cb]
        else:
            ct = -1
            cb = -1
        out_i[k] = i
        out_vc[k] = vc
        out_vmx[k] = vm
        out_vrefl[k] = vr
        out_conn[k, 0] = ct
        out_conn[k, 1] = cb

        u = vm - vr
        k1i = (u - vc - r * i) / L
        k1v = i / C
        i2 = i + 0.5 * dt * k1i
        v2 = vc + 0.5 * dt * k1v
        k2i = (u - v2 - r * i2) / L
        k2v = i2 / C
        i3 = i + 0.5 * dt * k2i
        v3 = vc + 0.5 * dt * k2v
        k3i = (u - v3 - r * i3) / L
        k3v = i3 / C
        i4 = i + dt * k3i
        v4 = vc + dt * k3v
        k4i = (u - v4 - r * i4) / L
        k4v = i4 / C
        i_new = i + dt / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
        vc_new = vc + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (np.isfinite(i_new) and np.isfinite(vc_new)):
            return i, vc, vm, e_in, e_out, ERR_NONFINITE, k
        q = 0.5 * (i + i_new) * dt
        e_in += vm * q
        e_out += vr * q
        i = i_new
        vc = vc_new
    return i, vc, vm, e_in, e_out, ERR_NONE, m

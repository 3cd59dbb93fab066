"""Switched network of the matrix bridge, series LC tank and rectifier.

Each bidirectional switch is two common-source MOSFETs.  With one device on
and the other off the pair conducts only along the body diode of the off
device; with both off it blocks.  The bridge output has a top node ``t`` and
a bottom node ``b``; every phase reaches ``t`` through its ``xt`` switch and
``b`` through its ``xb`` switch, and ``v_mx = v_t - v_b``.

Body-diode orientation per device (current direction when conducting)::

    xtH: phase -> t      xtL: t -> phase
    xbH: b -> phase      xbL: phase -> b

The resonant current ``i_L`` leaves ``t``, flows through the tank and the
transformer primary, and returns into ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, NumericalError

# Switch conduction codes, node-relative.
OFF, FULL, INTO, OUT = 0, 1, 2, 3


@dataclass
class TankParams:
    L: float = 25e-6
    C: float = 100e-9
    n: float = 0.6
    r_series: float = 0.0

    @property
    def f0(self) -> float:
        return 1.0 / (2 * math.pi * math.sqrt(self.L * self.C))

    @property
    def z0(self) -> float:
        return math.sqrt(self.L / self.C)

    def problems(self) -> list[str]:
        out = []
        for name in ("L", "C", "n"):
            if not getattr(self, name) > 0:
                out.append(f"tank.{name} must be > 0")
        if not self.r_series >= 0:
            out.append("tank.r_series must be >= 0")
        return out


@dataclass
class BatteryModel:
    v_batt: float = 350.0
    power_cmd: float = 13e3

    def problems(self) -> list[str]:
        out = []
        if not self.v_batt > 0:
            out.append("battery.v_batt must be > 0")
        if not self.power_cmd >= 0:
            out.append("battery.power_cmd must be >= 0")
        return out


class TankState(NamedTuple):
    i_L: float
    v_C: float

    def energy(self, p: TankParams) -> float:
        return 0.5 * p.L * self.i_L**2 + 0.5 * p.C * self.v_C**2


def switch_codes(gates) -> np.ndarray:
    """Conduction codes of the six switches from gate booleans.

    ``gates`` has trailing dimension 12 in ``GATE_NAMES`` order; the result
    has trailing dimension 6 ordered (ta, tb, tc, ba, bb, bc).
    """
    g = np.asarray(gates, dtype=bool).reshape(*np.shape(gates)[:-1], 3, 4)
    th, tl, bh, bl = g[..., 0], g[..., 1], g[..., 2], g[..., 3]
    top = np.select([th & tl, th & ~tl, ~th & tl], [FULL, OUT, INTO], OFF)
    bot = np.select([bh & bl, bh & ~bl, ~bh & bl], [FULL, INTO, OUT], OFF)
    return np.concatenate([top, bot], axis=-1).astype(np.int8)


def _resolve_node(codes, v, need):
    """Phase connected to one bridge node, or None when undetermined.

    ``need`` is the direction the tank current requires at this node
    (INTO or OUT), or OFF when the current is inside the dead band.
    """
    full = [x for x in range(3) if codes[x] == FULL]
    if len(full) > 1:
        raise ContractError(f"shoot-through: phases {full} fully on at the same node")
    if full:
        p = full[0]
        for x in range(3):
            if x == p:
                continue
            if codes[x] == INTO and v[x] > v[p] or codes[x] == OUT and v[x] < v[p]:
                raise ContractError(f"shoot-through: body diode of phase {x} forward biased")
        return p
    if need == OFF:
        return None
    cands = [x for x in range(3) if codes[x] == need]
    if not cands:
        raise ContractError("open circuit: tank current has no conduction path")
    if need == INTO:
        return max(cands, key=lambda x: v[x])
    return min(cands, key=lambda x: v[x])


def network_state(g, v, i_L: float, i_eps: float = 1e-3):
    """Resolve the bridge for a gate vector.

    Returns ``(conn_t, conn_b)``, the phase indices attached to the top and
    bottom nodes.  Either may be None when the current sits in the dead band
    and no switch is fully on at that node.
    """
    g = [bool(x) for x in g]
    if len(g) != 12:
        raise ContractError("gate vector must have 12 entries")
    active = [x for x in range(3) if any(g[4 * x:4 * x + 4])]
    if len(active) > 2:
        raise ContractError("unselected phase conducting: gates of all three phases are on")
    codes = switch_codes(g)
    v = [float(x) for x in v]
    if i_L >= i_eps:
        need_t, need_b = INTO, OUT
    elif i_L <= -i_eps:
        need_t, need_b = OUT, INTO
    else:
        need_t = need_b = OFF
    return _resolve_node(codes[:3], v, need_t), _resolve_node(codes[3:], v, need_b)


def applied_tank_voltage(g, v, i_L: float, previous: float = 0.0, i_eps: float = 1e-3) -> float:
    """Matrix bridge output voltage for gates ``g`` and phase voltages ``v``.

    During dead time the body diodes pick the rails, so the output takes the
    polarity opposing ``i_L``.  With the current inside the dead band and no
    fully-on path the previous value is held.
    """
    ct, cb = network_state(g, v, i_L, i_eps)
    if ct is None or cb is None:
        return float(previous)
    return float(v[ct]) - float(v[cb])


def reflected_rectifier_voltage(i_L: float, b: BatteryModel, n: float, i_eps: float = 1e-3) -> float:
    if abs(i_L) < i_eps:
        return 0.0
    return math.copysign(n * b.v_batt, i_L)


def _deriv(i, vc, v_drive, p):
    return (v_drive - vc - p.r_series * i) / p.L, i / p.C


def step_tank(s, v_mx: float, v_refl: float, p: TankParams, dt: float) -> TankState:
    """One classical RK4 step of the tank with the applied voltages held."""
    if not dt > 0:
        raise ContractError("dt must be positive")
    i0, v0 = float(s[0]), float(s[1])
    u = v_mx - v_refl
    k1i, k1v = _deriv(i0, v0, u, p)
    k2i, k2v = _deriv(i0 + 0.5 * dt * k1i, v0 + 0.5 * dt * k1v, u, p)
    k3i, k3v = _deriv(i0 + 0.5 * dt * k2i, v0 + 0.5 * dt * k2v, u, p)
    k4i, k4v = _deriv(i0 + dt * k3i, v0 + dt * k3v, u, p)
    i1 = i0 + dt / 6 * (k1i + 2 * k2i + 2 * k3i + k4i)
    v1 = v0 + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    if not (math.isfinite(i1) and math.isfinite(v1)):
        raise NumericalError("numerical blow-up", state=TankState(i0, v0))
    return TankState(i1, v1)


def phase_currents(gates, v, i_L, i_eps: float = 1e-3) -> np.ndarray:
    """Grid-side phase currents reconstructed from gates and tank current.

    Vectorised over samples: ``gates`` (N, 12), ``v`` (N, 3), ``i_L`` (N,).
    The phase on the top node carries +i_L, the phase on the bottom node
    -i_L (positive = drawn from the grid).
    """
    gates = np.atleast_2d(np.asarray(gates, dtype=bool))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    i_L = np.atleast_1d(np.asarray(i_L, dtype=float))
    codes = switch_codes(gates)
    pos = i_L >= i_eps
    neg = i_L <= -i_eps
    n = len(i_L)
    rows = np.arange(n)
    out = np.zeros((n, 3))
    for node, (into_when_pos, sign) in enumerate(((True, 1.0), (False, -1.0))):
        c = codes[:, 3 * node:3 * node + 3]
        full = c == FULL
        has_full = full.any(axis=1)
        conn = np.where(has_full, np.argmax(full, axis=1), -1)
        need = np.where(pos == into_when_pos, INTO, OUT)
        need = np.where(pos | neg, need, -1)
        cand = c == need[:, None]
        vin = np.where(cand, v, -np.inf)
        vout = np.where(cand, v, np.inf)
        pick = np.where(need == INTO, np.argmax(vin, axis=1), np.argmin(vout, axis=1))
        ok = cand[rows, pick]
        conn = np.where(has_full, conn, np.where(ok, pick, -1))
        sel = conn >= 0
        out[rows[sel], conn[sel]] += sign * i_L[sel]
    return out

"""Fixed-step time-domain simulation of the complete converter.

The run is organised in HF half-cycles.  At each half-cycle boundary the
controller picks a frequency, the low-frequency layer picks sector and phase
pair (sampled at the half-cycle midpoint), and every gate edge inside the
half-cycle falls on an integration step boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernel
from .circuit import BatteryModel, TankParams, switch_codes
from .control import ControlConfig, FrequencyController
from .errors import ConfigError, NumericalError
from .modulation import (
    GATE_NAMES,
    ModulatorConfig,
    PhaseSelect,
    carrier_phase_at,
    dc_link_voltage,
    detect_sector,
    duty_cycles,
    gate_matrix,
    hf_bridge_signals,
    lf_pwm_select,
    row_program,
)


@dataclass
class GridParams:
    vin_amplitude: float = 277.1
    freq: float = 60.0
    phase: float = 0.0  # radians; freq = 0 freezes the source at this angle

    def voltages(self, t):
        """Phase-to-neutral voltages, shape (..., 3)."""
        t = np.asarray(t, dtype=float)
        th = 2 * math.pi * self.freq * t + self.phase
        return self.vin_amplitude * np.stack(
            [np.cos(th), np.cos(th - 2 * math.pi / 3), np.cos(th + 2 * math.pi / 3)], axis=-1
        )

    def problems(self) -> list[str]:
        out = []
        if not self.vin_amplitude > 0:
            out.append("grid.vin_amplitude must be > 0")
        if not self.freq >= 0:
            out.append("grid.freq must be >= 0")
        return out


@dataclass
class SimConfig:
    grid: GridParams = field(default_factory=GridParams)
    tank: TankParams = field(default_factory=TankParams)
    battery: BatteryModel = field(default_factory=BatteryModel)
    modulator: ModulatorConfig = field(default_factory=ModulatorConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    dt: float | None = None  # None: HF period at hf_freq_max / 2000
    duration: float = 1 / 60
    record_decimation: int = 20
    i_eps: float = 1e-3

    @property
    def step(self) -> float:
        if self.dt is not None:
            return self.dt
        return 1.0 / (2000.0 * self.modulator.hf_freq_max)

    def problems(self) -> list[str]:
        out = []
        out += self.grid.problems()
        tank_problems = self.tank.problems()
        out += tank_problems
        out += self.battery.problems()
        out += self.modulator.problems(None if tank_problems else self.tank.f0)
        out += self.control.problems()
        if self.modulator.hf_freq_max > 0:
            if not 0 < self.step <= 1.0 / self.modulator.hf_freq_max / 1000:
                out.append("dt must satisfy 0 < dt <= (minimum HF period) / 1000")
        if not self.duration > 0:
            out.append("duration must be > 0")
        if int(self.record_decimation) != self.record_decimation or self.record_decimation < 1:
            out.append("record_decimation must be an integer >= 1")
        if not self.i_eps > 0:
            out.append("i_eps must be > 0")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError(problems)


class Event(NamedTuple):
    t: float
    kind: str  # gate_turn_on | gate_turn_off | lf_transition | current_zero_cross
    device: str
    zvs: bool | None  # body-diode conduction at turn-on; None for other kinds
    diode_time: float
    hf: bool  # device is HF-commutated in its table row
    after_lf: bool  # first half-cycle after an LF transition


@dataclass
class SimTrace:
    config: SimConfig
    dt: float
    t: np.ndarray
    v: np.ndarray
    sector: np.ndarray
    pwm: np.ndarray
    gates: np.ndarray
    v_mx: np.ndarray
    i_L: np.ndarray
    v_C: np.ndarray
    i_batt: np.ndarray
    p_out: np.ndarray
    f_hf: np.ndarray
    e_in: np.ndarray
    e_out: np.ndarray
    events: list
    half_cycles: dict
    complete: bool = True

    @property
    def decimation(self) -> int:
        return int(self.config.record_decimation)

    def __len__(self):
        return len(self.t)

    def slice_time(self, t0: float, t1: float) -> "SimTrace":
        """Samples and events with t0 <= t < t1."""
        sel = (self.t >= t0) & (self.t < t1)
        hc = self.half_cycles
        hsel = (hc["t"] >= t0) & (hc["t"] < t1)
        kw = {name: getattr(self, name)[sel] for name in _SAMPLE_FIELDS}
        return SimTrace(
            config=self.config, dt=self.dt, **kw,
            events=[e for e in self.events if t0 <= e.t < t1],
            half_cycles={k: v[hsel] for k, v in hc.items()},
            complete=self.complete,
        )


_SAMPLE_FIELDS = ("t", "v", "sector", "pwm", "gates", "v_mx", "i_L", "v_C",
                  "i_batt", "p_out", "f_hf", "e_in", "e_out")
_HC_FIELDS = ("t", "steps", "freq", "target", "p_batt", "p_in", "sector", "pwm", "v_pair", "v_dc")


def _trailing_run(col, value):
    """Length of the run of ``value`` at the end of ``col``."""
    hit = col == value
    if not hit.size or not hit[-1]:
        return 0
    miss = np.flatnonzero(~hit)
    return hit.size - (miss[-1] + 1) if miss.size else hit.size


def run_simulation(cfg: SimConfig) -> SimTrace:
    cfg.validate()
    dt = cfg.step
    tank, batt, mod = cfg.tank, cfg.battery, cfg.modulator
    n_total = max(1, int(round(cfg.duration / dt)))
    n_dead = int(round(mod.dead_time / dt))
    dec = int(cfg.record_decimation)
    nvb = tank.n * batt.v_batt
    controller = FrequencyController(cfg.control, tank, batt, mod.hf_freq_min, mod.hf_freq_max)

    rec = {name: [] for name in _SAMPLE_FIELDS}
    hc = {name: [] for name in _HC_FIELDS}
    events: list[Event] = []

    k = 0
    i_L, v_C, v_prev = 0.0, 0.0, 0.0
    e_in_total = e_out_total = 0.0
    polarity = 1
    prev_gates = None  # the initial gate vector is a state, not a set of edges
    prev_key = None
    carry = [(-1, 0), (-1, 0)]  # (phase, run length) per node
    last_error = None
    last_duration = 0.0
    m_est = int(round(1.0 / (2 * mod.hf_freq_min * dt)))

    def build(complete=True):
        arrays = {}
        for name in _SAMPLE_FIELDS:
            parts = rec[name]
            arrays[name] = np.concatenate(parts) if parts else np.zeros((0,))
        if not rec["t"]:
            arrays["v"] = np.zeros((0, 3))
            arrays["pwm"] = np.zeros((0, 3), dtype=bool)
            arrays["gates"] = np.zeros((0, 12), dtype=bool)
        hcs = {name: np.asarray(vals) for name, vals in hc.items()}
        return SimTrace(config=cfg, dt=dt, **arrays, events=events, half_cycles=hcs,
                        complete=complete)

    try:
        while k < n_total:
            t0 = k * dt
            # low-frequency layer at the estimated half-cycle midpoint
            v_mid = cfg.grid.voltages(t0 + 0.5 * m_est * dt)
            sector = detect_sector(v_mid)
            duties = duty_cycles(v_mid, sector, mod.duty_law)
            v_dc = dc_link_voltage(v_mid)

            def operating_point(sel):
                mp = sector.modulated[0] if sel[sector.modulated[0]] else sector.modulated[1]
                vp = abs(float(v_mid[sector.clamped] - v_mid[mp]))
                tgt = batt.power_cmd * vp / v_dc if mod.duty_law == "ratio" else batt.power_cmd
                return vp, tgt

            def steps_for(sel):
                f = controller.preview(*operating_point(sel), last_error, last_duration)
                return max(2 * n_dead + 2, int(round(1.0 / (2 * f * dt))))

            def select_at(steps):
                phase = carrier_phase_at(t0 + 0.5 * steps * dt, mod.lf_carrier_freq)
                return lf_pwm_select(duties, sector, phase)

            # An LF edge moves to whichever boundary of the running half-cycle is
            # nearer, judged with that half-cycle's own length.
            if prev_key is not None and prev_key[1] == sector.index:
                select = prev_key[0]
                if select_at(steps_for(select)) != select:
                    other = PhaseSelect(*(b if x == sector.clamped else not b
                                          for x, b in enumerate(select)))
                    if select_at(steps_for(other)) == other:
                        select = other
            else:
                select = select_at(m_est)
                select = select_at(steps_for(select))
            select = PhaseSelect(*select)
            prog = row_program(sector, select)
            v_pair, target = operating_point(select)

            f = controller(v_pair, target, last_error, last_duration)
            m = max(2 * n_dead + 2, int(round(1.0 / (2 * f * dt))))
            m_est = m
            m_run = min(m, n_total - k)

            j = np.arange(m_run, dtype=float)
            tau = j if polarity > 0 else j + m
            h = np.stack(hf_bridge_signals(tau, 2.0 * m, float(n_dead), mod.phase_shift), axis=1)
            if batt.power_cmd <= 0:
                h[:] = False  # a zero command disables the HF bridge
            gates = gate_matrix(prog, h)
            codes = switch_codes(gates)
            tt = t0 + j * dt
            vph = cfg.grid.voltages(tt)

            out_i = np.empty(m_run)
            out_vc = np.empty(m_run)
            out_vmx = np.empty(m_run)
            out_vr = np.empty(m_run)
            out_conn = np.empty((m_run, 2), dtype=np.int8)
            i_end, vc_end, vm_end, e_in, e_out, err, err_k = _kernel.run_steps(
                codes, vph, i_L, v_C, v_prev, tank.L, tank.C, tank.r_series, nvb, cfg.i_eps, dt,
                out_i, out_vc, out_vmx, out_vr, out_conn,
            )
            if err != _kernel.ERR_NONE:
                msg = {
                    _kernel.ERR_SHORT: "impossible network state: shoot-through",
                    _kernel.ERR_OPEN: "impossible network state: open circuit under current",
                    _kernel.ERR_NONFINITE: "numerical blow-up",
                }[err]
                raise NumericalError(
                    f"{msg} at t={t0 + err_k * dt:.9g} s",
                    state=(out_i[err_k - 1] if err_k else i_L, out_vc[err_k - 1] if err_k else v_C),
                    partial_trace=build(complete=False),
                )

            # per-step cumulative energies at step starts
            q = 0.5 * (out_i + np.append(out_i[1:], i_end)) * dt
            ein_cum = e_in_total + np.concatenate([[0.0], np.cumsum(out_vmx * q)[:-1]])
            eout_cum = e_out_total + np.concatenate([[0.0], np.cumsum(out_vr * q)[:-1]])

            # events
            key = tuple(select), sector.index
            lf_now = prev_key is not None and tuple(select) != prev_key[0]
            n_before = len(events)
            if lf_now:
                events.append(Event(t0, "lf_transition", "", None, 0.0, False, True))
            first = gates[0] if prev_gates is None else prev_gates
            stacked = np.vstack([first[None, :], gates])
            edges_on = np.argwhere(~stacked[:-1] & stacked[1:])
            edges_off = np.argwhere(stacked[:-1] & ~stacked[1:])
            for jj, d in edges_off:
                events.append(Event(t0 + jj * dt, "gate_turn_off", GATE_NAMES[d], None, 0.0,
                                    bool(prog.source[d] >= 0), lf_now))
            for jj, d in edges_on:
                node = 0 if d % 4 < 2 else 1
                phase = d // 4
                seg = out_conn[:jj, node]
                run = _trailing_run(seg, phase)
                if run == jj and carry[node][0] == phase:
                    run += carry[node][1]
                events.append(Event(t0 + jj * dt, "gate_turn_on", GATE_NAMES[d], run > 0, run * dt,
                                    bool(prog.source[d] >= 0), lf_now))
            seq = np.sign(np.append(out_i, i_end))
            for jj in np.flatnonzero(seq[1:] * seq[:-1] < 0):
                events.append(Event(t0 + (jj + 1) * dt, "current_zero_cross", "", None, 0.0,
                                    False, False))
            events[n_before:] = sorted(events[n_before:], key=lambda e: e.t)
            for node in (0, 1):
                last = int(out_conn[-1, node])
                run = _trailing_run(out_conn[:, node], last)
                if run == m_run and carry[node][0] == last:
                    run += carry[node][1]
                carry[node] = (last, run)

            # recording
            j0 = (-k) % dec
            sl = slice(j0, None, dec)
            ns = len(range(j0, m_run, dec))
            if ns:
                rec["t"].append(tt[sl])
                rec["v"].append(vph[sl])
                rec["sector"].append(np.full(ns, sector.index, dtype=np.int8))
                rec["pwm"].append(np.tile(np.array(select, dtype=bool), (ns, 1)))
                rec["gates"].append(gates[sl])
                rec["v_mx"].append(out_vmx[sl])
                rec["i_L"].append(out_i[sl])
                rec["v_C"].append(out_vc[sl])
                pout = out_vr[sl] * out_i[sl]
                rec["i_batt"].append(pout / batt.v_batt)
                rec["p_out"].append(pout)
                rec["f_hf"].append(np.full(ns, 1.0 / (2 * m * dt)))
                rec["e_in"].append(ein_cum[sl])
                rec["e_out"].append(eout_cum[sl])

            dur = m_run * dt
            p_batt = e_out / dur
            hc["t"].append(t0)
            hc["steps"].append(m_run)
            hc["freq"].append(1.0 / (2 * m * dt))
            hc["target"].append(target)
            hc["p_batt"].append(p_batt)
            hc["p_in"].append(e_in / dur)
            hc["sector"].append(sector.index)
            hc["pwm"].append(tuple(select))
            hc["v_pair"].append(v_pair)
            hc["v_dc"].append(v_dc)

            last_error = target - p_batt
            last_duration = dur
            i_L, v_C, v_prev = i_end, vc_end, vm_end
            e_in_total += e_in
            e_out_total += e_out
            prev_gates = gates[-1]
            prev_key = key
            polarity = -polarity
            k += m_run
    except (OverflowError, FloatingPointError) as exc:
        raise NumericalError(f"numerical blow-up at t={k * dt:.9g} s ({exc})",
                             state=(i_L, v_C), partial_trace=build(complete=False)) from None

    return build()

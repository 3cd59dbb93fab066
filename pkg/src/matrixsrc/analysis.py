"""Post-processing of simulation traces and the analytic loss model."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .circuit import FULL, phase_currents, switch_codes
from .errors import ContractError
from .modulation import SECTORS, SectorId, duty_cycles


# --------------------------------------------------------------------------
# zero-voltage switching

class ZvsRecord(NamedTuple):
    t: float
    device: str
    diode_conduction_time: float
    zvs: bool
    after_lf: bool


@dataclass
class ZvsReport:
    events: list = field(default_factory=list)
    total_events: int = 0
    zvs_events: int = 0
    min_diode_conduction_time: float = 0.0
    mean_diode_conduction_time: float = 0.0
    lf_total: int = 0
    lf_zvs: int = 0

    @property
    def fraction(self) -> float:
        return self.zvs_events / self.total_events if self.total_events else 0.0

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("events")
        d["zvs_fraction"] = self.fraction
        return d


def detect_zvs_events(trace) -> ZvsReport:
    """Grade every HF-device turn-on by its body-diode conduction time.

    An LF transition counts as soft when all HF turn-ons of the half-cycle it
    opens are soft (the incoming phase leg takes over on a conducting diode).
    """
    recs = [
        ZvsRecord(e.t, e.device, e.diode_time, bool(e.diode_time > 0), e.after_lf)
        for e in trace.events
        if e.kind == "gate_turn_on" and e.hf
    ]
    rep = ZvsReport(events=recs, total_events=len(recs), zvs_events=sum(r.zvs for r in recs))
    if recs:
        times = np.array([r.diode_conduction_time for r in recs])
        rep.min_diode_conduction_time = float(times.min())
        rep.mean_diode_conduction_time = float(times.mean())

    lf_times = [e.t for e in trace.events if e.kind == "lf_transition"]
    if lf_times:
        on_t = np.array([r.t for r in recs if r.after_lf])
        on_ok = np.array([r.zvs for r in recs if r.after_lf], dtype=bool)
        bounds = list(lf_times[1:]) + [math.inf]
        for t0, t1 in zip(lf_times, bounds):
            # turn-ons of the half-cycle opened by this transition
            sel = (on_t >= t0) & (on_t < t1)
            if not sel.any():
                continue
            first = on_t[sel].min()
            window = sel & (on_t <= first + 0.5 / trace.config.modulator.hf_freq_min)
            rep.lf_total += 1
            rep.lf_zvs += int(on_ok[window].all())
    return rep


def zvs_from_waveform(trace, rel_tol: float = 0.01) -> ZvsReport:
    """Waveform-level ZVS check for fully sampled traces (decimation 1).

    For each HF turn-on, measures how long before it ``v_mx`` already sat at
    its post-turn-on value with the tank current freewheeling (v_mx * i_L < 0).
    """
    if trace.decimation != 1:
        raise ContractError("waveform ZVS check needs record_decimation = 1")
    t, vmx, il = trace.t, trace.v_mx, trace.i_L
    recs = []
    for e in trace.events:
        if e.kind != "gate_turn_on" or not e.hf:
            continue
        k = int(round((e.t - t[0]) / trace.dt))
        if k <= 0 or k >= len(t):
            continue
        v_post = vmx[k]
        run = 0
        j = k - 1
        tol = rel_tol * abs(v_post)
        while j >= 0 and abs(vmx[j] - v_post) <= tol and vmx[j] * il[j] < 0:
            run += 1
            j -= 1
        dct = run * trace.dt
        recs.append(ZvsRecord(e.t, e.device, dct, dct > 0, e.after_lf))
    rep = ZvsReport(events=recs, total_events=len(recs), zvs_events=sum(r.zvs for r in recs))
    if recs:
        times = np.array([r.diode_conduction_time for r in recs])
        rep.min_diode_conduction_time = float(times.min())
        rep.mean_diode_conduction_time = float(times.mean())
    return rep


# --------------------------------------------------------------------------
# input currents and power factor

class AveragedCurrents(NamedTuple):
    t: np.ndarray
    i: np.ndarray  # (N, 3), cycle-averaged phase currents
    v: np.ndarray  # (N, 3), phase voltages at the window centres
    sample_dt: float


def reconstruct_phase_currents(trace) -> np.ndarray:
    return phase_currents(trace.gates, trace.v, trace.i_L, trace.config.i_eps)


def _moving_mean(x, w):
    c = np.cumsum(np.vstack([np.zeros((1, x.shape[1])), x]), axis=0)
    return (c[w:] - c[:-w]) / w


def cycle_averaged_input_currents(trace, window: float | None = None) -> AveragedCurrents:
    """Sliding mean (width ``window``, default one LF period) of the
    reconstructed instantaneous phase currents."""
    lf_period = 1.0 / trace.config.modulator.lf_carrier_freq
    if window is None:
        window = lf_period
    if window < lf_period * (1 - 1e-9):
        raise ContractError(f"window too short: {window:g} s < LF period {lf_period:g} s")
    ts = trace.dt * trace.decimation
    w = max(1, int(round(window / ts)))
    if len(trace.t) < w:
        raise ContractError("trace shorter than averaging window")
    i = reconstruct_phase_currents(trace)
    avg = _moving_mean(i, w)
    lo = w // 2
    idx = np.arange(lo, lo + avg.shape[0])
    return AveragedCurrents(trace.t[idx], avg, trace.v[idx], ts)


def whole_periods(avg: AveragedCurrents, freq: float, periods: int | None = None) -> AveragedCurrents:
    """Leading samples covering an integer number of grid periods."""
    if not freq > 0:
        raise ContractError("grid periods need a source with freq > 0")
    per = 1.0 / (freq * avg.sample_dt)
    avail = int(len(avg.t) // per)
    if periods is None and avail < 1 or periods is not None and not 1 <= periods <= avail:
        raise ContractError(
            f"need {periods or 1} full grid period(s) of averaged data, have {avail}")
    periods = periods or avail
    n = int(round(periods * per))
    return AveragedCurrents(avg.t[:n], avg.i[:n], avg.v[:n], avg.sample_dt)


@dataclass
class PFReport:
    k_fit: float
    k_theory: float
    r_squared: float
    thd: float
    displacement_angle: float
    per_phase: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def thd_and_angle(x, v, periods: int, harmonics=range(2, 41)):
    """THD of ``x`` and the fundamental angle of ``x`` relative to ``v``
    (degrees, positive = x lags v), over exactly ``periods`` periods."""
    X = np.fft.rfft(x) / len(x)
    V = np.fft.rfft(v) / len(v)
    fund = abs(X[periods])
    bins = [h * periods for h in harmonics if h * periods < len(X)]
    thd = math.sqrt(float(np.sum(np.abs(X[bins]) ** 2))) / fund if fund > 0 else math.inf
    ang = math.degrees(np.angle(V[periods]) - np.angle(X[periods]))
    ang = (ang + 180.0) % 360.0 - 180.0
    return thd, ang


def input_current_quality(avg: AveragedCurrents, grid, p_batt: float) -> PFReport:
    """Least-squares fit I_x = k * V_x per phase, THD (harmonics 2-40) and
    displacement angle of the fundamental.  ``avg`` must span an integer
    number of grid periods."""
    n = len(avg.t)
    cycles = n * avg.sample_dt * grid.freq
    periods = int(round(cycles))
    if periods < 1 or abs(cycles - periods) > avg.sample_dt * grid.freq + 1e-9:
        raise ContractError(f"averaged data spans {cycles:.6g} grid periods, not an integer count")
    k_theory = 2.0 * p_batt / (3.0 * grid.vin_amplitude**2)
    per = {}
    for x, name in enumerate("abc"):
        i, v = avg.i[:, x], avg.v[:, x]
        k = float(np.dot(i, v) / np.dot(v, v))
        ss_res = float(np.sum((i - k * v) ** 2))
        ss_tot = float(np.sum((i - i.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
        thd, ang = thd_and_angle(i, v, periods)
        per[name] = {"k": k, "r_squared": max(0.0, r2), "thd": thd, "displacement_angle": ang}
    return PFReport(
        k_fit=float(np.mean([p["k"] for p in per.values()])),
        k_theory=k_theory,
        r_squared=min(p["r_squared"] for p in per.values()),
        thd=max(p["thd"] for p in per.values()),
        displacement_angle=max((p["displacement_angle"] for p in per.values()), key=abs),
        per_phase=per,
    )


# --------------------------------------------------------------------------
# DC link

def dc_link_eq(v) -> np.ndarray:
    """1.5 * V_in^2 / |V_clamped| for voltages of shape (..., 3)."""
    v = np.asarray(v, dtype=float)
    vin_sq = (2.0 / 3.0) * np.sum(v**2, axis=-1)
    return 1.5 * vin_sq / np.max(np.abs(v), axis=-1)


def dc_link_range(vin_amplitude: float) -> tuple[float, float]:
    return 1.5 * vin_amplitude, math.sqrt(3.0) * vin_amplitude


@dataclass
class EnvelopeCheck:
    """Per LF cycle: simulated link amplitude against the averaged-link formula.

    ``simulated`` weights the mean plateau |v_mx| of each active phase pair by
    the commanded duty of that pair; ``time_averaged`` is the plain time mean
    of the plateau |v_mx| over the cycle, kept for comparison.
    """

    t: np.ndarray
    simulated: np.ndarray
    theory: np.ndarray
    rel_deviation: np.ndarray
    time_averaged: np.ndarray

    @property
    def max_rel_deviation(self) -> float:
        return float(np.max(np.abs(self.rel_deviation))) if len(self.t) else 0.0

    @property
    def max_time_averaged_deviation(self) -> float:
        if not len(self.t):
            return 0.0
        return float(np.max(np.abs(self.time_averaged / self.theory - 1.0)))


def _mean_duties(v, sector: SectorId, law: str, samples: int = 16) -> np.ndarray:
    idx = np.unique(np.linspace(0, len(v) - 1, min(samples, len(v))).astype(int))
    return np.mean([duty_cycles(v[k], sector, law) for k in idx], axis=0)


def dc_link_envelope_check(trace) -> EnvelopeCheck:
    """Duty-weighted plateau |v_mx| per complete LF PWM cycle versus the mean
    of 1.5 * V_in^2 / |V_clamped| over the same cycle."""
    if trace.config.modulator.phase_shift != 0:
        raise ContractError("envelope check needs full-duty HF operation (phase_shift = 0)")
    law = trace.config.modulator.duty_law
    codes = switch_codes(trace.gates)
    full_t = codes[:, :3] == FULL
    full_b = codes[:, 3:] == FULL
    plateau = full_t.any(axis=1) & full_b.any(axis=1)
    pair = np.argmax(full_t, axis=1) * 3 + np.argmax(full_b, axis=1)
    t_lf = 1.0 / trace.config.modulator.lf_carrier_freq
    ts = trace.dt * trace.decimation
    cyc = np.floor((trace.t + 0.5 * ts) / t_lf).astype(int)
    out_t, sim, tavg, th = [], [], [], []
    if len(cyc):
        for c in range(cyc[0] + 1, cyc[-1]):  # complete cycles only
            in_cycle = cyc == c
            sel = in_cycle & plateau
            if not sel.any():
                continue
            n_cycle = np.count_nonzero(in_cycle)
            num = den = 0.0
            for sec in np.unique(trace.sector[in_cycle]):
                in_sec = in_cycle & (trace.sector == sec)
                sector = SECTORS[int(sec)]
                d = _mean_duties(trace.v[in_sec], sector, law)
                share = np.count_nonzero(in_sec) / n_cycle
                for pc in np.unique(pair[sel & in_sec]):
                    a, b = divmod(int(pc), 3)
                    mod = b if a == sector.clamped else a
                    w = d[mod] * share
                    num += w * float(np.mean(np.abs(trace.v_mx[sel & in_sec & (pair == pc)])))
                    den += w
            if den <= 0:
                continue
            out_t.append((c + 0.5) * t_lf)
            sim.append(num / den)
            tavg.append(float(np.mean(np.abs(trace.v_mx[sel]))))
            th.append(float(np.mean(dc_link_eq(trace.v[in_cycle]))))
    sim, tavg, th = np.array(sim), np.array(tavg), np.array(th)
    return EnvelopeCheck(np.array(out_t), sim, th, (sim - th) / th if len(th) else th, tavg)


# --------------------------------------------------------------------------
# power

class PowerBalance(NamedTuple):
    e_in: float
    e_out: float
    delta_tank: float
    residual: float


def power_balance(trace, method: str = "accumulated") -> PowerBalance:
    """Grid energy in, battery energy out and tank storage change over the trace.

    ``accumulated`` uses the per-step energy integrals kept by the simulator;
    ``samples`` integrates sum(v_x * i_x) and battery power from the recorded
    samples (trapezoid, needs decimation 1).
    """
    if len(trace.t) < 2:
        return PowerBalance(0.0, 0.0, 0.0, 0.0)
    p = trace.config.tank
    e_tank = 0.5 * p.L * trace.i_L**2 + 0.5 * p.C * trace.v_C**2
    d_tank = float(e_tank[-1] - e_tank[0])
    if method == "accumulated":
        e_in = float(trace.e_in[-1] - trace.e_in[0])
        e_out = float(trace.e_out[-1] - trace.e_out[0])
    elif method == "samples":
        if trace.decimation != 1:
            raise ContractError("sample integration needs record_decimation = 1")
        # connections and voltages are held over each step, the tank current
        # is trapezoid-averaged
        i_mid = 0.5 * (trace.i_L[:-1] + trace.i_L[1:])
        i0 = trace.i_L[:-1]
        conn = np.divide(phase_currents(trace.gates[:-1], trace.v[:-1], i0, trace.config.i_eps),
                         i0[:, None], out=np.zeros((len(i0), 3)), where=i0[:, None] != 0)
        e_in = float(np.sum(np.sum(trace.v[:-1] * conn, axis=1) * i_mid) * trace.dt)
        vr = np.divide(trace.p_out, trace.i_L, out=np.zeros_like(trace.p_out),
                       where=trace.i_L != 0)
        e_out = float(np.sum(vr[:-1] * 0.5 * (trace.i_L[:-1] + trace.i_L[1:])) * trace.dt)
    else:
        raise ContractError(f"unknown method {method!r}")
    return PowerBalance(e_in, e_out, d_tank, e_in - e_out - d_tank)


def hf_cycle_power(trace):
    """(start time, mean battery power) per full HF cycle (two half-cycles)."""
    hc = trace.half_cycles
    n = len(hc["t"]) // 2 * 2
    steps = hc["steps"][:n].astype(float)
    energy = hc["p_batt"][:n] * steps * trace.dt
    e = energy.reshape(-1, 2).sum(axis=1)
    d = steps.reshape(-1, 2).sum(axis=1) * trace.dt
    return hc["t"][:n:2], e / d


def lf_cycle_power(trace):
    """(start time, mean battery power) per LF PWM period."""
    hc = trace.half_cycles
    t_lf = 1.0 / trace.config.modulator.lf_carrier_freq
    dur = hc["steps"] * trace.dt
    energy = hc["p_batt"] * dur
    idx = np.floor((hc["t"] + 0.5 * dur) / t_lf).astype(int)
    starts, p = [], []
    for c in np.unique(idx)[1:-1]:
        sel = idx == c
        starts.append(c * t_lf)
        p.append(energy[sel].sum() / dur[sel].sum())
    return np.array(starts), np.array(p)


# --------------------------------------------------------------------------
# analytic conduction-loss model

@dataclass
class EfficiencyReport:
    p_batt: float
    r_ds: float
    v_pri: float
    v_sec: float
    i_pri_rms: float
    i_batt: float
    p_loss_pri: float
    p_loss_sec: float
    p_loss_tx: float
    efficiency: float

    def to_dict(self) -> dict:
        return asdict(self)


def conduction_loss_model(p_batt: float, r_ds: float, v_pri: float, v_sec: float,
                          p_loss_tx: float) -> EfficiencyReport:
    """Four conducting devices on the matrix side at I = P / V_pri, two on the
    rectifier side at I = P / V_sec, plus a fixed transformer loss."""
    if not (p_batt > 0 and v_pri > 0 and v_sec > 0):
        raise ContractError("p_batt, v_pri and v_sec must be > 0")
    if r_ds < 0 or p_loss_tx < 0:
        raise ContractError("r_ds and p_loss_tx must be >= 0")
    i_pri = p_batt / v_pri
    i_batt = p_batt / v_sec
    p_pri = 4.0 * i_pri**2 * r_ds
    p_sec = 2.0 * i_batt**2 * r_ds
    eff = p_batt / (p_batt + p_pri + p_sec + p_loss_tx)
    return EfficiencyReport(p_batt, r_ds, v_pri, v_sec, i_pri, i_batt, p_pri, p_sec,
                            p_loss_tx, eff)


def turns_ratio_selection(v_pri_min: float, v_pri_max: float, v_sec_min: float,
                          v_sec_max: float) -> float:
    vals = (v_pri_min, v_pri_max, v_sec_min, v_sec_max)
    if min(vals) <= 0 or v_pri_min > v_pri_max or v_sec_min > v_sec_max:
        raise ContractError("voltages must be positive with min <= max")
    return ((v_pri_min + v_pri_max) / 2.0) / ((v_sec_min + v_sec_max) / 2.0)


# --------------------------------------------------------------------------
# one-call summary

def _relative_stats(p, ref):
    if not len(p) or ref <= 0:
        return {"cycles": int(len(p))}
    d = p / ref - 1.0
    return {"cycles": int(len(p)), "min_rel": float(d.min()), "max_rel": float(d.max()),
            "fraction_outside_5pct": float(np.mean(np.abs(d) > 0.05))}


def startup_end(trace) -> float:
    """End of the first HF cycle when the trace starts from a de-energised
    tank, else the trace start.  Turn-ons before it have no resonant current
    to commutate and are not part of steady-state ZVS grading."""
    hc = trace.half_cycles
    if not len(trace.t):
        return 0.0
    at_rest = trace.i_L[0] == 0.0 and trace.v_C[0] == 0.0
    if at_rest and len(hc["t"]) > 2 and hc["t"][0] == trace.t[0]:
        return float(hc["t"][2])
    return float(trace.t[0])


def summarize(trace) -> dict:
    """JSON-ready digest of every analysis that the trace supports."""
    cfg = trace.config
    out = {"samples": int(len(trace.t)), "complete": bool(trace.complete)}
    t_start = startup_end(trace)
    steady = dataclasses.replace(trace, events=[e for e in trace.events if e.t >= t_start])
    out["zvs_summary"] = detect_zvs_events(steady).summary()
    out["zvs_summary"]["startup_excluded"] = detect_zvs_events(trace).total_events - \
        out["zvs_summary"]["total_events"]
    pb = power_balance(trace)
    span = float(trace.t[-1] - trace.t[0]) + trace.dt * trace.decimation if len(trace.t) else 0.0
    out["power_balance"] = {
        **pb._asdict(),
        "relative_residual": pb.residual / pb.e_in if pb.e_in else 0.0,
        "mean_battery_power": pb.e_out / span if span else 0.0,
    }
    out["hf_cycle_power"] = _relative_stats(hf_cycle_power(trace)[1], cfg.battery.power_cmd)
    out["lf_cycle_power"] = _relative_stats(lf_cycle_power(trace)[1], cfg.battery.power_cmd)
    if cfg.modulator.phase_shift == 0:
        env = dc_link_envelope_check(trace)
        out["dc_link_envelope"] = {"cycles": int(len(env.t)),
                                   "max_rel_deviation": env.max_rel_deviation,
                                   "max_time_averaged_deviation": env.max_time_averaged_deviation}
    try:
        avg = whole_periods(cycle_averaged_input_currents(trace), cfg.grid.freq)
        out["input_currents"] = input_current_quality(avg, cfg.grid, cfg.battery.power_cmd).to_dict()
    except ContractError as exc:
        out["input_currents"] = {"available": False, "reason": str(exc)}
    return out

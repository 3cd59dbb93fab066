"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""

import dataclasses
import itertools
import math
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE, GRID_PERIOD, make_cfg, timed_run
from test_modulation import expected_gates, reference_row

from matrixsrc.analysis import (
    conduction_loss_model,
    cycle_averaged_input_currents,
    dc_link_envelope_check,
    dc_link_eq,
    detect_zvs_events,
    hf_cycle_power,
    input_current_quality,
    lf_cycle_power,
    power_balance,
    startup_end,
    whole_periods,
)
from matrixsrc.circuit import TankParams, TankState, step_tank
from matrixsrc.modulation import (
    SECTORS,
    SWITCHING_TABLE,
    detect_sector,
    lf_duty_cycles,
    map_gates,
    power_balanced_duty_cycles,
)
from matrixsrc.simulation import GridParams, SimConfig

F0 = TankParams().f0


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def steady_events(trace):
    t0 = startup_end(trace)
    return dataclasses.replace(trace, events=[e for e in trace.events if e.t >= t0])


def test_1_efficiency():
    t0 = time.perf_counter()
    r = conduction_loss_model(13000, 0.03, 447.75, 375, 90)
    dt = time.perf_counter() - t0
    ok = (abs(r.p_loss_pri - 101.1) <= 0.2 and abs(r.p_loss_sec - 72.1) <= 0.1
          and abs(100 * r.efficiency - 98.0) <= 0.05 and dt < 1)
    report(1, ok, f"p_loss_pri={r.p_loss_pri:.3f} W, p_loss_sec={r.p_loss_sec:.3f} W, "
                  f"efficiency={100 * r.efficiency:.3f} %, {dt * 1e3:.2f} ms")


def test_2_switching_table():
    t0 = time.perf_counter()
    legs = [(True, False), (False, True)]
    cases = mismatches = 0
    for (sector, select), tokens in SWITCHING_TABLE.items():
        assert tokens == reference_row(sector, select)
        for (ah, al), (bh, bl) in itertools.product(legs, legs):
            h = (ah, al, bh, bl)
            cases += 1
            mismatches += tuple(map_gates(SECTORS[sector], select, h)) != expected_gates(tokens, h)
    dt = time.perf_counter() - t0
    ok = len(SWITCHING_TABLE) == 12 and cases == 48 and mismatches == 0 and dt < 1
    report(2, ok, f"{cases} cases, {mismatches} mismatches, {dt * 1e3:.1f} ms")


def test_3_dc_link_envelope(grid_run):
    trace, runtime = grid_run
    t = np.linspace(0, GRID_PERIOD, 720001)
    eq = dc_link_eq(GridParams().voltages(t))
    lo, hi = float(eq.min()), float(eq.max())
    analytic = abs(lo - 415.7) <= 0.1 and abs(hi - 480.0) <= 0.1
    env = dc_link_envelope_check(trace.slice_time(0.0, GRID_PERIOD))
    ok = analytic and env.max_rel_deviation <= 0.02 and runtime < 60
    report(3, ok, f"link formula span [{lo:.2f}, {hi:.2f}] V; duty-weighted |v_mx| max deviation "
                  f"{100 * env.max_rel_deviation:.2f} % over {len(env.t)} LF cycles "
                  f"(plain time mean {100 * env.max_time_averaged_deviation:.2f} %); "
                  f"sim {runtime:.1f} s")


def test_4_unity_power_factor(grid_run):
    trace, runtime = grid_run
    avg = whole_periods(cycle_averaged_input_currents(trace.slice_time(1e-3, 1.0)),
                        trace.config.grid.freq, 1)
    r = input_current_quality(avg, trace.config.grid, trace.config.battery.power_cmd)
    k_err = abs(r.k_fit / r.k_theory - 1)
    ok = (r.r_squared >= 0.99 and k_err <= 0.05 and r.thd < 0.05
          and abs(r.displacement_angle) < 2 and abs(r.k_theory - 0.11287) < 1e-5 and runtime < 60)
    report(4, ok, f"R2={r.r_squared:.4f}, k={r.k_fit:.5f} vs {r.k_theory:.5f} A/V "
                  f"({100 * k_err:.2f} %), THD={100 * r.thd:.2f} %, "
                  f"angle={r.displacement_angle:.3f} deg, sim {runtime:.1f} s")


def test_5_zvs_suite(grid_run):
    t0 = time.perf_counter()
    parts, ok = [], True

    # (a) literal operating point: fixed 1.1 f0, then the closed-loop rated run
    lit, _ = timed_run(make_cfg(duration=GRID_PERIOD, control__mode="open_loop_fixed",
                                control__fixed_freq=1.1 * F0))
    for name, tr in (("1.1*f0", lit), ("rated closed loop", grid_run[0])):
        rep = detect_zvs_events(steady_events(tr.slice_time(0.0, GRID_PERIOD)))
        good = (rep.total_events > 0 and rep.zvs_events == rep.total_events
                and rep.lf_total > 0 and rep.lf_zvs == rep.lf_total
                and rep.min_diode_conduction_time > 0)
        ok &= good
        parts.append(f"(a) {name}: HF {rep.zvs_events}/{rep.total_events}, "
                     f"LF {rep.lf_zvs}/{rep.lf_total}, min diode {rep.min_diode_conduction_time * 1e9:.0f} ns")

    # (b) capacitive region
    below, _ = timed_run(make_cfg(duration=2e-3, modulator__hf_freq_min=70e3,
                                  modulator__allow_below_resonance=True,
                                  control__mode="open_loop_fixed", control__fixed_freq=0.8 * F0))
    rep = detect_zvs_events(steady_events(below))
    ok &= rep.total_events - rep.zvs_events > 0
    parts.append(f"(b) 0.8*f0: {rep.total_events - rep.zvs_events}/{rep.total_events} non-ZVS")

    # (c) no dead time
    nodt, _ = timed_run(make_cfg(duration=2e-3, modulator__dead_time=0.0))
    rep = detect_zvs_events(nodt)
    ok &= rep.total_events > 0 and rep.zvs_events == 0
    parts.append(f"(c) dead time 0: {rep.zvs_events}/{rep.total_events} ZVS")

    dt = time.perf_counter() - t0 + grid_run[1]
    ok &= dt < 120
    report(5, ok, "; ".join(parts) + f"; {dt:.1f} s")


@pytest.fixture(scope="module")
def settled_run(warm_kernel):
    return timed_run(make_cfg(duration=3 * GRID_PERIOD))


def hf_target(trace):
    """Mean of the controller's own half-cycle power targets per HF cycle."""
    hc = trace.half_cycles
    n = len(hc["t"]) // 2 * 2
    w = hc["steps"][:n].reshape(-1, 2).astype(float)
    return (hc["target"][:n].reshape(-1, 2) * w).sum(axis=1) / w.sum(axis=1)


def test_6_constant_power(settled_run):
    trace, runtime = settled_run
    window = trace.slice_time(2 * GRID_PERIOD, 3 * GRID_PERIOD)
    p_cmd = trace.config.battery.power_cmd
    _, p_hf = hf_cycle_power(window)
    _, p_lf = lf_cycle_power(window)
    d_hf, d_lf = p_hf / p_cmd - 1, p_lf / p_cmd - 1
    track = p_hf / hf_target(window) - 1
    mean = power_balance(window).e_out / GRID_PERIOD / p_cmd - 1

    # diagnostic only: the duty law that asks for equal power in every HF cycle
    alt, _ = timed_run(make_cfg(duration=3 * GRID_PERIOD, modulator__duty_law="power_balanced"))
    d_alt = hf_cycle_power(alt.slice_time(2 * GRID_PERIOD, 3 * GRID_PERIOD))[1] / p_cmd - 1

    ok = bool(np.all(np.abs(d_hf) <= 0.05)) and runtime < 60
    report(6, ok, f"per-HF-cycle power {100 * d_hf.min():+.1f} % .. {100 * d_hf.max():+.1f} % "
                  f"({100 * np.mean(np.abs(d_hf) > 0.05):.1f} % of {len(d_hf)} cycles outside "
                  f"+-5 %); per-LF-cycle {100 * d_lf.min():+.1f} % .. {100 * d_lf.max():+.1f} %; "
                  f"period mean {100 * mean:+.2f} %; vs own per-cycle target "
                  f"{100 * track.min():+.1f} % .. {100 * track.max():+.1f} %; "
                  f"power_balanced duties {100 * d_alt.min():+.1f} % .. {100 * d_alt.max():+.1f} %; "
                  f"sim {runtime:.1f} s")


def test_7_numerical_integrity(grid_run):
    trace, _ = grid_run
    pb = power_balance(trace.slice_time(0.0, GRID_PERIOD))
    rel_res = abs(pb.residual) / pb.e_in

    p = TankParams()
    period = 2 * math.pi * math.sqrt(p.L * p.C)
    n = int(round(period / SimConfig().step))
    s = TankState(1.0, 0.0)
    for _ in range(n):
        s = step_tank(s, 0.0, 0.0, p, period / n)
    lc_err = max(abs(s.i_L - 1.0), abs(s.v_C) / p.z0)

    fixed, _ = timed_run(make_cfg(grid__freq=0.0, control__mode="open_loop_fixed",
                                  control__fixed_freq=1.1 * F0, record_decimation=1,
                                  duration=30 / (1.1 * F0)))
    m = int(fixed.half_cycles["steps"][-2])
    tail = fixed.i_L[-4 * m:]
    anti = float(np.max(np.abs(tail[m:3 * m] + tail[2 * m:4 * m])) / np.abs(tail).max())

    ok = rel_res <= 1e-3 and lc_err <= 1e-6 and anti <= 0.01
    report(7, ok, f"energy residual {rel_res:.2e} of input; free LC error {lc_err:.2e} "
                  f"({n} steps); half-wave antisymmetry {100 * anti:.3f} % of peak")


def test_8_modulation_identities(grid_run):
    rng = np.random.default_rng(20261014)
    theta = rng.uniform(0, 2 * math.pi, 10_000)
    amp = rng.uniform(10.0, 1000.0, 10_000)
    worst = 0.0
    clamp_ok = True
    for th, a in zip(theta, amp):
        v = GridParams(vin_amplitude=a, phase=th).voltages(0.0)
        s = detect_sector(v)
        for law in (lf_duty_cycles, power_balanced_duty_cycles):
            d = law(v, s)
            clamp_ok &= d[s.clamped] == 1.0
            worst = max(worst, abs(d[s.modulated[0]] + d[s.modulated[1]] - 1.0))

    trace = grid_run[0]
    hc = trace.half_cycles
    sel = hc["t"] < GRID_PERIOD
    dur = hc["steps"][sel] * trace.dt
    occ = np.array([dur[hc["sector"][sel] == k].sum() for k in range(1, 7)]) / GRID_PERIOD
    step = float(dur.max()) / GRID_PERIOD
    occ_err = np.abs(occ - 1 / 6)
    ok = clamp_ok and worst <= 1e-9 and bool(np.all(occ_err <= step))
    report(8, ok, f"duty identity worst {worst:.1e}, clamp=1 {'held' if clamp_ok else 'broken'}; "
                  f"sector occupancy worst {100 * occ_err.max():.3f} % vs one LF step "
                  f"{100 * step:.3f} % of the period")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

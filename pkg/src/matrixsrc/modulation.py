"""Two-layer PWM for the 3x1 matrix bridge.

The low-frequency layer picks the phase pair that feeds the resonant tank
(unity power factor selection); the high-frequency layer recreates the drive
of an LC-converter input H-bridge inside that pair.  ``map_gates`` combines
both through the sector/PWM switching table.

Phases are indexed a=0, b=1, c=2 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ContractError

PHASES = ("a", "b", "c")

GATE_NAMES = (
    "AtH", "AtL", "AbH", "AbL",
    "BtH", "BtL", "BbH", "BbL",
    "CtH", "CtL", "CbH", "CbL",
)

HBRIDGE_NAMES = ("AH", "AL", "BH", "BL")


class PhaseVoltages(NamedTuple):
    va: float
    vb: float
    vc: float


class DutyTriple(NamedTuple):
    d_a: float
    d_b: float
    d_c: float


class PhaseSelect(NamedTuple):
    pwm_a: bool
    pwm_b: bool
    pwm_c: bool


class HBridgeSignals(NamedTuple):
    AH: bool
    AL: bool
    BH: bool
    BL: bool


class GateVector(NamedTuple):
    AtH: bool
    AtL: bool
    AbH: bool
    AbL: bool
    BtH: bool
    BtL: bool
    BbH: bool
    BbL: bool
    CtH: bool
    CtL: bool
    CbH: bool
    CbL: bool


@dataclass(frozen=True)
class SectorId:
    index: int
    clamped_phase: str
    clamp_polarity: str

    @property
    def clamped(self) -> int:
        return PHASES.index(self.clamped_phase)

    @property
    def modulated(self) -> tuple[int, int]:
        """The two non-clamped phases, in alphabetical order."""
        return tuple(i for i in range(3) if i != self.clamped)


# (clamped phase, polarity) of each sector.  Starting from phase a at its
# positive peak the grid walks through 2, 3, 4, 5, 6, 1.
_SECTOR_SCHEDULE = {
    1: ("b", "negative"),
    2: ("a", "positive"),
    3: ("c", "negative"),
    4: ("b", "positive"),
    5: ("a", "negative"),
    6: ("c", "positive"),
}
SECTORS = {k: SectorId(k, *v) for k, v in _SECTOR_SCHEDULE.items()}
_SECTOR_BY_CLAMP = {(s.clamped, s.clamp_polarity): s for s in SECTORS.values()}

# Switching table.  Tokens are static levels "0"/"1" or the H-bridge signal
# substituted into that slot.
SWITCHING_TABLE: dict[tuple[int, tuple[int, int, int]], tuple[str, ...]] = {
    (1, (0, 1, 1)): ("0", "0", "0", "0", "AL", "1", "1", "BL", "1", "AH", "BH", "1"),
    (1, (1, 1, 0)): ("1", "AH", "BH", "1", "AL", "1", "1", "BL", "0", "0", "0", "0"),
    (2, (1, 1, 0)): ("1", "AH", "BH", "1", "AL", "1", "1", "BL", "0", "0", "0", "0"),
    (2, (1, 0, 1)): ("1", "AH", "BH", "1", "0", "0", "0", "0", "AL", "1", "1", "BL"),
    (3, (1, 0, 1)): ("1", "AH", "BH", "1", "0", "0", "0", "0", "AL", "1", "1", "BL"),
    (3, (0, 1, 1)): ("0", "0", "0", "0", "1", "AH", "BH", "1", "AL", "1", "1", "BL"),
    (4, (0, 1, 1)): ("0", "0", "0", "0", "1", "AH", "BH", "1", "AL", "1", "1", "BL"),
    (4, (1, 1, 0)): ("AL", "1", "1", "BL", "1", "AH", "BH", "1", "0", "0", "0", "0"),
    (5, (1, 1, 0)): ("AL", "1", "1", "BL", "1", "AH", "BH", "1", "0", "0", "0", "0"),
    (5, (1, 0, 1)): ("AL", "1", "1", "BL", "0", "0", "0", "0", "1", "AH", "BH", "1"),
    (6, (1, 0, 1)): ("AL", "1", "1", "BL", "0", "0", "0", "0", "1", "AH", "BH", "1"),
    (6, (0, 1, 1)): ("0", "0", "0", "0", "AL", "1", "1", "BL", "1", "AH", "BH", "1"),
}


class RowProgram(NamedTuple):
    """Array form of one table row: static levels plus HF source slots.

    ``source[i]`` is the index into (AH, AL, BH, BL) feeding gate ``i``, or -1
    when the gate is static with level ``static[i]``.
    """

    static: np.ndarray
    source: np.ndarray


def _compile(tokens):
    static = np.array([t == "1" for t in tokens], dtype=bool)
    source = np.array(
        [HBRIDGE_NAMES.index(t) if t in HBRIDGE_NAMES else -1 for t in tokens],
        dtype=np.int8,
    )
    return RowProgram(static, source)


_PROGRAMS = {key: _compile(tokens) for key, tokens in SWITCHING_TABLE.items()}


def _pwm_key(p) -> tuple[int, int, int]:
    return tuple(int(bool(x)) for x in p)


def row_program(s: SectorId | int, p) -> RowProgram:
    index = s.index if isinstance(s, SectorId) else int(s)
    try:
        return _PROGRAMS[(index, _pwm_key(p))]
    except KeyError:
        raise ContractError(
            f"invalid modulation state: sector {index}, pwm {_pwm_key(p)}"
        ) from None


@dataclass
class ModulatorConfig:
    lf_carrier_freq: float = 5e3
    hf_freq_min: float = 105e3
    hf_freq_max: float = 150e3
    dead_time: float = 200e-9
    phase_shift: float = 0.0
    # "ratio": d_mod = -V_mod / V_clamped.  "power_balanced": duties weighted
    # by |V_mod| * |V_pair| so every HF half-cycle can carry the same power.
    duty_law: str = "ratio"
    # Lets the band sit below the tank resonance (detector falsification runs).
    allow_below_resonance: bool = False

    def problems(self, f0: float | None = None) -> list[str]:
        out = []
        if not self.lf_carrier_freq > 0:
            out.append("modulator.lf_carrier_freq must be > 0")
        if not 0 < self.hf_freq_min <= self.hf_freq_max:
            out.append("modulator.hf_freq_min must satisfy 0 < hf_freq_min <= hf_freq_max")
        if self.lf_carrier_freq > 0 and self.hf_freq_min > 0 and self.lf_carrier_freq * 4 > self.hf_freq_min:
            out.append("modulator.lf_carrier_freq must be at most a quarter of hf_freq_min")
        if not 0 <= self.dead_time or (self.hf_freq_max > 0 and self.dead_time >= 0.25 / self.hf_freq_max):
            out.append("modulator.dead_time must satisfy 0 <= dead_time < quarter of the minimum HF period")
        if not 0 <= self.phase_shift <= 0.5:
            out.append("modulator.phase_shift must lie in [0, 0.5]")
        if self.duty_law not in ("ratio", "power_balanced"):
            out.append("modulator.duty_law must be 'ratio' or 'power_balanced'")
        if f0 is not None and not self.allow_below_resonance and self.hf_freq_min < f0:
            out.append(
                f"modulator.hf_freq_min ({self.hf_freq_min:g} Hz) must be >= tank resonant "
                f"frequency f0 ({f0:g} Hz): operation must stay above resonance"
            )
        return out

    def validate(self, f0: float | None = None) -> None:
        problems = self.problems(f0)
        if problems:
            raise ConfigError(problems)


def detect_sector(v) -> SectorId:
    """Sector whose clamped phase carries the largest absolute voltage.

    Exact ties go to the lower sector index.
    """
    mags = [abs(float(x)) for x in v]
    peak = max(mags)
    if not peak > 0:
        raise ContractError("degenerate grid: all phase voltages are zero")
    candidates = []
    for i, m in enumerate(mags):
        if m == peak:
            pol = "positive" if float(v[i]) > 0 else "negative"
            candidates.append(_SECTOR_BY_CLAMP[(i, pol)])
    return min(candidates, key=lambda s: s.index)


def lf_duty_cycles(v, s: SectorId) -> DutyTriple:
    """Duty cycles with the clamped phase playing the role of V_a.

    d_clamped = 1 and d_mod = -V_mod / V_clamped, clipped to [0, 1].
    """
    vc = float(v[s.clamped])
    if vc == 0.0:
        raise ContractError("degenerate sector: clamped phase voltage is zero")
    d = [1.0, 1.0, 1.0]
    for m in s.modulated:
        d[m] = min(1.0, max(0.0, -float(v[m]) / vc))
    return DutyTriple(*d)


def power_balanced_duty_cycles(v, s: SectorId) -> DutyTriple:
    """Duties that keep averaged currents proportional to phase voltages when
    every HF half-cycle delivers the same power.

    d_mod is proportional to |V_mod| * |V_clamped - V_mod|, normalised so the
    two modulated duties sum to 1.  Reduces to ``lf_duty_cycles`` at sector
    centres and sector edges.
    """
    vcl = float(v[s.clamped])
    if vcl == 0.0:
        raise ContractError("degenerate sector: clamped phase voltage is zero")
    weights = {}
    for m in s.modulated:
        vm = float(v[m])
        weights[m] = max(0.0, -vm / vcl) * abs(vcl - vm)
    total = sum(weights.values())
    d = [1.0, 1.0, 1.0]
    for m in s.modulated:
        d[m] = weights[m] / total if total > 0 else 0.5
    return DutyTriple(*d)


def lf_pwm_select(d, s: SectorId, carrier_phase: float) -> PhaseSelect:
    """Sawtooth carrier comparison for the first modulated phase; the second
    modulated phase takes the complement so exactly two phases are active."""
    first, second = s.modulated
    bits = [False, False, False]
    bits[s.clamped] = True
    bits[first] = bool(carrier_phase < d[first])
    bits[second] = not bits[first]
    return PhaseSelect(*bits)


def _leg_pattern(tau, period, dead_time):
    half = period / 2
    high = (tau >= dead_time) & (tau < half)
    low = (tau >= half + dead_time) & (tau < period)
    return high, low


def hf_bridge_signals(t_in_period, period, dead_time, phase_shift=0.0):
    """H-bridge drive (AH, AL, BH, BL) at a time inside one HF period.

    Leg A: AH on [dead_time, period/2), AL on [period/2 + dead_time, period).
    Leg B lags leg A by ``phase_shift * period`` with H and L swapped, so a
    zero shift gives AH = BL and AL = BH.

    Accepts scalars or numpy arrays for ``t_in_period``; arrays give an
    ``HBridgeSignals`` of boolean arrays.
    """
    t = np.asarray(t_in_period, dtype=float)
    if not period > 0:
        raise ContractError("period must be positive")
    if np.any(t < 0) or np.any(t >= period):
        raise ContractError("t_in_period must satisfy 0 <= t < period")
    if not 0 <= dead_time < period / 4:
        raise ContractError("dead_time must satisfy 0 <= dead_time < period/4")
    if not 0 <= phase_shift <= 0.5:
        raise ContractError("phase_shift must lie in [0, 0.5]")

    ah, al = _leg_pattern(t, period, dead_time)
    tb = t - phase_shift * period
    tb = np.where(tb < 0, tb + period, tb)
    bl, bh = _leg_pattern(tb, period, dead_time)
    if t.ndim == 0:
        return HBridgeSignals(bool(ah), bool(al), bool(bh), bool(bl))
    return HBridgeSignals(ah, al, bh, bl)


def map_gates(s: SectorId | int, p, h) -> GateVector:
    """Apply the switching table row for (sector, PhaseSelect) to the H-bridge state."""
    prog = row_program(s, p)
    hv = [bool(x) for x in h]
    out = [hv[src] if src >= 0 else bool(st) for st, src in zip(prog.static, prog.source)]
    return GateVector(*out)


def gate_matrix(prog: RowProgram, h: np.ndarray) -> np.ndarray:
    """Vectorised ``map_gates``: ``h`` is (m, 4) booleans, result is (m, 12)."""
    h = np.asarray(h, dtype=bool)
    gates = np.broadcast_to(prog.static, (h.shape[0], 12)).copy()
    slots = prog.source >= 0
    gates[:, slots] = h[:, prog.source[slots]]
    return gates


def duty_cycles(v, s: SectorId, law: str = "ratio") -> DutyTriple:
    if law == "ratio":
        return lf_duty_cycles(v, s)
    if law == "power_balanced":
        return power_balanced_duty_cycles(v, s)
    raise ContractError(f"unknown duty law {law!r}")


def carrier_phase_at(t: float, lf_freq: float) -> float:
    x = t * lf_freq
    return x - math.floor(x)


def lf_state(t: float, v, hf_freq: float, cfg: ModulatorConfig):
    """Low-frequency layer at time ``t``: (sector, duties, PhaseSelect).

    The carrier is sampled at the middle of the HF half-period containing
    ``t``, which moves every LF edge to the nearest half-period boundary.
    """
    s = detect_sector(v)
    d = duty_cycles(v, s, cfg.duty_law)
    k = math.floor(2 * hf_freq * t)
    t_mid = (k + 0.5) / (2 * hf_freq)
    p = lf_pwm_select(d, s, carrier_phase_at(t_mid, cfg.lf_carrier_freq))
    return s, d, p


def modulator_tick(t: float, v, hf_freq: float, cfg: ModulatorConfig):
    """Gate vector at time ``t`` for a constant HF frequency.

    Returns ``(GateVector, SectorId, PhaseSelect, DutyTriple)``.
    """
    if not cfg.hf_freq_min <= hf_freq <= cfg.hf_freq_max:
        raise ContractError(
            f"hf_freq {hf_freq:g} Hz outside [{cfg.hf_freq_min:g}, {cfg.hf_freq_max:g}]"
        )
    s, d, p = lf_state(t, v, hf_freq, cfg)
    period = 1.0 / hf_freq
    tau = t - math.floor(t / period) * period
    if tau >= period:  # float edge at exact multiples
        tau = 0.0
    h = hf_bridge_signals(tau, period, cfg.dead_time, cfg.phase_shift)
    return map_gates(s, p, h), s, p, d


def dc_link_voltage(v) -> float:
    """LF-averaged DC-link voltage, 1.5 * V_in^2 / |V_clamped|.

    V_in^2 is recovered from the instantaneous voltages as 2/3 * sum(v^2),
    exact for balanced sources.
    """
    vin_sq = (2.0 / 3.0) * sum(float(x) ** 2 for x in v)
    vcl = max(abs(float(x)) for x in v)
    if vcl == 0:
        raise ContractError("degenerate grid: all phase voltages are zero")
    return 1.5 * vin_sq / vcl


def table_rows():
    """The switching table in display order as (sector, pwm triple, tokens)."""
    return [(k[0], k[1], v) for k, v in SWITCHING_TABLE.items()]

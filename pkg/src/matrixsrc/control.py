"""HF frequency regulation for constant battery power.

The plant model is the fundamental-harmonic approximation (FHA) of a series
resonant converter feeding a full-bridge rectifier.  The rectifier and
battery reflect to the primary as the resistance

    R_ac = (8 / pi^2) * n^2 * v_batt^2 / P

and the tank quality factor is Q = sqrt(L/C) / R_ac.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .circuit import BatteryModel, TankParams
from .errors import ContractError

MODES = ("open_loop_fixed", "feedforward", "feedforward_plus_pi")


@dataclass
class ControlConfig:
    mode: str = "feedforward_plus_pi"
    fixed_freq: float = 110e3
    pi_kp: float = 0.2
    pi_ki: float = 2.0e4
    update_rate: int = 1

    def problems(self) -> list[str]:
        out = []
        if self.mode not in MODES:
            out.append(f"control.mode must be one of {', '.join(MODES)}")
        if not self.fixed_freq > 0:
            out.append("control.fixed_freq must be > 0")
        if self.pi_kp < 0 or self.pi_ki < 0:
            out.append("control.pi_kp and control.pi_ki must be >= 0")
        if int(self.update_rate) != self.update_rate or self.update_rate < 1:
            out.append("control.update_rate must be an integer >= 1 (HF half-cycles per update)")
        return out


def src_fha_gain(fn: float, Q: float) -> float:
    """Voltage gain of the series tank into its reflected load at f_s / f0 = fn."""
    if not fn > 0:
        raise ContractError("fn must be > 0")
    if Q < 0:
        raise ContractError("Q must be >= 0")
    x = fn - 1.0 / fn
    return 1.0 / math.sqrt(1.0 + (Q * x) ** 2)


def reflected_resistance(b: BatteryModel, n: float, power: float | None = None) -> float:
    p = b.power_cmd if power is None else power
    if p <= 0:
        return math.inf
    return 8.0 / math.pi**2 * n**2 * b.v_batt**2 / p


def quality_factor(b: BatteryModel, p: TankParams, power: float | None = None) -> float:
    return p.z0 / reflected_resistance(b, p.n, power)


def invert_fha_gain(M: float, Q: float) -> float:
    """fn >= 1 with ``src_fha_gain(fn, Q) == M``; requires 0 < M < 1 and Q > 0."""
    if not 0 < M < 1 or not Q > 0:
        raise ContractError("inversion needs 0 < M < 1 and Q > 0")
    x = math.sqrt(1.0 / M**2 - 1.0) / Q
    return 0.5 * (x + math.sqrt(x * x + 4.0))


def feedforward_frequency(v_dc, b: BatteryModel, p: TankParams, f_min: float, f_max: float,
                          power: float | None = None) -> float:
    """Frequency predicted by FHA to deliver ``power`` (default ``b.power_cmd``)
    from a square wave of amplitude ``v_dc``, clamped to [f_min, f_max]."""
    if not v_dc > 0:
        raise ContractError("v_dc must be > 0")
    M = p.n * b.v_batt / v_dc
    Q = quality_factor(b, p, power)
    if M >= 1:
        return f_min
    if not Q > 0 or math.isinf(v_dc):
        return f_max
    f = invert_fha_gain(M, Q) * p.f0
    return min(f_max, max(f_min, f))


@dataclass
class PIState:
    integral: float = 0.0  # accumulated error, W*s


def pi_update(state: PIState, power_error: float, dt: float, cfg: ControlConfig,
              lower: float = -math.inf, upper: float = math.inf) -> float:
    """Frequency correction for a power error (positive = under-delivery).

    Under-delivery lowers the frequency toward resonance.  The integrator is
    frozen whenever the output would land outside [lower, upper].
    """
    trial = state.integral + power_error * dt
    u = -(cfg.pi_kp * power_error + cfg.pi_ki * trial)
    if u < lower:
        return lower
    if u > upper:
        return upper
    state.integral = trial
    return u


class FrequencyController:
    """Chooses the HF frequency for each half-cycle of a simulation run."""

    def __init__(self, cfg: ControlConfig, tank: TankParams, battery: BatteryModel,
                 f_min: float, f_max: float):
        self.cfg = cfg
        self.tank = tank
        self.battery = battery
        self.f_min = f_min
        self.f_max = f_max
        self.pi = PIState()
        self._count = 0
        self._last = None

    def preview(self, v_pair: float, target_power: float, last_error: float | None,
                last_duration: float) -> float:
        """The frequency ``__call__`` would return, without touching any state."""
        return self._command(v_pair, target_power, last_error, last_duration, commit=False)

    def __call__(self, v_pair: float, target_power: float, last_error: float | None,
                 last_duration: float) -> float:
        return self._command(v_pair, target_power, last_error, last_duration, commit=True)

    def _command(self, v_pair, target_power, last_error, last_duration, commit):
        cfg = self.cfg
        if self._last is not None and self._count % cfg.update_rate:
            if commit:
                self._count += 1
            return self._last
        if cfg.mode == "open_loop_fixed":
            f = min(self.f_max, max(self.f_min, cfg.fixed_freq))
        else:
            f = feedforward_frequency(max(v_pair, 1e-9), self.battery, self.tank,
                                      self.f_min, self.f_max, power=target_power)
            if cfg.mode == "feedforward_plus_pi" and last_error is not None:
                state = self.pi if commit else PIState(self.pi.integral)
                f += pi_update(state, last_error, last_duration, cfg,
                               self.f_min - f, self.f_max - f)
        if commit:
            self._count += 1
            self._last = f
        return f

"""Time-domain simulation and analysis of a 3x1 matrix converter driving a
series-resonant tank, HF transformer and synchronous rectifier into a battery."""

__version__ = "0.1.0"

from .analysis import (
    EfficiencyReport,
    PFReport,
    ZvsReport,
    conduction_loss_model,
    cycle_averaged_input_currents,
    dc_link_envelope_check,
    detect_zvs_events,
    input_current_quality,
    power_balance,
    summarize,
    turns_ratio_selection,
)
from .circuit import BatteryModel, TankParams, TankState, applied_tank_voltage, step_tank
from .config import format_config, load_config, parse_config, run_id
from .control import ControlConfig, feedforward_frequency, src_fha_gain
from .errors import ConfigError, ContractError, MatrixSRCError, NumericalError
from .modulation import ModulatorConfig, SectorId, detect_sector, lf_duty_cycles, modulator_tick
from .simulation import GridParams, SimConfig, SimTrace, run_simulation

__all__ = [name for name in dir() if not name.startswith("_")]

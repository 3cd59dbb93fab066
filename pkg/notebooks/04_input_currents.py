# %% [markdown]
# # Input currents and the DC link
#
# Averaged over each LF period the phase currents follow the phase
# voltages, which is the unity power factor property. The averaged bridge
# voltage follows the link formula 1.5 * V_in^2 / |V_clamped|.

# %%
import matplotlib.pyplot as plt
import numpy as np
from _common import OUT

from matrixsrc import (
    SimConfig,
    cycle_averaged_input_currents,
    dc_link_envelope_check,
    input_current_quality,
    run_simulation,
)
from matrixsrc.analysis import whole_periods
from matrixsrc.config import apply_values

cfg = apply_values(SimConfig(), {"duration": 1 / 60 + 1.3e-3})
trace = run_simulation(cfg)
avg = whole_periods(cycle_averaged_input_currents(trace.slice_time(1e-3, 1.0)), 60.0)
pf = input_current_quality(avg, cfg.grid, cfg.battery.power_cmd)
print(f"k = {pf.k_fit:.5f} A/V (model {pf.k_theory:.5f}), R2 = {pf.r_squared:.4f}, "
      f"THD = {100 * pf.thd:.2f} %, angle = {pf.displacement_angle:.2f} deg")

# %%
fig, ax = plt.subplots(figsize=(8, 4))
ax.plot(avg.t * 1e3, avg.i)
ax.plot(avg.t * 1e3, pf.k_theory * avg.v, "k:", lw=0.8)
ax.set_xlabel("t (ms)")
ax.set_ylabel("LF-averaged phase current (A)")
fig.savefig(OUT / "04_currents.png", dpi=120)

# %%
env = dc_link_envelope_check(trace.slice_time(0.0, 1 / 60))
fig, ax = plt.subplots(figsize=(8, 4))
ax.plot(env.t * 1e3, env.theory, "k-", label="link formula")
ax.plot(env.t * 1e3, env.simulated, "o", ms=3, label="duty-weighted |v_mx|")
ax.plot(env.t * 1e3, env.time_averaged, "x", ms=3, label="time-averaged |v_mx|")
ax.set_xlabel("t (ms)")
ax.set_ylabel("V")
ax.legend()
fig.savefig(OUT / "04_envelope.png", dpi=120)
print(f"envelope deviation {100 * env.max_rel_deviation:.2f} % "
      f"(time-averaged {100 * env.max_time_averaged_deviation:.2f} %)")

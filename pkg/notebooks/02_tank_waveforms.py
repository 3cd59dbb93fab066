# %% [markdown]
# # Bridge voltage and tank current
#
# With the source frozen at the phase-a peak the bridge output is a square
# wave of the line-to-line voltage. Between the diagonals there is a short
# dead time in which the tank current freewheels through body diodes and
# flips the bridge voltage before the next devices turn on.

# %%
import matplotlib.pyplot as plt
import numpy as np
from _common import OUT

from matrixsrc import SimConfig, detect_zvs_events, run_simulation
from matrixsrc.config import apply_values

cfg = apply_values(SimConfig(), {"grid.freq": 0.0, "duration": 30 / 115e3,
                                 "record_decimation": 1})
trace = run_simulation(cfg)
print("f0 = %.2f kHz, switching at %.2f kHz" % (cfg.tank.f0 / 1e3, trace.f_hf[-1] / 1e3))

# %%
tail = trace.slice_time(trace.t[-1] - 3 / trace.f_hf[-1], 1.0)
fig, ax = plt.subplots(figsize=(8, 4))
ax.plot(tail.t * 1e6, tail.v_mx, label="v_mx (V)")
ax.plot(tail.t * 1e6, 10 * tail.i_L, label="10 x i_L (A)")
ax.set_xlabel("t (us)")
ax.legend()
fig.savefig(OUT / "02_square_wave.png", dpi=120)

# %% [markdown]
# Zoom on one turn-on: the bridge voltage has already reversed during the
# dead time, so the incoming device switches at zero voltage.

# %%
rep = detect_zvs_events(tail)
e = rep.events[len(rep.events) // 2]
zoom = trace.slice_time(e.t - 0.5e-6, e.t + 0.3e-6)
fig, ax = plt.subplots(figsize=(8, 4))
ax.plot(zoom.t * 1e6, zoom.v_mx, label="v_mx (V)")
ax.plot(zoom.t * 1e6, 10 * zoom.i_L, label="10 x i_L (A)")
ax.axvline(e.t * 1e6, color="k", ls=":", label=f"{e.device} on")
ax.legend()
fig.savefig(OUT / "02_turn_on.png", dpi=120)
print(f"{rep.zvs_events}/{rep.total_events} soft turn-ons, "
      f"diode conduction {rep.min_diode_conduction_time * 1e9:.0f} ns minimum")

# %% [markdown]
# # Frequency regulation
#
# The resonant stage is steered by its switching frequency. A first-harmonic
# model gives the gain needed for the present pair voltage; a PI loop trims
# the model error from the energy actually delivered in the last half-cycle.

# %%
import matplotlib.pyplot as plt
import numpy as np
from _common import OUT

from matrixsrc import SimConfig, run_simulation
from matrixsrc.analysis import hf_cycle_power, lf_cycle_power
from matrixsrc.control import feedforward_frequency, quality_factor, src_fha_gain

cfg = SimConfig()
fn = np.linspace(1.0, 2.0, 400)
fig, ax = plt.subplots(figsize=(7, 4))
for q in (0.5, 1.0, 2.0, quality_factor(cfg.battery, cfg.tank)):
    ax.plot(fn, [src_fha_gain(x, q) for x in fn], label=f"Q = {q:.2f}")
ax.set_xlabel("f / f0")
ax.set_ylabel("gain")
ax.legend()
fig.savefig(OUT / "03_gain.png", dpi=120)

# %%
v_pair = np.linspace(230, 490, 200)
f = [feedforward_frequency(x, cfg.battery, cfg.tank, cfg.modulator.hf_freq_min,
                           cfg.modulator.hf_freq_max) for x in v_pair]
print("feedforward span: %.1f .. %.1f kHz" % (min(f) / 1e3, max(f) / 1e3))

# %% [markdown]
# One grid period in closed loop. Averaged over an LF period the battery
# power holds within a few percent; individual HF cycles swing widely,
# because each pair voltage carries its own share of power and the tank
# needs a couple of cycles to change its amplitude.

# %%
trace = run_simulation(cfg)
t_hf, p_hf = hf_cycle_power(trace)
t_lf, p_lf = lf_cycle_power(trace)
fig, (a0, a1) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
a0.plot(trace.half_cycles["t"] * 1e3, trace.half_cycles["freq"] / 1e3)
a0.set_ylabel("f_hf (kHz)")
a1.plot(t_hf * 1e3, p_hf / 1e3, lw=0.3, label="per HF cycle")
a1.plot(t_lf * 1e3, p_lf / 1e3, "o-", ms=2, label="per LF cycle")
a1.set_ylabel("battery power (kW)")
a1.set_xlabel("t (ms)")
a1.legend()
fig.savefig(OUT / "03_power.png", dpi=120)
print("LF-cycle power %.2f .. %.2f kW" % (p_lf.min() / 1e3, p_lf.max() / 1e3))

# %% [markdown]
# # Modulation layers
#
# The converter ties one grid phase to a bridge rail for a whole 60 degree
# sector and pulse-width modulates the other rail between the remaining two
# phases. A fixed square-wave pattern at the resonant-stage frequency rides
# on top of that selection.

# %%
import matplotlib.pyplot as plt
import numpy as np
from _common import OUT

from matrixsrc import GridParams, detect_sector, lf_duty_cycles
from matrixsrc.cli import table_text

grid = GridParams()
t = np.linspace(0, 1 / grid.freq, 3600, endpoint=False)
v = grid.voltages(t)
sectors = np.array([detect_sector(x).index for x in v])
duties = np.array([lf_duty_cycles(x, detect_sector(x)) for x in v])

# %% [markdown]
# Sector index and duties over one grid period. The clamped phase sits at
# duty 1; the other two share the LF period in proportion to their voltages.

# %%
fig, (a0, a1, a2) = plt.subplots(3, 1, sharex=True, figsize=(8, 7))
a0.plot(t * 1e3, v)
a0.set_ylabel("phase voltage (V)")
a1.step(t * 1e3, sectors, where="post")
a1.set_ylabel("sector")
a2.plot(t * 1e3, duties)
a2.set_ylabel("duty")
a2.set_xlabel("t (ms)")
fig.savefig(OUT / "01_sectors_duties.png", dpi=120)
print("sequence:", [s for k, s in enumerate(sectors) if k == 0 or s != sectors[k - 1]])

# %% [markdown]
# The twelve-row gate table, with AH/AL/BH/BL standing for the H-bridge
# signals that each bidirectional switch follows.

# %%
print(table_text())
print("duty sum spread:", float(np.ptp(duties.sum(axis=1))), "(clamped 1 plus a pair summing to 1)")
print("sector 2 centre duties:", lf_duty_cycles(grid.voltages(0.0), detect_sector(grid.voltages(0.0))))

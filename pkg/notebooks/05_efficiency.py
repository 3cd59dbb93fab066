# %% [markdown]
# # Conduction-loss budget
#
# Four devices conduct on the matrix side at any instant and two on the
# rectifier side. The transformer loss is a fixed input.

# %%
import matplotlib.pyplot as plt
import numpy as np
from _common import OUT

from matrixsrc import conduction_loss_model, turns_ratio_selection

r = conduction_loss_model(13000, 0.03, 447.75, 375, 90)
print(r.to_dict())
print("turns ratio from range midpoints:", turns_ratio_selection(415.7, 480.0, 325, 425))

# %%
r_ds = np.linspace(0.005, 0.06, 50)
power = np.linspace(2e3, 20e3, 50)
fig, (a0, a1) = plt.subplots(1, 2, figsize=(9, 4))
a0.plot(r_ds * 1e3, [100 * conduction_loss_model(13000, x, 447.75, 375, 90).efficiency
                     for x in r_ds])
a0.set_xlabel("R_ds (mOhm)")
a0.set_ylabel("efficiency (%)")
a1.plot(power / 1e3, [100 * conduction_loss_model(p, 0.03, 447.75, 375, 90).efficiency
                      for p in power])
a1.set_xlabel("P_batt (kW)")
fig.tight_layout()
fig.savefig(OUT / "05_efficiency.png", dpi=120)

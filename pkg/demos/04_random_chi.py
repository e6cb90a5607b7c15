# %%
# Same interferometer, but the phase shifter gets a new random value for
# every neutron.  The beam splitters then see a stream of messages whose
# phases keep changing, so what they learn is an average.
import math

import numpy as np

from eventbell.experiments import fit_amplitude, grid_chsh_max
from eventbell.neutron import InterferometerConfig, random_chi_run
from eventbell.rng import RngStream

stream = RngStream(5).substream("demo-random-chi")
chis = np.arange(8) * math.pi / 4
alphas = np.arange(8) * math.pi / 4
cfg = InterferometerConfig(n_per_setting=80_000)

E = np.array([random_chi_run(a, chis, cfg, stream.substream(f"a{i}")).E for i, a in enumerate(alphas)])
C = np.cos(alphas[:, None] + chis[None, :])
print("fitted amplitude of E against cos(alpha+chi):", round(fit_amplitude(E, C), 3))
S, idx = grid_chsh_max(E)
print("largest CHSH value on the grid:", round(S, 3), "at indices", idx)

# %%
# For comparison, the same grid with chi fixed per run gives amplitude
# close to one (see 03_neutron_chsh.py).

# %%
# Single neutrons through a two-path interferometer built from adaptive
# beam splitters.  Spin and path are two degrees of freedom of one
# particle, so a Bell-type function here tests contextuality, not locality.
import math

import numpy as np

from eventbell.neutron import InterferometerConfig, chsh_neutron, measure_correlation, run_interferometer
from eventbell.oracle import chsh_bound_settings, neutron_correlation, neutron_po
from eventbell.rng import RngStream

stream = RngStream(11).substream("demo-neutron")

# %%
# Fringe: O-beam count rate against chi at alpha = 0.
cfg = InterferometerConfig(n_per_setting=50_000)
for k, chi in enumerate(np.linspace(0, 2 * math.pi, 9)):
    c = run_interferometer(cfg.with_setting(0.0, chi), stream.substream(f"fringe{k}"))
    print(f"chi/pi={chi / math.pi:5.2f}  rate {c.N_O_up / cfg.n_per_setting:.4f}  theory {neutron_po(0.0, chi, cfg.R):.4f}")

# %%
# Correlation surface on a coarse grid.
grid = np.arange(4) * math.pi / 2
cfg = InterferometerConfig()
print("alpha\\chi " + " ".join(f"{c / math.pi:6.2f}" for c in grid))
for i, a in enumerate(grid):
    row = [measure_correlation(a, c, cfg, stream.substream(f"E{i}{j}")) for j, c in enumerate(grid)]
    print(f"{a / math.pi:9.2f} " + " ".join(f"{e:+6.2f}" for e in row))

# %%
# CHSH at the optimal settings.  Lowering gamma shortens the beam
# splitters' memory and pulls S down toward the classical range.
settings, S_best = chsh_bound_settings()
print("settings", [round(s / math.pi, 3) for s in settings], "-> ideal S", round(S_best, 4))
for g in (0.99, 0.67, 0.55):
    n = 100_000 if g > 0.9 else 400_000
    S = chsh_neutron(*settings, InterferometerConfig(gamma=g, n_per_setting=n), stream.substream(f"chsh{g}"))
    print(f"gamma={g}:  S = {S:.3f}")

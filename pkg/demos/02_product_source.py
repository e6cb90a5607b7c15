# %%
# Fixed-polarization sources.  With a product state the two arms should
# factorize, window or not.
import math

import numpy as np

from eventbell.coincidence import AnalysisConfig, count_all_pairs, count_coincidences, correlations
from eventbell.oracle import photon_product
from eventbell.photon import ExperimentII, ExperimentIII, StationSettings, run_experiment
from eventbell.rng import RngStream

stream = RngStream(7).substream("demo-product")

# %%
# Source angle 15 deg on arm 1 and 105 deg on arm 2.
eta1 = math.radians(15)
for k, phi in enumerate(np.linspace(0, math.pi / 2, 5)):
    l1, l2 = run_experiment(ExperimentII(eta1), StationSettings(phi), StationSettings(0.0), 300_000,
                            stream.substream(f"II-{k}"))
    key = (phi, 0.0)
    ew = correlations(count_coincidences(l1, l2, AnalysisConfig(1.0, 1.0))[key])
    ea = correlations(count_all_pairs(l1, l2)[key])
    E1, _, E = photon_product(eta1, eta1 + math.pi / 2, phi, 0.0)
    print(f"phi={math.degrees(phi):5.1f}  E window {ew.E:+.3f}  all {ea.E:+.3f}  theory {E:+.3f}   E1 {ea.E1:+.3f} vs {E1:+.3f}")

# %%
# Random source angle, then a polarizer in each arm.  About half the
# photons survive each polarizer, and only pairs where both survive are
# ever compared.
l1, l2 = run_experiment(ExperimentIII(math.radians(30), math.radians(60)), StationSettings(0.2), StationSettings(0.0),
                        100_000, stream.substream("III"))
print(f"arm 1 kept {len(l1)}, arm 2 kept {len(l2)} of 100000")
t = count_all_pairs(l1, l2)[(0.2, 0.0)]
print("pairs with both photons:", t.Nc, " E =", round(correlations(t).E, 3))
print("factorized prediction:", round(photon_product(math.radians(30), math.radians(60), 0.2, 0.0)[2], 3))

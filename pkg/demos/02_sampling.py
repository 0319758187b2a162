# From counts to sampling tables.
#
# Under "no structure" an anchor would spread its N_i credits evenly, with
# chance rate 1/N per partner. A one-sided z test flags partners credited far
# above that rate (positives) and those at or below it (negatives).

import numpy as np

from assetembed.sampler import TestConfig, build_tables, draw_samples, p_value, p_value_histogram
from assetembed.similarity import WindowConfig, build_cooccurrence
from assetembed.testkit import FactorModelSpec, generate_factor_panel

panel = generate_factor_panel(FactorModelSpec(seed=0))
tables = build_tables(build_cooccurrence(panel, WindowConfig()), TestConfig(alpha_pos=0.05, alpha_neg=0.3))

print("p-value at z=1.6449:", p_value(1.6449))     # about 0.05

anchor = 0
pos = np.flatnonzero(tables.positive[anchor])
neg = np.flatnonzero(tables.negative[anchor])
print("anchor", panel.asset_ids[anchor])
print("  positives:", [panel.asset_ids[j] for j in pos])
print("  negatives:", len(neg), "assets, heaviest",
      panel.asset_ids[int(np.argmax(tables.negative[anchor]))])

# the band between the thresholds is never sampled
band = (tables.p_values[anchor] >= 0.05) & (tables.p_values[anchor] <= 0.3)
print("  in neither set:", int(band.sum()))

p, n = draw_samples(tables, anchor, num_pos=5, num_neg=20, rng=np.random.default_rng(1))
print("  one draw:", p, n[:6], "...")

for left, count in p_value_histogram(tables, num_bins=10):
    print("%.1f %s" % (left, "#" * (count // 40)))

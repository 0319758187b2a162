# Rolling-window co-occurrence on a synthetic three-sector market.
#
# Each asset is one sector factor plus its own noise. Within every 22-day
# window we rank the other assets by Pearson correlation and credit the top 5.

import numpy as np

from assetembed.similarity import WindowConfig, build_cooccurrence
from assetembed.testkit import FactorModelSpec, block_of, generate_factor_panel

panel = generate_factor_panel(FactorModelSpec(num_blocks=3, assets_per_block=20, T=1500, seed=0))
print(panel.returns.shape, panel.asset_ids[:3], panel.dates[:2])

cfg = WindowConfig(window_length=22, stride=5, top_k=5)
cooc = build_cooccurrence(panel, cfg)
print("windows:", cooc.num_windows)                      # (1500 - 22) // 5 + 1
print("row sums all k*W:", np.all(cooc.counts.sum(1) == 5 * cooc.num_windows))

# how much of each anchor's count lands inside its own sector
blocks = block_of(panel)
same = blocks[:, None] == blocks[None, :]
intra = (cooc.counts * same).sum(1) / cooc.counts.sum(1)
print("intra-sector share: min %.4f  mean %.4f" % (intra.min(), intra.mean()))

print(cooc.counts[:4, :8])  # a corner of the matrix; zero diagonal

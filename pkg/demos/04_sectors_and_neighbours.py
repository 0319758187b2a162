# Sector classification and nearest neighbours on learned embeddings.

from assetembed.evaluation import classify_sectors, knn_neighbors
from assetembed.sampler import build_tables
from assetembed.similarity import WindowConfig, build_cooccurrence, pearson_matrix
from assetembed.testkit import FactorModelSpec, generate_factor_panel
from assetembed.trainer import TrainConfig, train

panel = generate_factor_panel(FactorModelSpec(num_blocks=4, assets_per_block=15, seed=2))
tables = build_tables(build_cooccurrence(panel, WindowConfig()))
emb, _ = train(tables, TrainConfig(learning_rate=0.01), panel.asset_ids)

sectors = panel.sectors()
report = classify_sectors(emb, sectors, folds=5, seed=0)
print("embedding   accuracy %.3f  macro-F1 %.3f" % (report.accuracy, report.macro_f1))

# the same classifier on rows of the full correlation matrix
base = classify_sectors(pearson_matrix(panel.returns), sectors, asset_ids=panel.asset_ids)
print("correlation accuracy %.3f  macro-F1 %.3f" % (base.accuracy, base.macro_f1))

for asset, cos in knn_neighbors(emb, "B2_0", m=5):
    print("  %-6s %.3f" % (asset, cos))

"""Contrastive embeddings for financial assets from daily returns.

Pipeline: :func:`load_panel` -> :func:`build_cooccurrence` ->
:func:`build_tables` -> :func:`train` -> the scorers in
:mod:`assetembed.evaluation`. Synthetic panels and reference oracles live in
:mod:`assetembed.testkit`.
"""

__version__ = "0.1.0"

from .panel import ReturnsPanel, load_panel, prices_to_returns, slice_panel
from .similarity import CooccurrenceMatrix, WindowConfig, build_cooccurrence, pearson, top_k_indices
from .sampler import SamplingTables, TestConfig, build_tables, draw_samples, p_value, z_statistic
from .losses import loss_aggregate, loss_hybrid, loss_individual, reg_penalty
from .optim import AdamState, PlateauScheduler, adam_step
from .trainer import EmbeddingMatrix, TrainConfig, TrainLog, train
from .evaluation import (
    classify_sectors,
    hedge_experiment,
    knn_neighbors,
    realized_volatility,
    spearman,
    welch_t_test_one_sided,
)

"""Mini-batch contrastive training of the embedding table."""

from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .losses import LOSSES, reg_penalty
from .optim import AdamState, PlateauScheduler, adam_step
from .sampler import SamplingTables, draw_samples

logger = logging.getLogger(__name__)

EMBD_MAGIC = b"EMBD"
EMBD_VERSION = 1

NORM_MODES = ("penalty", "hard_renorm", "both")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "individual_sigmoid"
    dim: int = 16
    epochs: int = 30
    batch_size: int = 128
    learning_rate: float = 0.001
    num_pos: int = 5
    num_neg: int = 20
    lam: float = 0.001
    norm_mode: str = "penalty"
    lr_factor: float = 0.8
    lr_patience: int = 3
    min_lr: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; choose from {sorted(LOSSES)}")
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"unknown norm_mode {self.norm_mode!r}")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.num_pos < 1 or self.num_neg < 1:
            raise ValueError("num_pos and num_neg must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    vectors: np.ndarray
    asset_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        v = np.array(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] < 2:
            raise ValueError(f"embeddings must be N x d with d >= 2, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("embeddings contain non-finite values")
        ids = tuple(self.asset_ids) or tuple(str(i) for i in range(v.shape[0]))
        if len(ids) != v.shape[0]:
            raise ValueError("asset_ids length does not match rows")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "asset_ids", ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __getitem__(self, asset_id: str) -> np.ndarray:
        return self.vectors[self.asset_ids.index(asset_id)]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.asset_ids == other.asset_ids and np.array_equal(self.vectors, other.vectors)

    __hash__ = None


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    pos_loss: float
    neg_loss: float
    reg_loss: float
    lr: float
    mean_norm: float


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)
    skipped_anchors: List[int] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def init_embeddings(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform entries on [-1/sqrt(d), 1/sqrt(d)], rows scaled to unit norm."""
    bound = 1.0 / math.sqrt(dim)
    E = rng.uniform(-bound, bound, size=(n, dim))
    return E / np.linalg.norm(E, axis=1, keepdims=True)


@dataclass
class BatchStep:
    loss: float
    anchor_loss_sum: float
    pos_sum: float
    neg_sum: float
    reg: float
    rows: np.ndarray


def train_batch(
    E: np.ndarray,
    state: AdamState,
    tables: SamplingTables,
    batch: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
    lr: float,
) -> BatchStep:
    """One optimiser step on a batch of anchors, updating ``E`` in place.

    Only rows drawn into the batch (anchors, positives, negatives) change.
    """
    loss_fn = LOSSES[config.loss]
    grads = np.zeros_like(E)
    touched = []
    loss_sum = pos_sum = neg_sum = 0.0
    for i in batch:
        pos, neg = draw_samples(tables, i, config.num_pos, config.num_neg, rng)
        res = loss_fn(E[i], E[pos], E[neg])
        loss_sum += res.value
        pos_sum += res.pos_part
        neg_sum += res.neg_part
        grads[i] += res.grad_anchor
        np.add.at(grads, pos, res.grad_pos)
        np.add.at(grads, neg, res.grad_neg)
        touched.extend((np.array([i]), pos, neg))
    rows = np.unique(np.concatenate(touched))
    grads[rows] /= len(batch)
    reg = 0.0
    if config.norm_mode in ("penalty", "both") and config.lam > 0:
        reg, g_reg = reg_penalty(E[rows], config.lam)
        grads[rows] += g_reg
    loss = loss_sum / len(batch) + reg
    if math.isfinite(loss):
        adam_step(E, grads, state, lr, rows=rows)
        if config.norm_mode in ("hard_renorm", "both"):
            E[rows] /= np.linalg.norm(E[rows], axis=1, keepdims=True)
    return BatchStep(loss, loss_sum, pos_sum, neg_sum, reg, rows)


def train(
    tables: SamplingTables,
    config: TrainConfig = TrainConfig(),
    asset_ids: Optional[Tuple[str, ...]] = None,
) -> Tuple[EmbeddingMatrix, TrainLog]:
    """Fit embeddings to the sampling tables.

    Anchors without both positive and negative candidates are excluded up
    front and listed in ``log.skipped_anchors``. Each epoch shuffles the
    remaining anchors, walks them in batches, redraws samples per anchor and
    applies one sparse Adam step per batch to the rows the batch touched.
    The penalty, when enabled, covers exactly those rows.
    """
    n = tables.n_assets
    rng = np.random.default_rng(config.seed)
    E = init_embeddings(n, config.dim, rng)
    state = AdamState.zeros_like(E)
    sched = PlateauScheduler(
        config.learning_rate, config.lr_factor, config.lr_patience, config.min_lr
    )
    anchors = np.flatnonzero(tables.trainable)
    log = TrainLog(skipped_anchors=np.flatnonzero(~tables.trainable).tolist())
    if anchors.size == 0:
        raise TrainingError("no trainable anchors: every anchor lacks positive or negative samples")
    if log.skipped_anchors:
        logger.warning("skipping %d anchors with empty support", len(log.skipped_anchors))

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(anchors)
        tot = pos_tot = neg_tot = reg_tot = 0.0
        n_batches = 0
        for b, start in enumerate(range(0, order.size, config.batch_size)):
            step = train_batch(E, state, tables, order[start : start + config.batch_size],
                               config, rng, sched.lr)
            if not math.isfinite(step.loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b + 1}")
            tot += step.anchor_loss_sum
            pos_tot += step.pos_sum
            neg_tot += step.neg_sum
            reg_tot += step.reg
            n_batches += 1

        pos_mean = pos_tot / order.size
        lr_used = sched.lr
        sched.step(pos_mean)
        log.records.append(
            EpochRecord(
                epoch=epoch,
                loss=tot / order.size + reg_tot / n_batches,
                pos_loss=pos_mean,
                neg_loss=neg_tot / order.size,
                reg_loss=reg_tot / n_batches,
                lr=lr_used,
                mean_norm=float(np.linalg.norm(E, axis=1).mean()),
            )
        )
        logger.debug("epoch %d: %s", epoch, log.records[-1])

    ids = tuple(asset_ids) if asset_ids is not None else tables.asset_ids
    return EmbeddingMatrix(E, ids), log


def save_embeddings_csv(emb: EmbeddingMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["asset_id", *(f"e_{k}" for k in range(emb.dim))])
        for a, row in zip(emb.asset_ids, emb.vectors):
            w.writerow([a, *(repr(float(x)) for x in row)])


def load_embeddings_csv(path) -> EmbeddingMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [r for r in reader if r]
    return EmbeddingMatrix(np.array([[float(x) for x in r[1:]] for r in rows]), tuple(r[0] for r in rows))


def save_embeddings_binary(emb: EmbeddingMatrix, path) -> None:
    """``EMBD``, version byte, little-endian u32 N and d, then f64 rows."""
    n, d = emb.vectors.shape
    with open(path, "wb") as fh:
        fh.write(EMBD_MAGIC + struct.pack("<B2I", EMBD_VERSION, n, d))
        fh.write(np.ascontiguousarray(emb.vectors, dtype="<f8").tobytes())


def load_embeddings_binary(path, asset_ids: Tuple[str, ...] = ()) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != EMBD_MAGIC:
        raise ValueError(f"{path}: not an embedding file")
    version, n, d = struct.unpack_from("<B2I", data, 4)
    if version != EMBD_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off = 4 + struct.calcsize("<B2I")
    vec = np.frombuffer(data, dtype="<f8", count=n * d, offset=off).reshape(n, d)
    return EmbeddingMatrix(vec.copy(), tuple(asset_ids))


def save_train_log(log: TrainLog, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "pos_loss", "neg_loss", "reg_loss", "lr", "mean_norm"])
        for r in log.records:
            w.writerow(
                [r.epoch, *(repr(float(x)) for x in (r.loss, r.pos_loss, r.neg_loss, r.reg_loss, r.lr, r.mean_norm))]
            )

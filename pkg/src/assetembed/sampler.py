"""Positive and negative sampling distributions from co-occurrence counts.

Each anchor's counts are tested against the chance rate ``p0 = 1/N`` with a
one-proportion z-test. Assets whose upper-tail p-value is below ``alpha_pos``
become positives, weighted by their count. Assets whose p-value exceeds
``alpha_neg`` become negatives, weighted by how far their count falls short
of the anchor's largest count. The band between the two thresholds is never
sampled.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from .similarity import CooccurrenceMatrix


class EmptySupportError(RuntimeError):
    """The anchor has no positive or no negative candidates; skip it."""


@dataclass(frozen=True)
class TestConfig:
    alpha_pos: float = 0.05
    alpha_neg: float = 0.3

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0.0 < self.alpha_pos < self.alpha_neg < 1.0:
            raise ValueError(
                f"need 0 < alpha_pos < alpha_neg < 1, got {self.alpha_pos}, {self.alpha_neg}"
            )


@dataclass(frozen=True, eq=False)
class SamplingTables:
    """Dense N x N sampling tables; row ``i`` belongs to anchor ``i``."""

    p_values: np.ndarray
    z_scores: np.ndarray
    positive: np.ndarray
    negative: np.ndarray
    n_i: np.ndarray
    p0: float
    config: TestConfig = field(default_factory=TestConfig)
    asset_ids: Tuple[str, ...] = ()

    @property
    def n_assets(self) -> int:
        return self.positive.shape[0]

    @property
    def has_positive(self) -> np.ndarray:
        return self.positive.sum(axis=1) > 0

    @property
    def has_negative(self) -> np.ndarray:
        return self.negative.sum(axis=1) > 0

    @property
    def trainable(self) -> np.ndarray:
        """Anchors with both a positive and a negative candidate."""
        return self.has_positive & self.has_negative

    def empty_anchors(self) -> List[int]:
        return np.flatnonzero(~self.trainable).tolist()


def z_statistic(count, n_i, p0: float):
    """One-proportion z score of ``count`` successes out of ``n_i`` against ``p0``.

    Works elementwise on arrays.
    """
    n_i = np.asarray(n_i, dtype=np.float64)
    if np.any(n_i <= 0):
        raise ValueError("n_i must be positive (anchor has no co-occurrences)")
    count = np.asarray(count, dtype=np.float64)
    if np.any(count > n_i) or np.any(count < 0):
        raise ValueError("count must lie in [0, n_i]")
    if not 0.0 < p0 < 1.0:
        raise ValueError(f"p0 must be in (0, 1), got {p0}")
    z = (count / n_i - p0) / np.sqrt(p0 * (1.0 - p0) / n_i)
    return float(z) if z.ndim == 0 else z


_erfc = np.frompyfunc(math.erfc, 1, 1)


def p_value(z):
    """Upper-tail probability ``1 - Phi(z)`` of the standard normal.

    Evaluated as ``erfc(z / sqrt(2)) / 2``, which keeps full relative
    precision in the upper tail where ``1 - Phi`` would cancel.
    """
    z = np.asarray(z, dtype=np.float64)
    p = 0.5 * np.asarray(_erfc(z / math.sqrt(2.0)), dtype=np.float64)
    return float(p) if p.ndim == 0 else p


def build_tables(cooc: CooccurrenceMatrix, config: TestConfig = TestConfig()) -> SamplingTables:
    counts = np.asarray(cooc.counts, dtype=np.float64)
    n = counts.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 assets, got {n}")
    off = ~np.eye(n, dtype=bool)
    n_i = counts.sum(axis=1)
    p0 = 1.0 / n

    z = np.zeros((n, n))
    pv = np.ones((n, n))
    live = n_i > 0
    if live.any():
        z[live] = z_statistic(counts[live], n_i[live, None], p0)
        pv[live] = p_value(z[live])
    np.fill_diagonal(z, 0.0)
    np.fill_diagonal(pv, np.nan)

    pos_mask = off & live[:, None] & (pv < config.alpha_pos)
    neg_mask = off & live[:, None] & (pv > config.alpha_neg)

    pos_w = np.where(pos_mask, counts, 0.0)
    pos_tot = pos_w.sum(axis=1, keepdims=True)
    positive = np.divide(pos_w, pos_tot, out=np.zeros_like(pos_w), where=pos_tot > 0)

    row_max = np.where(off, counts, -np.inf).max(axis=1, keepdims=True)
    neg_w = np.where(neg_mask, row_max - counts, 0.0)
    neg_tot = neg_w.sum(axis=1, keepdims=True)
    # every qualifying count equals the row max: fall back to uniform
    flat = (neg_tot[:, 0] == 0) & neg_mask.any(axis=1)
    neg_w[flat] = neg_mask[flat].astype(np.float64)
    neg_tot = neg_w.sum(axis=1, keepdims=True)
    negative = np.divide(neg_w, neg_tot, out=np.zeros_like(neg_w), where=neg_tot > 0)

    return SamplingTables(
        p_values=pv,
        z_scores=z,
        positive=positive,
        negative=negative,
        n_i=n_i.astype(np.int64),
        p0=p0,
        config=config,
        asset_ids=tuple(cooc.asset_ids),
    )


def _inverse_cdf(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    # guard against u landing past the last nonzero weight through rounding
    last = np.flatnonzero(weights)[-1]
    return np.minimum(idx, last)


def draw_samples(
    tables: SamplingTables,
    anchor: int,
    num_pos: int,
    num_neg: int,
    rng: Union[int, np.random.Generator, None] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Draw positive and negative index multisets (with replacement) for one anchor.

    ``rng`` may be a seed or a caller-owned ``numpy.random.Generator``.
    Raises :class:`EmptySupportError` if either distribution is empty.
    """
    pos_w = tables.positive[anchor]
    neg_w = tables.negative[anchor]
    if not pos_w.any() or not neg_w.any():
        raise EmptySupportError(f"anchor {anchor} has empty positive or negative support")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    pos = _inverse_cdf(pos_w, rng.random(num_pos))
    neg = _inverse_cdf(neg_w, rng.random(num_neg))
    return pos, neg


def p_value_histogram(tables: SamplingTables, num_bins: int = 20) -> List[Tuple[float, int]]:
    """Counts of off-diagonal p-values in ``num_bins`` equal bins over [0, 1].

    Returns ``(left_edge, count)`` pairs; the last bin is closed on the right.
    """
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    n = tables.n_assets
    vals = tables.p_values[~np.eye(n, dtype=bool)]
    counts, edges = np.histogram(vals, bins=num_bins, range=(0.0, 1.0))
    return [(float(e), int(c)) for e, c in zip(edges[:-1], counts)]


def write_tables_csv(tables: SamplingTables, path) -> None:
    ids = tables.asset_ids or tuple(str(i) for i in range(tables.n_assets))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["anchor", "asset", "p_value", "pos_weight", "neg_weight"])
        for i in range(tables.n_assets):
            for j in range(tables.n_assets):
                if i != j:
                    w.writerow(
                        [
                            ids[i],
                            ids[j],
                            repr(float(tables.p_values[i, j])),
                            repr(float(tables.positive[i, j])),
                            repr(float(tables.negative[i, j])),
                        ]
                    )


def write_histogram_csv(hist, path) -> None:
    width = 1.0 / len(hist)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for edge, count in hist:
            w.writerow([repr(edge), repr(min(edge + width, 1.0)), count])

"""Rolling-window similarity and top-k co-occurrence counts.

For every window of ``w`` returns (advancing by ``s``) each anchor asset ranks
all other assets by similarity; ``counts[i, j]`` tallies how many windows put
``j`` among the ``k`` most similar to ``i``. Windows that would run past the
end of the series are not used, so there are ``(T - w) // s + 1`` of them.
"""

from __future__ import annotations

import csv
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .panel import ReturnsPanel

COOC_MAGIC = b"COOC"
COOC_VERSION = 1


@dataclass(frozen=True)
class WindowConfig:
    window_length: int = 22
    stride: int = 5
    top_k: int = 5
    similarity: str = "pearson"

    def __post_init__(self):
        if self.window_length < 2:
            raise ValueError(f"window_length must be >= 2, got {self.window_length}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.similarity not in SIMILARITY_MATRIX:
            raise ValueError(f"unknown similarity {self.similarity!r}")

    def validate_for(self, n_assets: int, n_dates: int) -> None:
        if self.window_length > n_dates:
            raise ValueError(
                f"window_length w={self.window_length} exceeds series length T={n_dates}"
            )
        if self.top_k > n_assets - 1:
            raise ValueError(f"top_k k={self.top_k} exceeds N-1={n_assets - 1}")

    def num_windows(self, n_dates: int) -> int:
        return (n_dates - self.window_length) // self.stride + 1

    def window_starts(self, n_dates: int) -> np.ndarray:
        return np.arange(self.num_windows(n_dates)) * self.stride


@dataclass(frozen=True, eq=False)
class CooccurrenceMatrix:
    counts: np.ndarray
    num_windows: int
    config: WindowConfig
    asset_ids: Tuple[str, ...] = ()

    @property
    def n_assets(self) -> int:
        return self.counts.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CooccurrenceMatrix):
            return NotImplemented
        return (
            self.num_windows == other.num_windows
            and self.config == other.config
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None


def pearson(x, y, return_flag: bool = False):
    """Sample Pearson correlation of two equal-length series.

    A zero-variance input has no defined correlation; 0.0 is returned and,
    with ``return_flag=True``, a second value ``True`` marks the degeneracy.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("need at least 2 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0.0 or syy == 0.0:
        return (0.0, True) if return_flag else 0.0
    r = float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))
    return (r, False) if return_flag else r


def pearson_matrix(block: np.ndarray) -> np.ndarray:
    """All-pairs Pearson correlation of the rows of ``block`` (N x w).

    Rows with zero variance correlate 0 with everything, themselves included.
    """
    dev = block - block.mean(axis=1, keepdims=True)
    norm = np.sqrt(np.einsum("ij,ij->i", dev, dev))
    flat = norm == 0.0
    norm[flat] = 1.0
    z = dev / norm[:, None]
    z[flat] = 0.0
    return np.clip(z @ z.T, -1.0, 1.0)


SIMILARITY_MATRIX: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "pearson": pearson_matrix,
}


def window_similarities(
    panel: ReturnsPanel, anchor_index: int, window_start: int, config: WindowConfig
) -> np.ndarray:
    """Similarity of the anchor to every other asset over one window.

    ``window_start`` is 0-based; the anchor's own entry is omitted, so the
    result has N - 1 entries in asset order.
    """
    n, t = panel.returns.shape
    w = config.window_length
    if not 0 <= anchor_index < n:
        raise IndexError(f"anchor {anchor_index} out of range for N={n}")
    if window_start < 0 or window_start + w > t:
        raise IndexError(f"window [{window_start}, {window_start + w}) outside T={t}")
    block = panel.returns[:, window_start : window_start + w]
    anchor = block[anchor_index]
    out = np.empty(n - 1)
    pos = 0
    for j in range(n):
        if j != anchor_index:
            out[pos] = pearson(anchor, block[j])
            pos += 1
    return out


def top_k_indices(values: Sequence[float], k: int) -> np.ndarray:
    """Indices of the ``k`` largest values, ties going to the lower index.

    Returned in ascending index order.
    """
    v = np.asarray(values, dtype=np.float64)
    if k < 0 or k > v.size:
        raise ValueError(f"k={k} out of range for {v.size} values")
    order = np.lexsort((np.arange(v.size), -v))
    return np.sort(order[:k])


def _top_k_mask(sims: np.ndarray, k: int) -> np.ndarray:
    """Row-wise top-k membership with lower-index tie-breaking.

    Equivalent to applying :func:`top_k_indices` to every row, but vectorised:
    everything strictly above the k-th largest value is in, and the remaining
    slots go to the lowest-index entries equal to it.
    """
    n_cols = sims.shape[1]
    kth = -np.partition(-sims, k - 1, axis=1)[:, k - 1 : k]
    above = sims > kth
    tied = sims == kth
    slots = k - above.sum(axis=1, keepdims=True)
    return above | (tied & (np.cumsum(tied, axis=1) <= slots))


def _count_windows(returns: np.ndarray, starts: np.ndarray, w: int, k: int, sim) -> np.ndarray:
    n = returns.shape[0]
    counts = np.zeros((n, n), dtype=np.int64)
    diag = np.eye(n, dtype=bool)
    for t0 in starts:
        s = sim(returns[:, t0 : t0 + w])
        s[diag] = -np.inf
        counts += _top_k_mask(s, k)
    return counts


def build_cooccurrence(
    panel: ReturnsPanel, config: WindowConfig, threads: Optional[int] = None
) -> CooccurrenceMatrix:
    """Count top-k co-occurrences over all complete sliding windows.

    Work is split into contiguous blocks of windows, one private accumulator
    per block, summed in block order; integer sums make the result identical
    for any thread count.
    """
    n, t = panel.returns.shape
    config.validate_for(n, t)
    starts = config.window_starts(t)
    sim = SIMILARITY_MATRIX[config.similarity]
    threads = threads or os.cpu_count() or 1
    chunks = [c for c in np.array_split(starts, min(threads * 4, starts.size)) if c.size]
    args = (panel.returns, config.window_length, config.top_k, sim)
    if threads == 1 or len(chunks) == 1:
        partials = [_count_windows(args[0], c, *args[1:]) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(lambda c: _count_windows(args[0], c, *args[1:]), chunks))
    counts = np.zeros((n, n), dtype=np.int64)
    for p in partials:
        counts += p
    return CooccurrenceMatrix(counts, int(starts.size), config, panel.asset_ids)


def save_cooccurrence(cooc: CooccurrenceMatrix, path) -> None:
    """Binary cache: ``COOC``, version byte, little-endian u32 N, W, w, s, k, u32 counts."""
    c = cooc.config
    header = COOC_MAGIC + struct.pack(
        "<B5I", COOC_VERSION, cooc.n_assets, cooc.num_windows, c.window_length, c.stride, c.top_k
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(cooc.counts, dtype="<u4").tobytes())


def load_cooccurrence(path, asset_ids: Tuple[str, ...] = ()) -> CooccurrenceMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != COOC_MAGIC:
        raise ValueError(f"{path}: not a co-occurrence cache")
    version, n, num_windows, w, s, k = struct.unpack_from("<B5I", data, 4)
    if version != COOC_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    offset = 4 + struct.calcsize("<B5I")
    counts = np.frombuffer(data, dtype="<u4", count=n * n, offset=offset).reshape(n, n)
    if asset_ids and len(asset_ids) != n:
        raise ValueError(f"{path}: cache has N={n}, got {len(asset_ids)} asset ids")
    return CooccurrenceMatrix(
        counts.astype(np.int64), num_windows, WindowConfig(w, s, k), tuple(asset_ids)
    )


def write_cooccurrence_csv(cooc: CooccurrenceMatrix, path) -> None:
    ids = cooc.asset_ids or tuple(str(i) for i in range(cooc.n_assets))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["asset_id", *ids])
        for a, row in zip(ids, cooc.counts):
            w.writerow([a, *row.tolist()])

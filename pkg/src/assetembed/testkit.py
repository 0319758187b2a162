"""Synthetic panels with planted block structure, plus brute-force oracles.

Normal variates are produced from the seeded PCG64 uniform stream
(``numpy.random.default_rng(seed).random``) with the Box-Muller cosine
branch, ``z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``, consuming uniforms in
pairs ``(u1, u2)`` in row-major order. Any port with the same generator and
transform reproduces a panel exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .panel import ReturnsPanel
from .similarity import CooccurrenceMatrix, WindowConfig, pearson, top_k_indices


@dataclass(frozen=True)
class FactorModelSpec:
    num_blocks: int = 3
    assets_per_block: int = 20
    T: int = 1500
    factor_vol: float = 0.01
    idio_vol: float = 0.005
    cross_block_correlation: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_blocks < 2 or self.assets_per_block < 2:
            raise ValueError("need at least 2 blocks of at least 2 assets")
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if not (self.factor_vol > 0 and self.idio_vol > 0):
            raise ValueError("volatilities must be positive")
        if not 0.0 <= self.cross_block_correlation < 1.0:
            raise ValueError("cross_block_correlation must be in [0, 1)")


def box_muller(rng: np.random.Generator, shape) -> np.ndarray:
    size = int(np.prod(shape))
    u = rng.random(2 * size).reshape(size, 2)
    z = np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])
    return z.reshape(shape)


def business_dates(n: int, start: str = "2000-01-03") -> List[str]:
    days = np.arange(np.datetime64(start), np.datetime64(start) + 2 * n + 14)
    return [str(d) for d in days[np.is_busday(days)][:n]]


def generate_factor_panel(spec: FactorModelSpec) -> ReturnsPanel:
    """Returns ``factor_b(t) + idio(t)`` for every asset of block ``b``.

    Block factors share a common component so that any two of them have
    correlation ``cross_block_correlation``. Asset ids are ``B<b>_<i>`` and
    each asset's sector (and industry) label is ``S<b>``.
    """
    rng = np.random.default_rng(spec.seed)
    nb, na, T = spec.num_blocks, spec.assets_per_block, spec.T
    shocks = box_muller(rng, (nb + 1, T))
    rho = spec.cross_block_correlation
    factors = spec.factor_vol * (np.sqrt(rho) * shocks[0] + np.sqrt(1.0 - rho) * shocks[1:])
    idio = spec.idio_vol * box_muller(rng, (nb * na, T))
    returns = np.repeat(factors, na, axis=0) + idio
    ids = tuple(f"B{b}_{i}" for b in range(nb) for i in range(na))
    labels = {a: (f"S{a[1:].split('_')[0]}",) * 2 for a in ids}
    return ReturnsPanel(ids, tuple(business_dates(T)), returns, labels)


def block_of(panel: ReturnsPanel) -> np.ndarray:
    """Integer block id per asset, numbering sectors in order of first appearance."""
    sectors = panel.sectors()
    names = list(dict.fromkeys(sectors))
    return np.array([names.index(s) for s in sectors])


def naive_cooccurrence_oracle(panel: ReturnsPanel, config: WindowConfig) -> CooccurrenceMatrix:
    """Window x anchor x other triple loop with scalar Pearson. Tests only."""
    r = panel.returns
    n, T = r.shape
    w, s, k = config.window_length, config.stride, config.top_k
    if w > T:
        raise ValueError(f"window_length w={w} exceeds series length T={T}")
    num_windows = (T - w) // s + 1
    counts = np.zeros((n, n), dtype=np.int64)
    for t in range(num_windows):
        t0 = t * s
        for i in range(n):
            others = [j for j in range(n) if j != i]
            sims = [pearson(r[i, t0 : t0 + w], r[j, t0 : t0 + w]) for j in others]
            for pos in top_k_indices(sims, k):
                counts[i, others[pos]] += 1
    return CooccurrenceMatrix(counts, num_windows, config, panel.asset_ids)


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = f(x)
        flat[k] = orig - h
        down = f(x)
        flat[k] = orig
        gflat[k] = (up - down) / (2.0 * h)
    return g


def relative_error(a, b, floor: float = 1e-12) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def random_panel(n: int, T: int, seed: Optional[int] = None) -> ReturnsPanel:
    rng = np.random.default_rng(seed)
    return ReturnsPanel(
        tuple(f"A{i}" for i in range(n)),
        tuple(business_dates(T)),
        rng.normal(0.0, 0.01, size=(n, T)),
    )

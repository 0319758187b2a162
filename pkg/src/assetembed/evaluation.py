"""Downstream scoring: nearest neighbours, sector classification, hedging."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import accuracy_score, f1_score
from sklearn.model_selection import StratifiedKFold

from .panel import ReturnsPanel
from .similarity import pearson_matrix
from .trainer import EmbeddingMatrix

logger = logging.getLogger(__name__)

PERIODS_PER_YEAR = 252


def cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / np.where(norms == 0, 1.0, norms)
    return np.clip(unit @ unit.T, -1.0, 1.0)


def knn_neighbors(E: EmbeddingMatrix, anchor_id: str, m: int = 5) -> List[Tuple[str, float]]:
    """The ``m`` assets most cosine-similar to ``anchor_id``, best first."""
    if anchor_id not in E.asset_ids:
        raise KeyError(f"unknown asset id {anchor_id!r}")
    n = len(E.asset_ids)
    if not 1 <= m <= n - 1:
        raise ValueError(f"m must be in [1, {n - 1}]")
    i = E.asset_ids.index(anchor_id)
    unit = E.vectors / np.linalg.norm(E.vectors, axis=1, keepdims=True)
    sims = np.clip(unit @ unit[i], -1.0, 1.0)
    others = np.array([j for j in range(n) if j != i])
    order = others[np.lexsort((others, -sims[others]))][:m]
    return [(E.asset_ids[j], float(sims[j])) for j in order]


# --- sector classification -------------------------------------------------


@dataclass
class ClassificationReport:
    fold_accuracy: List[float]
    fold_macro_f1: List[float]
    fold_of: Dict[str, int]
    classes: List[str]
    dropped: List[str] = field(default_factory=list)
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.fold_accuracy))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.fold_macro_f1))


def classify_sectors(
    features,
    labels: Sequence[Optional[str]],
    folds: int = 5,
    seed: int = 0,
    weight_decay: float = 1e-4,
    max_iter: int = 2000,
    asset_ids: Optional[Sequence[str]] = None,
) -> ClassificationReport:
    """Stratified k-fold multinomial logistic regression on feature rows.

    ``features`` is an :class:`EmbeddingMatrix` or any N x d array; ``labels``
    gives one sector per row (``None`` for unlabeled rows, which are left
    out). Classes with fewer than ``folds`` members are dropped with a
    warning. The objective is mean cross-entropy plus
    ``weight_decay / 2 * |W|^2``.
    """
    if isinstance(features, EmbeddingMatrix):
        asset_ids = asset_ids or features.asset_ids
        features = features.vectors
    X = np.asarray(features, dtype=np.float64)
    if asset_ids is None:
        asset_ids = [str(i) for i in range(len(X))]
    if labels is None or all(l is None for l in labels):
        raise ValueError("no sector labels")
    if len(labels) != len(X):
        raise ValueError("labels and features differ in length")

    keep = np.array([l is not None for l in labels])
    sizes = Counter(l for l in labels if l is not None)
    small = {c for c, k in sizes.items() if k < folds}
    dropped = [a for a, l in zip(asset_ids, labels) if l in small]
    if small:
        warnings.warn(f"dropping classes with fewer than {folds} members: {sorted(small)}")
        keep &= np.array([l not in small for l in labels])
    # folds are drawn over rows sorted by asset id, so row order is irrelevant
    rows = sorted(np.flatnonzero(keep), key=lambda j: asset_ids[j])
    y = np.array([labels[j] for j in rows])
    X = X[rows]
    ids = [asset_ids[j] for j in rows]
    classes = sorted(set(y))
    if len(classes) < 2:
        raise ValueError("need at least 2 sectors")

    cv = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    accs, f1s, fold_of = [], [], {}
    for f, (tr, te) in enumerate(cv.split(X, y)):
        # sklearn minimises 0.5|W|^2 + C * sum(loss)
        clf = LogisticRegression(C=1.0 / (weight_decay * len(tr)), max_iter=max_iter, tol=1e-8)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            clf.fit(X[tr], y[tr])
        pred = clf.predict(X[te])
        accs.append(float(accuracy_score(y[te], pred)))
        f1s.append(float(f1_score(y[te], pred, labels=classes, average="macro", zero_division=0)))
        for j in te:
            fold_of[ids[j]] = f
    return ClassificationReport(
        accs, f1s, fold_of, classes, dropped,
        {"weight_decay": weight_decay, "max_iter": max_iter, "folds": folds, "seed": seed},
    )


# --- hedging backtest -------------------------------------------------------


def realized_volatility(portfolio_returns, periods_per_year: int = PERIODS_PER_YEAR) -> float:
    r = np.asarray(portfolio_returns, dtype=np.float64)
    if r.size < 2:
        raise ValueError("need at least 2 returns")
    return float(np.std(r, ddof=1) * math.sqrt(periods_per_year))


def spearman(x, y) -> float:
    """Pearson correlation of average-tie ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("need at least 2 observations")
    return float(pearson_matrix(np.vstack([stats.rankdata(x), stats.rankdata(y)]))[0, 1])


def welch_t_test_one_sided(sample_a, sample_b) -> Tuple[float, float, float]:
    """Welch t statistic, Satterthwaite df, and p-value for mean(a) < mean(b)."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("both samples need at least 2 values")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return 0.0, math.inf, 0.5
        return math.copysign(math.inf, diff), math.inf, 0.0 if diff < 0 else 1.0
    t = diff / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return float(t), float(df), float(special.stdtr(df, t))


SOURCES = ("embedding", "pearson", "spearman")


def similarity_matrix(source: str, train_panel: ReturnsPanel, embeddings=None) -> np.ndarray:
    if source == "embedding":
        if embeddings is None:
            raise ValueError("embedding source needs an EmbeddingMatrix")
        if tuple(embeddings.asset_ids) != train_panel.asset_ids:
            raise ValueError("embedding asset order differs from the panel")
        return cosine_matrix(embeddings.vectors)
    if source == "pearson":
        return pearson_matrix(train_panel.returns)
    if source == "spearman":
        ranks = np.apply_along_axis(stats.rankdata, 1, train_panel.returns)
        return pearson_matrix(ranks)
    raise ValueError(f"unknown similarity source {source!r}")


def dissimilar_pools(sim: np.ndarray, pool_size: int) -> np.ndarray:
    """Row i: the ``pool_size`` assets least similar to i (ascending, ties by index)."""
    n = sim.shape[0]
    if not 1 <= pool_size < n:
        raise ValueError(f"pool_size must be in [1, N-1={n - 1}], got {pool_size}")
    pools = np.empty((n, pool_size), dtype=np.int64)
    for i in range(n):
        others = np.array([j for j in range(n) if j != i])
        pools[i] = others[np.lexsort((others, sim[i, others]))][:pool_size]
    return pools


def hedge_volatilities(
    test_returns: np.ndarray, pools: np.ndarray, repeats: int, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Volatility of target-plus-random-pool-hedge portfolios.

    Trial ``k`` uses ``default_rng(seed + k)`` and draws one hedge per target
    in target order. Returns ``(vols, hedges)``, both ``(N, repeats)``.
    """
    n = pools.shape[0]
    vols = np.empty((n, repeats))
    hedges = np.empty((n, repeats), dtype=np.int64)
    for k in range(repeats):
        rng = np.random.default_rng(seed + k)
        picks = pools[np.arange(n), rng.integers(0, pools.shape[1], size=n)]
        hedges[:, k] = picks
        port = 0.5 * (test_returns + test_returns[picks])
        vols[:, k] = np.std(port, axis=1, ddof=1) * math.sqrt(PERIODS_PER_YEAR)
    return vols, hedges


@dataclass
class HedgeReport:
    asset_ids: Tuple[str, ...]
    method: str
    baseline: str
    method_vols: np.ndarray
    baseline_vols: np.ndarray
    method_hedges: np.ndarray
    baseline_hedges: np.ndarray
    t_stat: float
    df: float
    p_value: float
    alpha: float = 0.01

    @property
    def method_mean(self) -> float:
        return float(self.method_vols.mean())

    @property
    def baseline_mean(self) -> float:
        return float(self.baseline_vols.mean())

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha


def hedge_experiment(
    train_panel: ReturnsPanel,
    test_panel: ReturnsPanel,
    similarity_source: str = "embedding",
    embeddings: Optional[EmbeddingMatrix] = None,
    pool_size: int = 25,
    repeats: int = 100,
    seed: int = 0,
    baseline: str = "pearson",
    baseline_sim: Optional[np.ndarray] = None,
) -> HedgeReport:
    """Pair each target with a random hedge from its most dissimilar assets.

    Similarities come from ``train_panel`` (or the embeddings); volatilities
    are measured on ``test_panel``. The same trial seeds drive the baseline
    (Pearson unless overridden, or an explicit ``baseline_sim`` matrix), and
    the report carries a one-sided Welch test of method < baseline.
    """
    if train_panel.asset_ids != test_panel.asset_ids:
        raise ValueError("train and test panels must share the asset universe")
    n = train_panel.n_assets
    if pool_size >= n:
        raise ValueError(f"pool_size {pool_size} must be below N={n}")
    sim = similarity_matrix(similarity_source, train_panel, embeddings)
    base = baseline_sim if baseline_sim is not None else similarity_matrix(baseline, train_panel)
    test = test_panel.returns
    mv, mh = hedge_volatilities(test, dissimilar_pools(sim, pool_size), repeats, seed)
    bv, bh = hedge_volatilities(test, dissimilar_pools(base, pool_size), repeats, seed)
    t, df, p = welch_t_test_one_sided(mv.ravel(), bv.ravel())
    return HedgeReport(
        train_panel.asset_ids, similarity_source,
        baseline if baseline_sim is None else "custom", mv, bv, mh, bh, t, df, p,
    )


# --- report output ----------------------------------------------------------


def write_classification_csv(report: ClassificationReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "accuracy", "macro_f1"])
        for f, (a, m) in enumerate(zip(report.fold_accuracy, report.fold_macro_f1)):
            w.writerow([f, repr(a), repr(m)])
        w.writerow(["mean", repr(report.accuracy), repr(report.macro_f1)])


def write_hedge_trials_csv(report: HedgeReport, path) -> None:
    """One row per (target, trial), for plotting the volatility distributions."""
    ids = report.asset_ids
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "trial", "method_hedge", "method_vol", "baseline_hedge", "baseline_vol"])
        n, reps = report.method_vols.shape
        for i in range(n):
            for k in range(reps):
                w.writerow([
                    ids[i], k,
                    ids[report.method_hedges[i, k]], repr(float(report.method_vols[i, k])),
                    ids[report.baseline_hedges[i, k]], repr(float(report.baseline_vols[i, k])),
                ])


def hedge_summary(report: HedgeReport) -> str:
    return "\n".join([
        f"method            {report.method}",
        f"baseline          {report.baseline}",
        f"method mean vol   {report.method_mean:.4f}",
        f"baseline mean vol {report.baseline_mean:.4f}",
        f"welch t           {report.t_stat:.4f} (df {report.df:.1f})",
        f"one-sided p       {report.p_value:.3g}",
        f"significant@{report.alpha:g}  {'yes' if report.significant else 'no'}",
    ])


def classification_summary(report: ClassificationReport) -> str:
    lines = [f"fold {f}: accuracy {a:.4f}  macro-F1 {m:.4f}"
             for f, (a, m) in enumerate(zip(report.fold_accuracy, report.fold_macro_f1))]
    lines.append(f"mean:   accuracy {report.accuracy:.4f}  macro-F1 {report.macro_f1:.4f}")
    if report.dropped:
        lines.append(f"dropped {len(report.dropped)} assets in undersized classes")
    return "\n".join(lines)

"""Contrastive losses over dot products, with analytic gradients.

Every loss takes an anchor vector ``e`` (shape ``(d,)``), positives ``pos``
(``(P, d)``) and negatives ``neg`` (``(M, d)``), and returns a
:class:`LossResult` whose gradients have the shapes of the inputs. Rows of
``pos``/``neg`` may repeat; each occurrence gets its own gradient row.
"""

from __future__ import annotations

from typing import NamedTuple, Tuple

import numpy as np


class LossResult(NamedTuple):
    value: float
    grad_anchor: np.ndarray
    grad_pos: np.ndarray
    grad_neg: np.ndarray
    pos_part: float
    neg_part: float


def sigmoid(x):
    """Logistic function, branching on sign so ``exp`` never overflows."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    nonneg = x >= 0
    out[nonneg] = 1.0 / (1.0 + np.exp(-x[nonneg]))
    ex = np.exp(x[~nonneg])
    out[~nonneg] = ex / (1.0 + ex)
    return out


def log_sigmoid(x):
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def _check(e, pos, neg) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    e = np.asarray(e, dtype=np.float64)
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    neg = np.atleast_2d(np.asarray(neg, dtype=np.float64))
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one positive and one negative sample")
    if pos.shape[1] != e.shape[0] or neg.shape[1] != e.shape[0]:
        raise ValueError(f"dimension mismatch: anchor {e.shape}, pos {pos.shape}, neg {neg.shape}")
    return e, pos, neg


def loss_individual(e, pos, neg) -> LossResult:
    """Mean per-sample sigmoid loss on positives plus the same on negatives."""
    e, pos, neg = _check(e, pos, neg)
    x = pos @ e
    y = neg @ e
    P, M = len(pos), len(neg)
    pos_part = float(-log_sigmoid(x).mean())
    neg_part = float(-log_sigmoid(-y).mean())
    cp = -sigmoid(-x) / P  # dL/dx_j
    cn = sigmoid(y) / M  # dL/dy_j
    return LossResult(
        pos_part + neg_part,
        cp @ pos + cn @ neg,
        np.outer(cp, e),
        np.outer(cn, e),
        pos_part,
        neg_part,
    )


def loss_aggregate(e, pos, neg) -> LossResult:
    """Sigmoid loss against the mean positive and the mean negative vector."""
    e, pos, neg = _check(e, pos, neg)
    pbar = pos.mean(axis=0)
    nbar = neg.mean(axis=0)
    x = float(pbar @ e)
    y = float(nbar @ e)
    pos_part = float(-log_sigmoid(x))
    neg_part = float(-log_sigmoid(-y))
    cp = -float(sigmoid(-x))
    cn = float(sigmoid(y))
    P, M = len(pos), len(neg)
    return LossResult(
        pos_part + neg_part,
        cp * pbar + cn * nbar,
        np.tile(cp * e / P, (P, 1)),
        np.tile(cn * e / M, (M, 1)),
        pos_part,
        neg_part,
    )


def loss_hybrid(e, pos, neg) -> LossResult:
    """Individual sigmoid on positives plus a softmax of the mean positive
    against every negative."""
    e, pos, neg = _check(e, pos, neg)
    P = len(pos)
    x = pos @ e
    pbar = pos.mean(axis=0)
    logits = np.concatenate(([pbar @ e], neg @ e))
    shift = logits.max()
    ex = np.exp(logits - shift)
    lse = shift + np.log(ex.sum())
    q = ex / ex.sum()

    pos_part = float(-log_sigmoid(x).mean())
    neg_part = float(lse - logits[0])
    cp = -sigmoid(-x) / P
    c0 = q[0] - 1.0
    cn = q[1:]
    grad_anchor = cp @ pos + c0 * pbar + cn @ neg
    grad_pos = np.outer(cp, e) + c0 * e / P
    grad_neg = np.outer(cn, e)
    return LossResult(pos_part + neg_part, grad_anchor, grad_pos, grad_neg, pos_part, neg_part)


LOSSES = {
    "individual_sigmoid": loss_individual,
    "aggregate_sigmoid": loss_aggregate,
    "hybrid_sigmoid_softmax": loss_hybrid,
}


def reg_penalty(E, lam: float) -> Tuple[float, np.ndarray]:
    """``lam * sum_i (|e_i|^2 - 1)^2`` and its gradient."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    excess = np.einsum("ij,ij->i", E, E) - 1.0
    return float(lam * np.sum(excess**2)), 4.0 * lam * excess[:, None] * E

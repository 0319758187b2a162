import numpy as np
import pytest

from assetembed.optim import AdamState, PlateauScheduler, adam_step, lr_scheduler_step


def test_first_step_is_lr_times_sign():
    for g in (3.7, -0.02, 1e-3):
        x = np.array([[1.0]])
        state = AdamState.zeros_like(x)
        adam_step(x, np.array([[g]]), state, lr=0.01)
        assert x[0, 0] - 1.0 == pytest.approx(-0.01 * np.sign(g), abs=1e-6)
        assert state.t == 1


def test_zero_gradient_leaves_params():
    x = np.arange(6.0).reshape(3, 2)
    before = x.copy()
    state = AdamState.zeros_like(x)
    for _ in range(5):
        adam_step(x, np.zeros_like(x), state, lr=0.1)
    np.testing.assert_array_equal(x, before)


def test_scalar_quadratic_descent():
    x = np.array([[1.0]])
    state = AdamState.zeros_like(x)
    mags = [1.0]
    for _ in range(10):
        adam_step(x, 2 * x, state, lr=0.1)
        mags.append(abs(x[0, 0]))
    assert all(b < a for a, b in zip(mags, mags[1:]))


def test_sparse_rows_only():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 3))
    before = x.copy()
    g = rng.normal(size=(5, 3))
    state = AdamState.zeros_like(x)
    adam_step(x, g, state, lr=0.01, rows=np.array([1, 3]))
    np.testing.assert_array_equal(x[[0, 2, 4]], before[[0, 2, 4]])
    assert not np.allclose(x[[1, 3]], before[[1, 3]])
    assert np.all(state.m[[0, 2, 4]] == 0)


def test_dense_matches_reference_formula():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 2))
    ref = x.copy()
    state = AdamState.zeros_like(x)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t in range(1, 6):
        g = rng.normal(size=x.shape)
        adam_step(x, g, state, lr=0.05)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(x, ref, rtol=1e-13)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(np.zeros((2, 2)), np.zeros((2, 3)), AdamState.zeros_like(np.zeros((2, 2))), 0.1)


def test_scheduler_decreasing_keeps_lr():
    s = PlateauScheduler(0.001, patience=3)
    for loss in np.linspace(1.0, 0.5, 20):
        assert lr_scheduler_step(s, loss) == 0.001


def test_scheduler_plateau_once():
    s = PlateauScheduler(0.001, patience=3)
    lrs = [s.step(1.0) for _ in range(4)]
    assert lrs[:3] == [0.001] * 3
    assert lrs[3] == pytest.approx(0.0008, rel=1e-15)


def simulate_plateau(lr0, factor, patience, losses):
    """Independent state machine: count epochs since the last improvement."""
    best, since, lr = None, 0, lr0
    for loss in losses:
        if best is None or loss < best * (1 - 1e-4):
            best, since = loss, 0
        else:
            since += 1
            if since == patience:
                lr, since = lr * factor, 0
    return lr


def test_scheduler_two_plateaus():
    s = PlateauScheduler(0.001, patience=3)
    losses = [1.0] * 8
    for loss in losses:
        s.step(loss)
    assert s.lr == pytest.approx(0.00064, rel=1e-12)
    assert s.lr == pytest.approx(simulate_plateau(0.001, 0.8, 3, losses), rel=1e-12)


def test_scheduler_against_simulation_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        losses = np.round(rng.uniform(0.5, 1.0, size=40), 2)
        s = PlateauScheduler(0.01, patience=int(rng.integers(1, 5)), min_lr=0.0)
        for loss in losses:
            s.step(float(loss))
        assert s.lr == pytest.approx(simulate_plateau(0.01, 0.8, s.patience, losses), rel=1e-12)


def test_scheduler_min_lr_floor():
    s = PlateauScheduler(0.001, patience=1, min_lr=0.0009)
    for _ in range(10):
        s.step(1.0)
    assert s.lr == 0.0009

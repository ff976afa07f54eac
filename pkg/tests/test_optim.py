import numpy as np
import pytest

from ladderemo.errors import NumericError, ShapeError
from ladderemo.optim import NadamState, nadam_step


def test_zero_gradient_fixed_point(rng):
    theta = {"w": rng.standard_normal((3, 2))}
    before = theta["w"].copy()
    nadam_step(theta, {"w": np.zeros((3, 2))}, NadamState())
    np.testing.assert_array_equal(theta["w"], before)


def test_first_step_hand_value():
    # m_hat = 1, v_hat = 1, step = 0.9 * 1 + 0.1 * 1 / 0.1 = 1.9
    theta = {"w": np.zeros(1)}
    nadam_step(theta, {"w": np.ones(1)}, NadamState())
    assert theta["w"][0] == pytest.approx(-9.5e-5, abs=1e-9)


def test_deterministic(rng):
    grads = [rng.standard_normal(4) for _ in range(5)]
    runs = []
    for _ in range(2):
        theta, state = {"w": np.ones(4)}, NadamState()
        for g in grads:
            nadam_step(theta, {"w": g.copy()}, state)
        runs.append(theta["w"].copy())
    np.testing.assert_array_equal(runs[0], runs[1])


def test_matches_reference_recurrence(rng):
    state = NadamState(learning_rate=1e-2)
    theta = {"w": rng.standard_normal(5)}
    ref = theta["w"].copy()
    m = np.zeros(5)
    v = np.zeros(5)
    b1, b2, lr, eps = 0.9, 0.999, 1e-2, 1e-8
    for t in range(1, 30):
        g = rng.standard_normal(5) * (10.0 if t % 7 == 0 else 1.0)
        nadam_step(theta, {"w": g}, state)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g**2
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        ref = ref - lr * (b1 * m_hat + (1 - b1) * g / (1 - b1**t)) / (np.sqrt(v_hat) + eps)
        np.testing.assert_allclose(theta["w"], ref, rtol=1e-12, atol=1e-15)


def test_update_magnitude_bound(rng):
    lr, b1 = 1e-3, 0.9
    state = NadamState(learning_rate=lr)
    theta = {"w": np.zeros(200)}
    for t in range(300):
        scale = rng.choice([1e-3, 1.0, 1e3])
        g = rng.standard_normal(200) * scale
        g[rng.random(200) < 0.3] = 0.0
        before = theta["w"].copy()
        nadam_step(theta, {"w": g}, state)
        assert np.all(np.abs(theta["w"] - before) <= lr * (b1 + 1) / (1 - b1))


def test_errors():
    with pytest.raises(ShapeError):
        nadam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, NadamState())
    with pytest.raises(NumericError):
        nadam_step({"w": np.zeros(2)}, {"w": np.array([1.0, np.nan])}, NadamState())


def test_state_round_trip(rng):
    state = NadamState(learning_rate=1e-3)
    theta = {"a": rng.standard_normal(3), "b": rng.standard_normal((2, 2))}
    for _ in range(3):
        nadam_step(theta, {k: rng.standard_normal(v.shape) for k, v in theta.items()}, state)
    restored = NadamState.from_arrays(state.to_arrays())
    assert restored.t == state.t and restored.hyperparameters() == state.hyperparameters()
    for k in theta:
        np.testing.assert_array_equal(restored.m[k], state.m[k])
        np.testing.assert_array_equal(restored.v[k], state.v[k])

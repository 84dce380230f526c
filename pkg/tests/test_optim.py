import math

import numpy as np
import pytest

from mcl.optim import AdamState, LrSchedule, adam_step


def reference_adam(theta, grads, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook coupled-L2 ADAM, written out step by step."""
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    theta = theta.copy()
    for t, g in enumerate(grads, start=1):
        g = g + wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
    return theta


def test_zero_gradient_is_identity():
    theta = {"w": np.array([1.0, -2.0, 3.0])}
    state = AdamState()
    adam_step(theta, {"w": np.zeros(3)}, state, lr=1e-3)
    assert theta["w"].tolist() == [1.0, -2.0, 3.0]
    assert state.t == 1


def test_first_step_hand_computed():
    theta = {"x": np.array([0.0])}
    adam_step(theta, {"x": np.array([1.0])}, AdamState(), lr=1e-3)
    assert math.isclose(theta["x"][0], -1e-3 / (1 + 1e-8), rel_tol=1e-12)
    assert math.isclose(theta["x"][0], -9.99999990e-4, rel_tol=1e-9)


def test_pure_decay_shrinks_parameter():
    theta = {"x": np.array([1.0])}
    adam_step(theta, {"x": np.array([0.0])}, AdamState(), lr=1e-3, weight_decay=1e-4)
    assert theta["x"][0] < 1.0
    assert math.isclose(theta["x"][0], 1.0 - 1e-3 / (1 + 1e-8 / 1e-4), rel_tol=1e-12)


def test_matches_reference_over_many_steps():
    rng = np.random.default_rng(0)
    theta0 = rng.standard_normal((4, 5))
    grads = [rng.standard_normal((4, 5)) for _ in range(30)]
    params = {"w": theta0.copy()}
    state = AdamState()
    for g in grads:
        adam_step(params, {"w": g}, state, lr=3e-3, weight_decay=1e-2)
    ref = reference_adam(theta0, grads, 3e-3, 1e-2)
    assert np.allclose(params["w"], ref, rtol=1e-12, atol=1e-14)
    assert state.t == 30
    assert np.all(state.v["w"] >= 0)
    assert state.m["w"].shape == theta0.shape


def test_deterministic_bits():
    rng = np.random.default_rng(1)
    theta0 = rng.standard_normal(100)
    grads = [rng.standard_normal(100) for _ in range(5)]
    runs = []
    for _ in range(2):
        params, state = {"w": theta0.copy()}, AdamState()
        for g in grads:
            adam_step(params, {"w": g}, state, 1e-3, 1e-4)
        runs.append(params["w"].tobytes())
    assert runs[0] == runs[1]


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(3)}, {"w": np.zeros(4)}, AdamState(), 1e-3)


def test_schedule_paper_boundaries():
    s = LrSchedule()
    assert s.rate(0) == 1e-3
    assert s.rate(79) == 1e-3
    assert s.rate(80) == 1e-4
    assert s.rate(119) == 1e-4
    assert s.rate(120) == 1e-5
    assert s.rate(159) == 1e-5


@pytest.mark.parametrize("kwargs", [
    {"rates": (1e-3, 1e-4), "boundaries": (80, 120)},
    {"rates": (1e-3, 1e-2, 1e-5)},
    {"boundaries": (120, 80)},
    {"boundaries": (80, 160)},
    {"rates": (0.0, 0.0, 0.0)},
])
def test_schedule_validation(kwargs):
    with pytest.raises(ValueError):
        LrSchedule(**kwargs)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neurogrow.errors import ConfigError, DimensionError
from neurogrow.growth import grow_split
from neurogrow.network import backward, forward, softmax_cross_entropy
from neurogrow.optimizer import SgdState, lr_at, resize_state, sgd_step


def test_lr_examples():
    s = SgdState(base_lr=0.4, total_steps=100)
    assert lr_at(0, s) == 0.4
    assert lr_at(100, s) == pytest.approx(0.0, abs=1e-17)
    assert lr_at(50, s) == pytest.approx(0.2, abs=1e-16)
    assert lr_at(500, s) == lr_at(100, s)


@given(st.integers(1, 10_000))
def test_lr_non_increasing(total):
    s = SgdState(base_lr=1.0, total_steps=total)
    lrs = [lr_at(t, s) for t in range(0, total + 1, max(1, total // 200))]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))


def test_zero_grad_fixed_point():
    p = [np.array([1.0, -2.0])]
    sgd_step(p, [np.zeros(2)], SgdState(), 0)
    np.testing.assert_array_equal(p[0], [1.0, -2.0])


def test_zero_momentum_is_plain_gd():
    p = [np.array([1.0, 1.0])]
    s = SgdState(momentum=0.0)
    for _ in range(2):
        sgd_step(p, [np.array([1.0, -1.0])], s, 0, lr=0.5)
    np.testing.assert_array_equal(p[0], [0.0, 2.0])


def test_momentum_two_step_displacement():
    p = [np.zeros(1)]
    s = SgdState(momentum=0.9)
    g = np.array([2.0])
    sgd_step(p, [g], s, 0, lr=0.1)
    sgd_step(p, [g], s, 0, lr=0.1)
    assert p[0][0] == pytest.approx(-0.1 * 2.0 * (1 + 1.9), abs=1e-15)


def test_shape_mismatch_raises():
    with pytest.raises(DimensionError):
        sgd_step([np.zeros(2)], [np.zeros(3)], SgdState(), 0)
    with pytest.raises(DimensionError):
        sgd_step([np.zeros(2)], [], SgdState(), 0)


def test_quadratic_converges_within_500_steps():
    # f(x) = 0.5 * a * (x - c)^2 with the default momentum and a constant step
    a, c = 3.0, 1.25
    x = [np.array([10.0])]
    s = SgdState(base_lr=0.1, momentum=0.9, total_steps=500)
    for t in range(500):
        sgd_step(x, [a * (x[0] - c)], s, t, lr=s.base_lr)
        if abs(x[0][0] - c) <= 1e-6 and t > 0:
            break
    assert abs(x[0][0] - c) <= 1e-6


@pytest.mark.parametrize("kwargs", [{"momentum": 1.0}, {"base_lr": -1}, {"total_steps": 0}])
def test_state_validation(kwargs):
    with pytest.raises(ConfigError):
        SgdState(**kwargs)


def _train_step(net, state, rng):
    x = rng.normal(size=(4, 5))
    logits, cache = forward(net, x)
    _, g = softmax_cross_entropy(logits, rng.integers(0, 3, 4))
    sgd_step(net.parameters(), backward(net, cache, g), state, 0, lr=0.1)
    net.touch()


def test_resize_without_growth_is_identity(mlp):
    state = SgdState()
    _train_step(mlp, state, np.random.default_rng(0))
    before = [v.copy() for v in state.velocity]
    resize_state(state, mlp)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(before, state.velocity))


def test_resize_pads_with_zeros_and_step_runs(mlp):
    rng = np.random.default_rng(0)
    state = SgdState()
    _train_step(mlp, state, rng)
    old = [v.copy() for v in state.velocity]
    grow_split(mlp, 0, 1, rng)
    resize_state(state, mlp)
    v_w, v_b, v_succ = state.velocity[0], state.velocity[1], state.velocity[2]
    assert v_w.shape == (17, 5) and v_b.shape == (17,) and v_succ.shape == (32, 17)
    assert not v_w[16].any() and v_b[16] == 0 and not v_succ[:, 16].any()
    np.testing.assert_array_equal(v_w[:16], old[0])
    np.testing.assert_array_equal(v_succ[:, :16], old[2])
    _train_step(mlp, state, rng)

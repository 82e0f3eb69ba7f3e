import math

import numpy as np
import pytest

from bilstmcrf.optim import NadamState, lr_schedule, nadam_step
from bilstmcrf.tensor import Tensor


def scalar_nadam(grads, lr, b1=0.9, b2=0.999, eps=1e-8, theta=0.0):
    """Independent scalar transcription of the update rule."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** (t + 1))
        v_hat = v / (1 - b2 ** t)
        theta -= lr * (b1 * m_hat + (1 - b1) * g / (1 - b1 ** t)) / (math.sqrt(v_hat) + eps)
        out.append(theta)
    return out


def test_zero_gradient_leaves_params():
    p = Tensor(np.arange(4.0), dtype=np.float64)
    state = NadamState.for_params([p])
    nadam_step([p], [np.zeros(4)], state, 0.004)
    assert p.data.tolist() == [0.0, 1.0, 2.0, 3.0]
    assert state.t == 1


def test_scalar_trajectory_matches_reference():
    p = Tensor([0.0], dtype=np.float64)
    state = NadamState.for_params([p])
    got = []
    for _ in range(3):
        nadam_step([p], [np.array([1.0])], state, 0.004)
        got.append(p.item())
    expected = scalar_nadam([1.0, 1.0, 1.0], 0.004)
    assert np.allclose(got, expected, rtol=0, atol=1e-12)


def test_random_trajectory_matches_reference():
    rng = np.random.default_rng(0)
    grads = rng.normal(size=20)
    p = Tensor([0.3], dtype=np.float64)
    state = NadamState.for_params([p])
    for g in grads:
        nadam_step([p], [np.array([g])], state, 0.01)
    assert p.item() == pytest.approx(scalar_nadam(grads, 0.01, theta=0.3)[-1], abs=1e-12)


def test_deterministic():
    def run():
        rng = np.random.default_rng(4)
        p = Tensor(rng.normal(size=(3, 3)))
        state = NadamState.for_params([p])
        for _ in range(5):
            nadam_step([p], [rng.normal(size=(3, 3))], state, 0.004)
        return p.data.tobytes()

    assert run() == run()


@pytest.mark.parametrize("g", [2.5, -0.1])
def test_step_opposes_gradient(g):
    p = Tensor([1.0], dtype=np.float64)
    nadam_step([p], [np.array([g])], NadamState.for_params([p]), 0.004)
    assert np.sign(p.item() - 1.0) == -np.sign(g)


def test_zero_lr_is_fixed_point():
    rng = np.random.default_rng(1)
    p = Tensor(rng.normal(size=5))
    before = p.data.copy()
    state = NadamState.for_params([p])
    for _ in range(3):
        nadam_step([p], [rng.normal(size=5)], state, 0.0)
    assert np.array_equal(p.data, before)


def test_second_moment_non_negative():
    rng = np.random.default_rng(2)
    p = Tensor(rng.normal(size=6))
    state = NadamState.for_params([p])
    for _ in range(10):
        nadam_step([p], [rng.normal(size=6) * 100], state, 0.004)
        assert np.all(state.v[0] >= 0)
    assert state.t == 10


def test_non_finite_gradient_aborts():
    p = Tensor([1.0, 2.0], name="w")
    state = NadamState.for_params([p])
    with pytest.raises(FloatingPointError, match="w"):
        nadam_step([p], [np.array([1.0, np.nan])], state, 0.004)
    assert p.data.tolist() == [1.0, 2.0]
    assert state.t == 0


def test_shape_mismatch():
    p = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        nadam_step([p], [np.ones(3)], NadamState.for_params([p]), 0.004)


def test_none_gradient_counts_as_zero():
    p = Tensor([1.0])
    nadam_step([p], [None], NadamState.for_params([p]), 0.004)
    assert p.data.tolist() == [1.0]


def test_clipping_scales_gradient():
    a = Tensor([0.0], dtype=np.float64)
    b = Tensor([0.0], dtype=np.float64)
    nadam_step([a], [np.array([100.0])], NadamState.for_params([a]), 0.004, clip_norm=1.0)
    nadam_step([b], [np.array([1.0])], NadamState.for_params([b]), 0.004)
    assert a.item() == pytest.approx(b.item(), rel=1e-9)


class TestSchedule:
    @pytest.mark.parametrize("epoch", [0, 19])
    def test_first_phase(self, epoch):
        assert lr_schedule(epoch) == 0.004

    @pytest.mark.parametrize("epoch", [20, 39])
    def test_second_phase(self, epoch):
        assert lr_schedule(epoch) == 0.0004

    def test_negative_epoch(self):
        with pytest.raises(ValueError):
            lr_schedule(-1)

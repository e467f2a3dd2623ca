import numpy as np
import pytest

from bmilearn.numerics import make_rng
from bmilearn.task import TaskSpec, default_targets, input_at, loss_and_reward, target_output


def test_default_targets_unit_axes():
    t = default_targets(4)
    assert np.allclose(t[0], [1, 0])
    assert np.allclose(t[1], [0, 1])
    assert np.allclose(t[2], [-1, 0])
    assert np.allclose(t[3], [0, -1])


class TestInputAt:
    def test_step_on_then_off(self):
        spec = TaskSpec()
        x0 = input_at(spec, 2, 0)
        assert np.array_equal(x0, [0, 0, 1, 0])
        assert np.array_equal(input_at(spec, 2, 3), x0)   # 20% of 20 = 4 steps
        assert np.array_equal(input_at(spec, 2, 4), np.zeros(4))
        assert np.array_equal(input_at(spec, 2, 10), np.zeros(4))

    def test_constant_full(self):
        spec = TaskSpec(input_mode="constant_full")
        assert np.array_equal(input_at(spec, 0, 19), [1, 0, 0, 0])

    def test_entries_binary_and_sum_at_most_one(self):
        spec = TaskSpec()
        for tid in range(4):
            for t in range(spec.trial_len):
                x = input_at(spec, tid, t)
                assert set(np.unique(x)) <= {0.0, 1.0}
                assert x.sum() <= 1.0

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            input_at(TaskSpec(), 4, 0)


class TestTargetOutput:
    def test_position_constant(self):
        spec = TaskSpec()
        for t in (0, 7, 19):
            assert np.array_equal(target_output(spec, 0, t, np.zeros(2)), [1, 0])

    def test_velocity_on_target_is_zero(self):
        spec = TaskSpec(readout_mode="velocity")
        assert np.allclose(target_output(spec, 1, 5, np.array([0.0, 1.0])), 0.0)

    def test_velocity_from_origin(self):
        spec = TaskSpec(readout_mode="velocity")
        assert np.allclose(target_output(spec, 1, 0, np.zeros(2)), [0, 1])


class TestLossAndReward:
    def test_perfect_tracking(self):
        loss, r = loss_and_reward(np.zeros((20, 2)))
        assert loss == 0.0
        assert np.all(r == 0.0)

    def test_constant_error(self):
        eps = np.tile([1.0, 0.0], (20, 1))
        loss, r = loss_and_reward(eps)
        assert loss == pytest.approx(0.5)
        assert np.allclose(r, -1.0)

    @pytest.mark.parametrize("seed", range(4))
    def test_identity_loss_equals_minus_mean_reward(self, seed):
        eps = make_rng(seed).normal(size=(15, 2))
        loss, r = loss_and_reward(eps)
        assert loss == pytest.approx(-r.sum() / (2 * 15), abs=1e-14)

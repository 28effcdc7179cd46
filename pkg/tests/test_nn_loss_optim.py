import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deepmud.nn import (
    adam_init,
    adam_step,
    closed_form_param_count,
    half_mse,
    half_mse_grad,
    init_network,
    param_count,
)


class TestHalfMse:
    def test_zero_residual(self):
        x = np.ones((3, 5))
        assert half_mse(x, x) == 0.0

    def test_unit_residual_case(self):
        # one output row, four steps, residual all ones: (1/2) * 4 = 2
        predicted = np.zeros((1, 4))
        target = np.ones((1, 4))
        assert half_mse(predicted, target) == pytest.approx(2.0)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 6))
        b = rng.standard_normal((4, 6))
        assert half_mse(a, b) == pytest.approx(half_mse(b, a))

    def test_batch_mean(self):
        rng = np.random.default_rng(1)
        pred = rng.standard_normal((8, 3, 5))
        target = rng.standard_normal((8, 3, 5))
        per_sample = [half_mse(pred[i], target[i]) for i in range(8)]
        assert half_mse(pred, target) == pytest.approx(np.mean(per_sample))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            half_mse(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_grad_matches_finite_difference(self):
        rng = np.random.default_rng(2)
        pred = rng.standard_normal((2, 3, 4))
        target = rng.standard_normal((2, 3, 4))
        grad = half_mse_grad(pred, target)
        eps = 1e-6
        bumped = pred.copy()
        bumped[1, 2, 3] += eps
        numeric = (half_mse(bumped, target) - half_mse(pred, target)) / eps
        assert grad[1, 2, 3] == pytest.approx(numeric, rel=1e-4)

    def test_grad_zero_at_optimum(self):
        x = np.ones((2, 3, 4))
        assert np.all(half_mse_grad(x, x) == 0.0)

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.standard_normal((2, 3))
            b = rng.standard_normal((2, 3))
            assert half_mse(a, b) >= 0.0


class TestAdam:
    def test_first_step_unit_gradient(self):
        params = {"w": np.array([0.0])}
        state = adam_init(params)
        adam_step(params, {"w": np.array([1.0])}, state, learning_rate=0.001)
        # bias-corrected m_hat = v_hat = 1, so the step is -lr / (1 + eps)
        assert params["w"][0] == pytest.approx(-0.001, rel=1e-6)
        assert state.step_count == 1

    def test_zero_gradient_no_change(self):
        params = {"w": np.array([1.0, -2.0])}
        state = adam_init(params)
        adam_step(params, {"w": np.zeros(2)}, state, learning_rate=0.001)
        assert np.array_equal(params["w"], [1.0, -2.0])

    @given(st.floats(min_value=1e-6, max_value=1e6, allow_nan=False) |
           st.floats(min_value=-1e6, max_value=-1e-6, allow_nan=False))
    def test_first_step_sign_opposes_gradient(self, g):
        params = {"w": np.array([0.5])}
        state = adam_init(params)
        adam_step(params, {"w": np.array([g])}, state, learning_rate=0.001)
        assert np.sign(params["w"][0] - 0.5) == -np.sign(g)

    def test_non_finite_gradient_rejected(self):
        params = {"w": np.zeros(2)}
        state = adam_init(params)
        with pytest.raises(FloatingPointError):
            adam_step(params, {"w": np.array([np.nan, 0.0])}, state, 0.001)
        with pytest.raises(FloatingPointError):
            adam_step(params, {"w": np.array([np.inf, 0.0])}, state, 0.001)

    def test_moments_accumulate(self):
        params = {"w": np.array([0.0])}
        state = adam_init(params)
        for _ in range(3):
            adam_step(params, {"w": np.array([2.0])}, state, 0.01)
        assert state.step_count == 3
        assert state.first_moment["w"][0] == pytest.approx(
            2.0 * (1 - 0.9 ** 3), rel=1e-12)

    def test_defaults(self):
        state = adam_init({"w": np.zeros(1)})
        assert state.beta1 == 0.9 and state.beta2 == 0.999 and state.eps_stab == 1e-8


class TestParamCount:
    def test_standard_architecture(self):
        # input 10 -> LSTM 80 -> LSTM 60 -> dense 4
        net = init_network(np.random.default_rng(0), 10, 4, hidden_dims=(80, 60))
        expected = closed_form_param_count(10, (80, 60), 4)
        assert param_count(net) == expected
        assert expected == (4 * (80 * 10 + 80 * 80 + 80)
                            + 4 * (60 * 80 + 60 * 60 + 60)
                            + 4 * 60 + 4)

    def test_tiny_architecture(self):
        net = init_network(np.random.default_rng(0), 6, 2, hidden_dims=(3, 2))
        assert param_count(net) == closed_form_param_count(6, (3, 2), 2)

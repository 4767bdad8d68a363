"""Tests for gradients, finite-difference checks and Adam updates."""

import logging
import math

import pytest
import torch

from gait_koopman.errors import TrainingDivergenceError
from gait_koopman.training.kernel import (
    AdamState,
    ParamSet,
    adam_step,
    clip_gradients,
    finite_difference_check,
    gradient,
    value_and_gradient,
)


def _param(*values: float) -> torch.Tensor:
    return torch.tensor(values, dtype=torch.float64, requires_grad=True)


class TestParamSet:
    """Test ParamSet."""

    def test_requires_grad(self):
        """Test plain tensors are rejected."""
        with pytest.raises(ValueError):
            ParamSet({"a": [torch.zeros(2)]})

    def test_names_count_and_snapshot(self):
        """Test ordering, counting and snapshot/restore."""
        params = ParamSet({"a": [_param(1.0, 2.0)], "b": [_param(3.0)]})
        assert params.names() == ["a", "b"]
        assert params.count() == 3
        snapshot = params.snapshot()
        with torch.no_grad():
            params["a"][0].add_(10.0)
        params.restore(snapshot)
        assert params["a"][0].tolist() == [1.0, 2.0]

    def test_non_finite_groups(self):
        """Test groups holding NaN are reported."""
        params = ParamSet({"a": [_param(1.0)], "b": [_param(float("nan"))]})
        assert params.non_finite_groups() == ["b"]


class TestGradient:
    """Test reverse-mode gradients."""

    def test_half_squared_norm(self):
        """Test the gradient of ||p||^2 / 2 is p."""
        params = ParamSet({"a": [_param(1.0, -2.0)], "b": [_param(0.5, 3.0, 4.0)]})

        def objective(ps: ParamSet) -> torch.Tensor:
            return 0.5 * sum(torch.sum(t * t) for t in ps.tensors())

        value, grads = value_and_gradient(objective, params)
        assert float(value) == pytest.approx(0.5 * (1 + 4 + 0.25 + 9 + 16))
        assert torch.equal(grads["a"][0], params["a"][0].detach())
        assert torch.equal(grads["b"][0], params["b"][0].detach())

    def test_unused_group_is_zero(self):
        """Test a group the objective ignores gets zero gradients."""
        params = ParamSet({"used": [_param(2.0)], "unused": [_param(1.0, 1.0)]})
        grads = gradient(lambda ps: ps["used"][0].sum() ** 2, params)
        assert grads["used"][0].tolist() == [4.0]
        assert torch.equal(grads["unused"][0], torch.zeros(2, dtype=torch.float64))

    def test_constant_objective(self):
        """Test an objective without graph gives zeros."""
        params = ParamSet({"a": [_param(1.0)]})
        grads = gradient(lambda ps: torch.tensor(3.0, dtype=torch.float64), params)
        assert grads["a"][0].tolist() == [0.0]

    def test_non_finite_value_raises(self):
        """Test an infinite objective raises a divergence error."""
        params = ParamSet({"a": [_param(0.0)]})
        with pytest.raises(TrainingDivergenceError) as exc_info:
            value_and_gradient(lambda ps: torch.log(ps["a"][0]).sum(), params, name="log_loss")

        assert exc_info.value.operation == "log_loss"

    def test_non_finite_gradient_names_operation(self):
        """Test an infinite gradient raises and names an operation."""
        params = ParamSet({"a": [_param(0.0)]})
        with pytest.raises(TrainingDivergenceError) as exc_info:
            gradient(lambda ps: torch.sqrt(ps["a"][0]).sum(), params)

        assert exc_info.value.operation

    def test_non_scalar_raises(self):
        """Test a vector objective is rejected."""
        params = ParamSet({"a": [_param(1.0, 2.0)]})
        with pytest.raises(ValueError):
            gradient(lambda ps: ps["a"][0] * 2.0, params)


class TestClipGradients:
    """Test clip_gradients."""

    def test_scales_to_max_norm(self):
        """Test a norm-5 gradient is scaled to norm 1."""
        grads = {"a": [torch.tensor([3.0, 4.0], dtype=torch.float64)]}
        clipped = clip_gradients(grads, 1.0)
        assert clipped["a"][0].tolist() == pytest.approx([0.6, 0.8])

    def test_small_gradient_untouched(self):
        """Test gradients below the limit are returned unchanged."""
        grads = {"a": [torch.tensor([0.3], dtype=torch.float64)]}
        assert clip_gradients(grads, 1.0) is grads


class TestFiniteDifferenceCheck:
    """Test finite_difference_check."""

    @staticmethod
    def _objective(ps: ParamSet) -> torch.Tensor:
        a, b = ps["a"][0], ps["b"][0]
        return torch.sum(torch.sin(a) * a) + torch.sum(torch.exp(0.3 * b)) * torch.sum(a * a)

    def _params(self) -> ParamSet:
        generator = torch.Generator().manual_seed(0)
        return ParamSet(
            {
                "a": [torch.randn(6, dtype=torch.float64, generator=generator).requires_grad_()],
                "b": [torch.randn(3, 4, dtype=torch.float64, generator=generator).requires_grad_()],
            }
        )

    def test_true_gradient_passes(self):
        """Test analytic gradients agree with central differences."""
        params = self._params()
        before = params.snapshot()
        checks = finite_difference_check(self._objective, params, n_coords=100)
        assert [c.group for c in checks] == ["a", "b"]
        assert [c.coordinates for c in checks] == [6, 12]
        assert all(c.passed for c in checks)
        assert all(c.max_relative_error < 1e-6 for c in checks)
        for name in ("a", "b"):
            assert torch.equal(params[name][0].detach(), before[name][0])

    def test_corrupted_gradient_fails(self):
        """Test a gradient scaled by 1.01 is reported."""

        def corrupted(objective, ps):
            return {k: [g * 1.01 for g in gs] for k, gs in gradient(objective, ps).items()}

        checks = finite_difference_check(self._objective, self._params(), gradient_fn=corrupted)
        assert not any(c.passed for c in checks)
        assert all(c.max_relative_error == pytest.approx(0.01 / 1.01, rel=1e-3) for c in checks)


class TestAdamStep:
    """Test adam_step."""

    def test_hand_trace(self):
        """Test two steps against the bias-corrected update rule."""
        param = _param(1.0)
        params = ParamSet({"p": [param]})
        state = AdamState(learning_rate=0.1)
        g = 0.5
        m = v = 0.0
        expected = 1.0
        for t in (1, 2):
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            m_hat = m / (1 - 0.9**t)
            v_hat = v / (1 - 0.999**t)
            expected -= 0.1 * m_hat / (math.sqrt(v_hat) + 1e-8)
            report = adam_step(params, {"p": [torch.tensor([g], dtype=torch.float64)]}, state)
            assert report.step == t
            assert float(param) == pytest.approx(expected, rel=1e-12)
        exp_avg, exp_avg_sq = state.moments(param)
        assert float(exp_avg) == pytest.approx(m, rel=1e-12)
        assert float(exp_avg_sq) == pytest.approx(v, rel=1e-12)

    def test_zero_gradient_first_step(self):
        """Test a zero gradient leaves fresh parameters unchanged."""
        param = _param(1.0, 2.0)
        params = ParamSet({"p": [param]})
        adam_step(params, {"p": [torch.zeros(2, dtype=torch.float64)]}, AdamState(learning_rate=0.1))
        assert param.tolist() == [1.0, 2.0]

    def test_zero_gradient_decays_moments(self):
        """Test a zero gradient multiplies the moments by beta1 and beta2."""
        param = _param(1.0)
        params = ParamSet({"p": [param]})
        state = AdamState(learning_rate=0.01)
        adam_step(params, {"p": [torch.tensor([2.0], dtype=torch.float64)]}, state)
        m1, v1 = (float(x) for x in state.moments(param))
        adam_step(params, {"p": [torch.zeros(1, dtype=torch.float64)]}, state)
        m2, v2 = (float(x) for x in state.moments(param))
        assert m2 == pytest.approx(0.9 * m1, rel=1e-12)
        assert v2 == pytest.approx(0.999 * v1, rel=1e-12)

    def test_updates_within_bound(self):
        """Test random gradients never move a coordinate beyond the theoretical bound."""
        generator = torch.Generator().manual_seed(0)
        param = torch.zeros(50, dtype=torch.float64, requires_grad=True)
        params = ParamSet({"p": [param]})
        state = AdamState(learning_rate=1e-3)
        for _ in range(20):
            grad = torch.randn(50, dtype=torch.float64, generator=generator) * 100.0
            report = adam_step(params, {"p": [grad]}, state)
            assert report.max_update <= state.update_bound(report.step) * (1 + 1e-9)

    def test_slack_warning_is_logged_once(self, caplog):
        """Test repeated slack violations give one warning and then debug messages."""
        caplog.set_level(logging.DEBUG, logger="gait_koopman.training.kernel")
        params = ParamSet({"p": [_param(0.0, 0.0)]})
        state = AdamState(learning_rate=0.01)
        for _ in range(5):
            adam_step(params, {"p": [torch.ones(2, dtype=torch.float64)]}, state, step_bound_slack=-0.5)

        flagged = [r for r in caplog.records if "exceeds lr" in r.getMessage()]
        assert [r.levelno for r in flagged] == [logging.WARNING] + [logging.DEBUG] * 4
        assert state.slack_warned

    def test_first_step_bound_is_learning_rate(self):
        """Test the bound equals the learning rate at step 1."""
        assert AdamState(learning_rate=0.05).update_bound(1) == pytest.approx(0.05, rel=1e-12)

    def test_shape_mismatch_raises(self):
        """Test a wrongly shaped gradient is rejected."""
        params = ParamSet({"p": [_param(1.0, 2.0)]})
        with pytest.raises(ValueError):
            adam_step(params, {"p": [torch.zeros(3, dtype=torch.float64)]}, AdamState(learning_rate=0.1))

    def test_group_mismatch_raises(self):
        """Test gradient groups must match the parameter groups."""
        params = ParamSet({"p": [_param(1.0)]})
        with pytest.raises(ValueError):
            adam_step(params, {"q": [torch.zeros(1, dtype=torch.float64)]}, AdamState(learning_rate=0.1))

"""Tests for the finite-difference gradient suite."""

import pytest

from gait_koopman.training.gradcheck import GRADCHECK_COLUMNS, run_gradient_suite, scaled_gradient


class TestRunGradientSuite:
    """Test run_gradient_suite."""

    @pytest.fixture(scope="class")
    def table(self):
        """Run the suite once with a few coordinates per group."""
        return run_gradient_suite(seed=0, n_coords=8, n_frames=8, hidden_dim=16, embedding_dim=8)

    def test_columns_and_rows(self, table):
        """Test one row per (loss, group) pair."""
        assert list(table.columns) == GRADCHECK_COLUMNS
        assert list(table["loss"].unique()) == ["L_recons", "L_linearity", "L_recons_rec", "L_id", "total"]
        total_groups = table[table["loss"] == "total"]["group"].tolist()
        assert total_groups == ["encoder", "decoder", "k_estimator", "head_shape", "head_motion", "head_fusion"]

    def test_all_groups_pass(self, table):
        """Test analytic gradients agree with central differences everywhere."""
        failing = table[~table["passed"]]
        assert failing.empty, failing.to_string()
        assert (table["max_relative_error"] < 1e-4).all()

    def test_corrupted_gradient_is_reported(self):
        """Test a gradient scaled by 2 fails every group."""
        table = run_gradient_suite(
            seed=0, n_coords=4, n_frames=6, hidden_dim=16, embedding_dim=8, gradient_fn=scaled_gradient(2.0)
        )
        assert not table["passed"].any()

    @pytest.mark.slow
    def test_full_size_suite(self):
        """Test the suite with 100 coordinates per group and the default head."""
        table = run_gradient_suite(seed=1, n_coords=100, hidden_dim=2048, embedding_dim=64)
        assert table["passed"].all(), table.to_string()

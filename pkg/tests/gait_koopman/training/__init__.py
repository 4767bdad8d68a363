"""Tests for gait_koopman.training."""

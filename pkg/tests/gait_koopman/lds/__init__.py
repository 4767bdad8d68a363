"""Tests for gait_koopman.lds."""

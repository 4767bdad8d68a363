"""Tests for gait_koopman."""

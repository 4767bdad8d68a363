"""Tests for gait_koopman.data."""

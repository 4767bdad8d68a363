"""Tests for gait_koopman.tracking."""

"""Tests for gait_koopman.pose."""

"""Tests for gait_koopman.recognition."""

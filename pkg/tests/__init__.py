"""Tests for the long prompt tuner."""

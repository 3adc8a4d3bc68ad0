"""Tests for hsfuse."""

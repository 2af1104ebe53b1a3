"""Bundled data fixtures."""

"""Experiments, demos and the CLI-facing batteries."""

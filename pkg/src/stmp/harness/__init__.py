"""Experiment harness: config files, tensor I/O, metrics, CLI, sweeps."""

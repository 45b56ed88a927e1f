"""Experiment harnesses built on the core modules."""

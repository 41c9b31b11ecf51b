"""Experiment driver: configuration, repetitions, reports and overhead comparison."""

"""Experiment pipeline: data ingestion, per-series runs and aggregation."""

"""Configuration loading and experiment output storage."""

"""Training SARI coefficients against the AC score."""

"""AC score family and forecast diagnostics."""

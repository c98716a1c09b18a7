"""AC score library for multi-horizon forecasts.

Scores forecast ensembles for accuracy and revision stability, and trains
seasonal autoregressive integrated models against that score.
"""

__version__ = "0.1.0"

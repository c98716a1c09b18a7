"""Forecast data model: series, ensembles and horizon weight schedules."""

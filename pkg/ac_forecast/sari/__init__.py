"""SARI(p,d,0)x(P,D,0,s) models: forecasting, stationarity and fitting."""

"""Log-log convergence figures from rate-study CSV files."""

from .plot import PlotSpec, fit_slope, load_rows, median_table, render

__version__ = "0.1.0"

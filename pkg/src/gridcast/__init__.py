"""Spatio-temporal electricity load forecasting toolkit.

Edge-aware graph attention plus stacked LSTMs over grid topology and hourly
sequence data, with a synthetic data generator, preprocessing pipeline,
training loop, evaluation reports, and a stage-per-subcommand CLI.
"""

__version__ = "0.1.0"

"""Per-stock MLP factor models with linear benchmarks, evaluation and backtesting."""

__version__ = "0.1.0"

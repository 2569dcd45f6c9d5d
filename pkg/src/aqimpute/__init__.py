"""PM2.5 cell-hour grid fusion and missing-label imputation toolkit."""

__version__ = "0.1.0"

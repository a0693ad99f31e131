"""Yformer: U-Net shaped ProbSparse transformer for long-horizon forecasting, on a numpy autodiff core."""

__version__ = "0.1.0"

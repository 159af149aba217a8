"""Wavelet and SSA denoising front-ends for an LSTM forecaster of intraday bars."""

__version__ = "0.1.0"

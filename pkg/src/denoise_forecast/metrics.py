"""Forecast error measures: RMSE, MAE, MAPE and SDAPE.

MAPE is reported in percent (the x100 form); SDAPE is the population
standard deviation of the per-point absolute percentage errors taken on the
fraction scale. :func:`evaluate` also returns the other scale of each so
results can be laid next to tables that use either convention.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyInput, LengthMismatch, ZeroActual


def _pair(actual, predicted):
    y = np.asarray(actual, dtype=float).ravel()
    yhat = np.asarray(predicted, dtype=float).ravel()
    if len(y) != len(yhat):
        raise LengthMismatch(f"actual has {len(y)} values, predicted has {len(yhat)}")
    if len(y) == 0:
        raise EmptyInput("no values to evaluate")
    return y, yhat


def _ape(actual, predicted):
    y, yhat = _pair(actual, predicted)
    if np.any(y == 0):
        raise ZeroActual(f"actual value is zero at positions {np.flatnonzero(y == 0).tolist()}")
    return np.abs((y - yhat) / y)


def rmse(actual, predicted) -> float:
    y, yhat = _pair(actual, predicted)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mae(actual, predicted) -> float:
    y, yhat = _pair(actual, predicted)
    return float(np.mean(np.abs(y - yhat)))


def mape(actual, predicted) -> float:
    """Mean absolute percentage error, in percent."""
    return float(np.mean(_ape(actual, predicted)) * 100.0)


def sdape(actual, predicted) -> float:
    """Standard deviation of absolute percentage errors, fraction scale."""
    ape = _ape(actual, predicted)
    return float(np.sqrt(np.mean((ape - ape.mean()) ** 2)))


@dataclass
class EvalReport:
    rmse: float
    mae: float
    mape: float  # percent
    sdape: float  # fraction
    n: int
    mape_fraction: float
    sdape_percent: float

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(actual, predicted) -> EvalReport:
    ape = _ape(actual, predicted)
    y, yhat = _pair(actual, predicted)
    sd = float(np.sqrt(np.mean((ape - ape.mean()) ** 2)))
    return EvalReport(
        rmse=rmse(y, yhat),
        mae=mae(y, yhat),
        mape=float(ape.mean() * 100.0),
        sdape=sd,
        n=len(y),
        mape_fraction=float(ape.mean()),
        sdape_percent=sd * 100.0,
    )

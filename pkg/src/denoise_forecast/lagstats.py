"""Sample autocorrelation, partial autocorrelation and input-lag selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSeries, LagTooLarge

DEFAULT_MAX_LAG = 20
LAG_RULES = ("cutoff", "largest")


@dataclass
class PacfResult:
    values: np.ndarray  # indexed by lag, values[0] == 1
    confidence_bound: float
    selected_lag: int
    rule: str = "cutoff"

    @property
    def max_lag(self) -> int:
        return len(self.values) - 1

    def significant(self) -> np.ndarray:
        """Boolean mask over lags ``1..max_lag``."""
        return np.abs(self.values[1:]) > self.confidence_bound


def _check(x, max_lag):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if not isinstance(max_lag, (int, np.integer)) or max_lag < 1:
        raise LagTooLarge(f"max_lag must be a positive integer, got {max_lag!r}")
    if not max_lag < len(x) / 2:
        raise LagTooLarge(f"max_lag {max_lag} must be < n/2 = {len(x) / 2}")
    return x


def acf(x, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation of the mean-centred series at lags ``0..max_lag``."""
    x = _check(x, max_lag)
    y = x - x.mean()
    n = len(y)
    gamma0 = np.dot(y, y) / n
    if gamma0 == 0.0:
        raise DegenerateSeries("series has zero variance")
    out = np.array([np.dot(y[: n - d], y[d:]) / n for d in range(max_lag + 1)]) / gamma0
    out[0] = 1.0
    return out


def durbin_levinson(rho: np.ndarray) -> np.ndarray:
    """Partial autocorrelations from autocorrelations ``rho[0..K]`` (``rho[0] == 1``)."""
    K = len(rho) - 1
    pacf = np.zeros(K + 1)
    pacf[0] = 1.0
    if K == 0:
        return pacf
    phi = np.zeros(K + 1)
    phi[1] = pacf[1] = rho[1]
    v = 1.0 - rho[1] ** 2
    for k in range(2, K + 1):
        if v <= 0.0:
            break
        num = rho[k] - np.dot(phi[1:k], rho[k - 1 : 0 : -1])
        a = num / v
        prev = phi[1:k].copy()
        phi[1:k] = prev - a * prev[::-1]
        phi[k] = a
        pacf[k] = a
        v *= 1.0 - a * a
    return pacf


def select_lag(values: np.ndarray, bound: float, rule: str = "cutoff") -> int:
    """Pick the input window length from a PACF.

    ``"cutoff"``: the last lag of the initial run of significant lags, i.e.
    the order at which the PACF first drops inside the band.
    ``"largest"``: the largest significant lag anywhere up to ``max_lag``.
    Both fall back to 1 when nothing qualifies.
    """
    if rule not in LAG_RULES:
        raise ValueError(f"rule must be one of {LAG_RULES}, got {rule!r}")
    sig = np.abs(np.asarray(values)[1:]) > bound
    if rule == "largest":
        hits = np.nonzero(sig)[0]
        return int(hits[-1]) + 1 if len(hits) else 1
    k = 0
    while k < len(sig) and sig[k]:
        k += 1
    return max(k, 1)


def pacf(x, max_lag: int = DEFAULT_MAX_LAG, rule: str = "cutoff") -> PacfResult:
    """PACF by Durbin-Levinson on the sample ACF, with a 95% white-noise band."""
    rho = acf(x, max_lag)
    values = durbin_levinson(rho)
    bound = 1.96 / np.sqrt(len(x))
    return PacfResult(values, float(bound), select_lag(values, bound, rule), rule)

"""Synthetic bar datasets regenerated from named seeds.

Every fixture is a :class:`~denoise_forecast.pipeline.BarSeries` of 5-minute
bars. Only the close path differs between fixtures; open, high, low and
volume are derived from it the same way in each case.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .pipeline import BAR_SECONDS, BarSeries

START_EPOCH = 1577975400  # 2020-01-02 14:30 UTC
STANDARD_SEED = 2020
BARS_PER_SESSION = 78


def bars_from_close(close, seed: int, wick_scale: float | None = None, start: int = START_EPOCH) -> BarSeries:
    """Wrap a close path in consistent OHLCV bars.

    Each bar opens at the previous close; wicks extend past the body by
    half-normal amounts. Volume is log-normal and independent of price.
    """
    close = np.asarray(close, dtype=float)
    n = len(close)
    rng = np.random.default_rng([seed, 1])
    if wick_scale is None:
        steps = np.abs(np.diff(close))
        wick_scale = float(np.median(steps)) if n > 1 else 0.0
    open_ = np.concatenate([close[:1], close[:-1]])
    body_hi = np.maximum(open_, close)
    body_lo = np.minimum(open_, close)
    high = body_hi + wick_scale * np.abs(rng.normal(size=n))
    low = body_lo - wick_scale * np.abs(rng.normal(size=n))
    volume = np.round(1e4 * np.exp(0.4 * rng.normal(size=n)))
    timestamps = start + BAR_SECONDS * np.arange(n, dtype=float)
    return BarSeries(timestamps, open_, high, low, close, volume)


def standard(seed: int = STANDARD_SEED, n: int = 5000, noise: float = 15.0) -> BarSeries:
    """Linear trend, a session cycle and a slower weekly cycle, plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=float)
    clean = (
        28000.0
        + 0.05 * t
        + 20.0 * np.sin(2 * np.pi * t / BARS_PER_SESSION)
        + 40.0 * np.sin(2 * np.pi * t / (5 * BARS_PER_SESSION) + 1.0)
    )
    return bars_from_close(clean + noise * rng.normal(size=n), seed)


def ar1(seed: int = 1, n: int = 5000, phi: float = 0.8, level: float = 100.0) -> BarSeries:
    """Stationary AR(1) deviations around a positive level."""
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n + 500)
    x = np.zeros(n + 500)
    for i in range(1, len(x)):
        x[i] = phi * x[i - 1] + e[i]
    return bars_from_close(level + x[500:], seed)


def sine_noise(seed: int = 3, n: int = 1024, period: float = 64.0, sigma: float = 0.5) -> BarSeries:
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=float)
    return bars_from_close(50.0 + 5.0 * np.sin(2 * np.pi * t / period) + sigma * rng.normal(size=n), seed)


def constant(seed: int = 0, n: int = 200, value: float = 42.0) -> BarSeries:
    return bars_from_close(np.full(n, value), seed, wick_scale=0.5)


FIXTURES: dict[str, Callable[..., BarSeries]] = {
    "standard": standard,
    "ar1": ar1,
    "sine-noise": sine_noise,
    "constant": constant,
}


def make_fixture(name: str, seed: int | None = None) -> BarSeries:
    try:
        builder = FIXTURES[name]
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return builder() if seed is None else builder(seed=seed)

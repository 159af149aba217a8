"""Experiment orchestration: bar ingest, feature windows, the four model variants, reports.

A run takes a :class:`BarSeries`, optionally smooths the close series, picks
the input window length from the PACF of the raw close, trains a fresh LSTM on
everything before the final ``horizon`` samples and scores one-step-ahead
predictions over that held-out window.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from ._io import atomic_write_text
from .errors import (
    EmptyFile,
    ForecastError,
    InsufficientData,
    LengthMismatch,
    MismatchedRuns,
    MissingColumn,
    NonMonotoneTimestamps,
    SeriesTooShortForLag,
    UnparseableRow,
)
from .lagstats import DEFAULT_MAX_LAG, pacf
from .lstm import DEFAULT_HIDDEN, LstmNetwork, TrainConfig, train
from .metrics import EvalReport, evaluate
from .ssa import ssa_denoise
from .wavelet import dwt_decompose, wavelet_denoise

BAR_SECONDS = 300
HORIZONS = {"short": 12, "medium": 36, "long": 72}
METRICS = ("rmse", "mae", "mape", "sdape")


@dataclass(frozen=True)
class Variant:
    key: str
    label: str
    denoiser: str  # none | dropout-only | wavelet | ssa
    dropout_rate: float


# Row order of every comparison table.
VARIANTS = {
    v.key: v
    for v in (
        Variant("lstm", "LSTM", "none", 0.0),
        Variant("dropout-lstm", "Dropout-LSTM", "dropout-only", 0.2),
        Variant("ssa-lstm", "SSA-LSTM", "ssa", 0.0),
        Variant("wt-lstm", "WT-LSTM", "wavelet", 0.0),
    )
}
BASELINE = "lstm"

# Published results on 5-minute DJIA closes (2020), kept as reference targets.
# MAPE and SDAPE here are on the fraction scale.
REFERENCE_RESULTS = {
    "short": {
        "lstm": (5.8516916, 4.5195833, 0.0001481, 0.0001218),
        "dropout-lstm": (3.8146496, 2.8042500, 0.0000919, 0.0000848),
        "ssa-lstm": (1.7488158, 1.5490332, 0.0000508, 0.0000266),
        "wt-lstm": (1.1966503, 1.0434276, 0.0000342, 0.0000192),
    },
    "medium": {
        "lstm": (5.2447743, 4.1066389, 0.0001347, 0.0001069),
        "dropout-lstm": (3.4334542, 2.6221944, 0.0000860, 0.0000727),
        "ssa-lstm": (1.1713269, 0.9653596, 0.0000317, 0.0000222),
        "wt-lstm": (1.2796409, 1.0970283, 0.0000360, 0.0000216),
    },
    "long": {
        "lstm": (6.1655946, 4.5780000, 0.0001503, 0.0001356),
        "dropout-lstm": (4.5014469, 3.2249583, 0.0001059, 0.0001032),
        "ssa-lstm": (1.1753464, 0.9942363, 0.0000326, 0.0000206),
        "wt-lstm": (1.9164739, 1.4123594, 0.0000464, 0.0000426),
    },
}


# ---------------------------------------------------------------- bars


@dataclass
class Diagnostic:
    line: int
    reason: str


@dataclass
class BarSeries:
    timestamps: np.ndarray  # epoch seconds
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    bar_interval: float = BAR_SECONDS
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def __post_init__(self):
        for name in ("timestamps", "open", "high", "low", "close", "volume"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.timestamps)
        if any(len(getattr(self, k)) != n for k in ("open", "high", "low", "close", "volume")):
            raise LengthMismatch("bar fields have different lengths")
        if n < 2:
            raise InsufficientData(f"a bar series needs at least 2 bars, got {n}")
        steps = np.diff(self.timestamps)
        if np.any(steps <= 0):
            i = int(np.flatnonzero(steps <= 0)[0])
            raise NonMonotoneTimestamps(f"timestamp of bar {i + 1} does not follow bar {i}")
        bad = ohlc_violations(self.open, self.high, self.low, self.close)
        if len(bad):
            raise ValueError(f"OHLC ordering violated at bars {bad[:10].tolist()}")

    def __len__(self) -> int:
        return len(self.close)

    @property
    def dropped(self) -> int:
        return len(self.diagnostics)

    def data_hash(self) -> str:
        h = hashlib.sha256()
        for name in ("timestamps", "open", "high", "low", "close", "volume"):
            h.update(np.ascontiguousarray(getattr(self, name), dtype="<f8").tobytes())
        return h.hexdigest()


def ohlc_violations(open_, high, low, close) -> np.ndarray:
    """Indices of bars where low <= open, close <= high does not hold."""
    ok = (low <= open_) & (low <= close) & (open_ <= high) & (close <= high)
    return np.flatnonzero(~ok)


@dataclass(frozen=True)
class ColumnMapping:
    timestamp: str = "timestamp"
    open: str = "open"
    high: str = "high"
    low: str = "low"
    close: str = "close"
    volume: str = "volume"

    @classmethod
    def from_dict(cls, d: Mapping[str, str] | None) -> "ColumnMapping":
        return cls(**dict(d or {}))


def format_timestamp(epoch: float) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> float:
    """ISO-8601 (naive values are taken as UTC) or epoch seconds."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _resolve_columns(header: list[str], mapping: ColumnMapping) -> dict[str, int]:
    stripped = [h.strip() for h in header]
    lowered = [h.lower() for h in stripped]
    out = {}
    for f in fields(mapping):
        want = getattr(mapping, f.name)
        if want in stripped:
            out[f.name] = stripped.index(want)
        elif want.lower() in lowered:
            out[f.name] = lowered.index(want.lower())
        else:
            raise MissingColumn(f"column {want!r} ({f.name}) not found in header {stripped}")
    return out


def ingest_csv(path, columns: ColumnMapping | Mapping[str, str] | None = None, bar_interval: float = BAR_SECONDS) -> BarSeries:
    """Read and validate OHLCV bars from a UTF-8 CSV with a header row.

    Rows whose prices break low <= open, close <= high are dropped and listed
    in ``diagnostics``; any other malformed row is fatal.
    """
    mapping = columns if isinstance(columns, ColumnMapping) else ColumnMapping.from_dict(columns)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        while header is not None and not any(c.strip() for c in header):
            header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: no header row")
        cols = _resolve_columns(header, mapping)
        names = ("timestamp", "open", "high", "low", "close", "volume")
        rows, lines = [], []
        for row in reader:
            line = reader.line_num
            if not any(c.strip() for c in row):
                continue
            try:
                ts = parse_timestamp(row[cols["timestamp"]])
                vals = [float(row[cols[k]]) for k in names[1:]]
            except (IndexError, ValueError) as exc:
                raise UnparseableRow(line, f"{path}: {exc}") from None
            if not all(math.isfinite(v) for v in [ts, *vals]):
                raise UnparseableRow(line, f"{path}: non-finite value")
            rows.append([ts, *vals])
            lines.append(line)
    if not rows:
        raise EmptyFile(f"{path}: no data rows")
    data = np.array(rows)
    lines = np.array(lines)
    steps = np.diff(data[:, 0])
    if np.any(steps <= 0):
        i = int(np.flatnonzero(steps <= 0)[0]) + 1
        raise NonMonotoneTimestamps(f"{path}: line {lines[i]}: timestamp does not increase")
    bad = ohlc_violations(data[:, 1], data[:, 2], data[:, 3], data[:, 4])
    diagnostics = [Diagnostic(int(lines[i]), "OHLC ordering violated (need low <= open, close <= high)") for i in bad]
    keep = np.ones(len(data), dtype=bool)
    keep[bad] = False
    data = data[keep]
    if len(data) < 2:
        raise EmptyFile(f"{path}: fewer than 2 valid bars after dropping {len(bad)} rows")
    return BarSeries(*data.T, bar_interval=bar_interval, diagnostics=diagnostics)


def write_bars_csv(bars: BarSeries, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", "open", "high", "low", "close", "volume"])
    for i in range(len(bars)):
        w.writerow(
            [format_timestamp(bars.timestamps[i])]
            + [repr(float(getattr(bars, k)[i])) for k in ("open", "high", "low", "close", "volume")]
        )
    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------- features


@dataclass
class MinMaxScaler:
    minimum: np.ndarray
    span: np.ndarray

    @classmethod
    def fit(cls, values) -> "MinMaxScaler":
        v = np.asarray(values, dtype=float)
        lo, hi = v.min(axis=0), v.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        return cls(np.asarray(lo, dtype=float), np.asarray(span, dtype=float))

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.minimum) / self.span

    def inverse(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.span + self.minimum

    def to_dict(self) -> dict:
        return {"minimum": np.atleast_1d(self.minimum).tolist(), "span": np.atleast_1d(self.span).tolist()}

    @classmethod
    def from_dict(cls, d: Mapping, scalar: bool = False) -> "MinMaxScaler":
        lo, span = np.asarray(d["minimum"], dtype=float), np.asarray(d["span"], dtype=float)
        return cls(lo[0], span[0]) if scalar else cls(lo, span)


@dataclass
class Dataset:
    X: np.ndarray  # (N, lag, d), scaled
    y: np.ndarray  # (N,), scaled
    targets: np.ndarray  # (N,), raw closes
    target_index: np.ndarray  # bar index of each target
    feature_names: tuple[str, ...]
    lag: int
    n_train: int
    feature_scaler: MinMaxScaler
    target_scaler: MinMaxScaler

    def __len__(self) -> int:
        return len(self.y)

    @property
    def train_index(self) -> np.ndarray:
        return np.arange(self.n_train)

    @property
    def test_index(self) -> np.ndarray:
        return np.arange(self.n_train, len(self.y))


BASE_FEATURES = ("open", "high", "low", "close")
SMOOTHED_FEATURES = ("smoothed_close", "volume")


def build_features(
    bars: BarSeries,
    lag: int,
    smoothed=None,
    test_size: int = 0,
    scalers: tuple[MinMaxScaler, MinMaxScaler] | None = None,
) -> Dataset:
    """Window the bars into (sequence, next close) samples.

    Without ``smoothed`` each step carries (open, high, low, close); with it,
    (smoothed close, volume). Sample ``i`` covers bars ``i .. i+lag-1`` and
    targets the close of bar ``i+lag``. The last ``test_size`` samples form
    the test set and the scalers see only rows used by training samples,
    unless fitted ``(feature, target)`` scalers are passed in.
    """
    n = len(bars)
    if lag < 1:
        raise ValueError(f"lag must be >= 1, got {lag}")
    if lag > n - 1:
        raise SeriesTooShortForLag(f"lag {lag} needs at least {lag + 1} bars, have {n}")
    if smoothed is None:
        raw = np.column_stack([getattr(bars, k) for k in BASE_FEATURES])
        names = BASE_FEATURES
    else:
        smoothed = np.asarray(smoothed, dtype=float)
        if len(smoothed) != n:
            raise LengthMismatch(f"smoothed series has {len(smoothed)} values, bars have {n}")
        raw = np.column_stack([smoothed, bars.volume])
        names = SMOOTHED_FEATURES
    n_samples = n - lag
    n_train = n_samples - test_size
    if test_size < 0 or n_train < 1:
        raise InsufficientData(f"{n_samples} samples leave no training data with test size {test_size}")
    targets = bars.close[lag:].copy()
    if scalers is None:
        fscale = MinMaxScaler.fit(raw[: n_train + lag - 1])
        tscale = MinMaxScaler.fit(targets[:n_train])
    else:
        fscale, tscale = scalers
        if np.shape(fscale.minimum) != (raw.shape[1],):
            raise LengthMismatch(f"feature scaler covers {np.size(fscale.minimum)} columns, data has {raw.shape[1]}")
    scaled = fscale.transform(raw)
    windows = np.lib.stride_tricks.sliding_window_view(scaled, lag, axis=0)[:n_samples]
    X = np.ascontiguousarray(windows.transpose(0, 2, 1))
    return Dataset(
        X=X,
        y=tscale.transform(targets),
        targets=targets,
        target_index=np.arange(lag, n),
        feature_names=tuple(names),
        lag=lag,
        n_train=n_train,
        feature_scaler=fscale,
        target_scaler=tscale,
    )


# ---------------------------------------------------------------- experiments


@dataclass
class ExperimentConfig:
    variant: str = BASELINE
    horizon: str = "short"
    wavelet_levels: int = 4
    wavelet_padding: str = "symmetric"
    ssa_m: int = 10
    ssa_threshold: float = 0.9999
    ssa_center: bool = False
    max_lag: int = DEFAULT_MAX_LAG
    lag: int | None = None  # None: choose from the PACF
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    dropout_rate: float | None = None  # None: the variant's own rate
    seed: int = 0
    causal_denoise: bool = False
    min_bars: int = 500

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {list(VARIANTS)}")
        if self.horizon not in HORIZONS:
            raise ValueError(f"unknown horizon {self.horizon!r}; choose from {list(HORIZONS)}")
        if self.max_lag < 1:
            raise ValueError("max_lag must be >= 1")
        if self.lag is not None and self.lag < 1:
            raise ValueError("lag must be >= 1")
        if self.epochs < 1 or self.batch_size < 1 or not self.hidden or min(self.hidden) < 1:
            raise ValueError("epochs, batch_size and hidden sizes must be positive")

    @property
    def horizon_steps(self) -> int:
        return HORIZONS[self.horizon]

    @property
    def denoiser(self) -> str:
        return VARIANTS[self.variant].denoiser

    @property
    def effective_dropout(self) -> float:
        return VARIANTS[self.variant].dropout_rate if self.dropout_rate is None else self.dropout_rate

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _smooth(close: np.ndarray, cfg: ExperimentConfig) -> np.ndarray:
    if cfg.denoiser == "wavelet":
        return wavelet_denoise(close, cfg.wavelet_levels, padding=cfg.wavelet_padding)
    if cfg.denoiser == "ssa":
        return ssa_denoise(close, cfg.ssa_m, cfg.ssa_threshold, center=cfg.ssa_center)[0]
    raise ValueError(f"variant {cfg.variant!r} has no denoiser")


def denoise_close(close, cfg: ExperimentConfig, train_end: int | None = None) -> np.ndarray:
    """Smooth ``close`` with the variant's denoiser.

    With ``train_end`` set, values before it come from smoothing the prefix
    ``close[:train_end]`` only, and each later value ``t`` is the last point of
    the smoothed prefix ``close[:t+1]``, so no value depends on later bars
    beyond the training prefix.
    """
    close = np.asarray(close, dtype=float)
    if train_end is None:
        return _smooth(close, cfg)
    out = np.empty_like(close)
    out[:train_end] = _smooth(close[:train_end], cfg)
    for t in range(train_end, len(close)):
        out[t] = _smooth(close[: t + 1], cfg)[-1]
    return out


def denoise_summary(close, cfg: ExperimentConfig) -> dict:
    """Band energies (wavelet) or eigenvalue shares and kept components (SSA)."""
    if cfg.denoiser == "wavelet":
        dec = dwt_decompose(close, cfg.wavelet_levels, padding=cfg.wavelet_padding)
        return {"method": "wavelet", "levels": cfg.wavelet_levels, "padding": cfg.wavelet_padding, "band_energies": dec.band_energies()}
    if cfg.denoiser == "ssa":
        _, d, selected = ssa_denoise(close, cfg.ssa_m, cfg.ssa_threshold, center=cfg.ssa_center)
        return {
            "method": "ssa",
            "m": cfg.ssa_m,
            "threshold": cfg.ssa_threshold,
            "eigenvalue_shares": d.eigenvalue_shares.tolist(),
            "selected": list(selected),
        }
    return {"method": "none"}


@dataclass
class RunResult:
    variant: str
    horizon: str
    seed: int
    lag: int
    feature_names: tuple[str, ...]
    dropout_rate: float
    metrics: EvalReport
    predictions: np.ndarray
    actuals: np.ndarray
    timestamps: np.ndarray
    train_index: np.ndarray
    test_index: np.ndarray
    losses: list[float]
    data_hash: str
    config: ExperimentConfig
    denoise: dict
    timings: dict = field(default_factory=dict)

    @property
    def horizon_steps(self) -> int:
        return HORIZONS[self.horizon]

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "label": VARIANTS[self.variant].label,
            "horizon": self.horizon,
            "horizon_steps": self.horizon_steps,
            "seed": self.seed,
            "lag": self.lag,
            "features": list(self.feature_names),
            "dropout_rate": self.dropout_rate,
            "n_train": len(self.train_index),
            "metrics": self.metrics.to_dict(),
            "losses": [float(v) for v in self.losses],
            "config": self.config.to_dict(),
            "config_hash": self.config_hash,
            "data_hash": self.data_hash,
            "denoise": self.denoise,
            "series": {
                "timestamp": [format_timestamp(t) for t in self.timestamps],
                "actual": self.actuals.tolist(),
                "predicted": self.predictions.tolist(),
            },
            "timings": self.timings,
        }


def prepare_dataset(
    bars: BarSeries, cfg: ExperimentConfig, scalers: tuple[MinMaxScaler, MinMaxScaler] | None = None
) -> tuple[Dataset, dict]:
    """Denoise per the variant, choose the lag, and window the bars; returns the dataset and a denoiser summary."""
    n, h = len(bars), cfg.horizon_steps
    if n < cfg.min_bars:
        raise InsufficientData(f"{n} bars is below the minimum of {cfg.min_bars}")
    close = bars.close
    smoothed, summary = None, {"method": "none"}
    if cfg.denoiser in ("wavelet", "ssa"):
        smoothed = denoise_close(close, cfg, train_end=n - h if cfg.causal_denoise else None)
        summary = denoise_summary(close[: n - h] if cfg.causal_denoise else close, cfg)
        summary["causal"] = cfg.causal_denoise
    lag = cfg.lag if cfg.lag is not None else pacf(close, min(cfg.max_lag, (n - 1) // 2)).selected_lag
    ds = build_features(bars, lag, smoothed, test_size=h, scalers=scalers)
    if ds.n_train < cfg.batch_size:
        raise InsufficientData(f"{ds.n_train} training samples cannot fill a batch of {cfg.batch_size}")
    return ds, summary


def fit_model(ds: Dataset, cfg: ExperimentConfig) -> tuple[LstmNetwork, list[float]]:
    net = LstmNetwork.create(ds.X.shape[2], cfg.hidden, cfg.effective_dropout, seed=cfg.seed)
    tcfg = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, learning_rate=cfg.learning_rate, seed=cfg.seed)
    idx = ds.train_index
    return train(net, ds.X[idx], ds.y[idx], tcfg)


def predict_test(net: LstmNetwork, ds: Dataset) -> np.ndarray:
    """One-step-ahead predictions in price units over the test window."""
    return ds.target_scaler.inverse(net.predict(ds.X[ds.test_index]))


def run_experiment(bars: BarSeries, cfg: ExperimentConfig) -> RunResult:
    """Train one variant and score it on the final ``cfg.horizon`` bars."""
    t0 = time.perf_counter()
    ds, summary = prepare_dataset(bars, cfg)
    t_prep = time.perf_counter()
    net, losses = fit_model(ds, cfg)
    t_train = time.perf_counter()
    predictions = predict_test(net, ds)
    actuals = ds.targets[ds.test_index]
    return RunResult(
        variant=cfg.variant,
        horizon=cfg.horizon,
        seed=cfg.seed,
        lag=ds.lag,
        feature_names=ds.feature_names,
        dropout_rate=cfg.effective_dropout,
        metrics=evaluate(actuals, predictions),
        predictions=predictions,
        actuals=actuals,
        timestamps=bars.timestamps[ds.target_index[ds.test_index]],
        train_index=ds.train_index,
        test_index=ds.test_index,
        losses=losses,
        data_hash=bars.data_hash(),
        config=cfg,
        denoise=summary,
        timings={
            "prepare_s": t_prep - t0,
            "train_s": t_train - t_prep,
            "total_s": time.perf_counter() - t0,
        },
    )


# ---------------------------------------------------------------- comparison


@dataclass
class ModelScore:
    """Metrics of one variant; lets published numbers enter :func:`compare_models`."""

    variant: str
    metrics: Mapping[str, float]
    horizon: str = "short"
    seed: int = 0
    data_hash: str = ""


def improvement_pct(baseline: float, value: float) -> float | None:
    """(baseline - value) / baseline * 100; None when the baseline is zero."""
    if baseline == 0:
        return 0.0 if value == 0 else None
    return (baseline - value) / baseline * 100.0


def _metric_dict(m) -> dict[str, float]:
    if isinstance(m, EvalReport):
        return {k: getattr(m, k) for k in METRICS}
    return {k: float(m[k]) for k in METRICS}


@dataclass
class Comparison:
    horizon: str
    seed: int
    rows: list[tuple[str, dict[str, float]]]  # in VARIANTS order
    improvements: dict[str, dict[str, float | None]]  # variant -> metric -> % vs baseline

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "seed": self.seed,
            "rows": [{"variant": v, "label": VARIANTS[v].label, **m} for v, m in self.rows],
            "improvement_pct_vs_lstm": self.improvements,
        }

    def to_table(self) -> str:
        """Fixed-width table; MAPE and SDAPE printed as fractions."""
        steps = HORIZONS.get(self.horizon)
        title = f"horizon {self.horizon}" + (f" ({steps} bars)" if steps else "") + f", seed {self.seed}"
        lines = [title, f"{'':<14}" + "".join(f"{m.upper():>14}" for m in METRICS)]
        for v, m in self.rows:
            vals = (m["rmse"], m["mae"], m["mape"] / 100.0, m["sdape"])
            lines.append(f"{VARIANTS[v].label:<14}" + "".join(f"{x:>14.7f}" for x in vals))
        if self.improvements:
            lines.append("improvement vs LSTM (%)")
            for v, imp in self.improvements.items():
                cells = "".join(f"{'n/a':>14}" if imp[k] is None else f"{imp[k]:>14.2f}" for k in METRICS)
                lines.append(f"{VARIANTS[v].label:<14}" + cells)
        return "\n".join(lines)


def compare_models(entries: Iterable) -> Comparison:
    """Line up variants in fixed order and express each against the baseline LSTM.

    ``entries`` are :class:`RunResult` or :class:`ModelScore` objects from one
    dataset, horizon and seed. MAPE in the metrics is on the percent scale.
    """
    entries = list(entries)
    if not entries:
        raise MismatchedRuns("nothing to compare")
    first = entries[0]
    for e in entries[1:]:
        for attr in ("data_hash", "horizon", "seed"):
            if getattr(e, attr) != getattr(first, attr):
                raise MismatchedRuns(f"runs differ in {attr}: {getattr(first, attr)!r} vs {getattr(e, attr)!r}")
    by_variant = {}
    for e in entries:
        if e.variant not in VARIANTS:
            raise ValueError(f"unknown variant {e.variant!r}")
        if e.variant in by_variant:
            raise MismatchedRuns(f"variant {e.variant!r} appears twice")
        by_variant[e.variant] = _metric_dict(e.metrics)
    rows = [(v, by_variant[v]) for v in VARIANTS if v in by_variant]
    improvements = {}
    if BASELINE in by_variant:
        base = by_variant[BASELINE]
        improvements = {
            v: {k: improvement_pct(base[k], m[k]) for k in METRICS} for v, m in rows if v != BASELINE
        }
    return Comparison(first.horizon, first.seed, rows, improvements)


# ---------------------------------------------------------------- reports


@dataclass
class RunFailure:
    variant: str
    horizon: str
    seed: int
    error: str
    message: str


@dataclass
class ForecastReport:
    data_hash: str
    entries: list[RunResult] = field(default_factory=list)
    failures: list[RunFailure] = field(default_factory=list)

    def comparisons(self) -> list[Comparison]:
        groups: dict[tuple, list[RunResult]] = {}
        for e in self.entries:
            groups.setdefault((e.seed, e.horizon), []).append(e)
        order = sorted(groups, key=lambda k: (list(HORIZONS).index(k[1]), k[0]))
        return [compare_models(groups[k]) for k in order]

    def check_complete(self, variants: Sequence[str], horizons: Sequence[str], seeds: Sequence[int]) -> None:
        """Every requested (variant, horizon, seed) must appear exactly once among entries and failures."""
        seen = [(e.variant, e.horizon, e.seed) for e in self.entries] + [
            (f.variant, f.horizon, f.seed) for f in self.failures
        ]
        want = [(v, h, s) for s in seeds for h in horizons for v in variants]
        if sorted(seen) != sorted(want):
            raise MismatchedRuns("report does not cover the requested run matrix exactly once")

    def to_dict(self) -> dict:
        return {
            "format": "denoise-forecast-report",
            "version": __version__,
            "data_hash": self.data_hash,
            "entries": [e.to_dict() for e in self.entries],
            "failures": [asdict(f) for f in self.failures],
            "comparisons": [c.to_dict() for c in self.comparisons()],
            "reference": {
                h: {v: dict(zip(("rmse", "mae", "mape_fraction", "sdape"), vals)) for v, vals in rows.items()}
                for h, rows in REFERENCE_RESULTS.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        return "\n\n".join(c.to_table() for c in self.comparisons()) + "\n"

    def write(self, output_dir) -> dict[str, str]:
        """Write report.json, tables.txt and one plot CSV per run, each atomically."""
        os.makedirs(output_dir, exist_ok=True)
        plots = os.path.join(output_dir, "plots")
        os.makedirs(plots, exist_ok=True)
        written = {}
        written["json"] = os.path.join(output_dir, "report.json")
        atomic_write_text(written["json"], self.to_json())
        written["table"] = os.path.join(output_dir, "tables.txt")
        atomic_write_text(written["table"], self.to_table())
        for e in self.entries:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["timestamp", "actual", "predicted"])
            for t, a, p in zip(e.timestamps, e.actuals, e.predictions):
                w.writerow([format_timestamp(t), repr(float(a)), repr(float(p))])
            path = os.path.join(plots, f"{e.variant}_{e.horizon}_seed{e.seed}.csv")
            atomic_write_text(path, buf.getvalue())
            written[f"plot:{e.variant}:{e.horizon}:{e.seed}"] = path
        return written


def run_matrix(
    bars: BarSeries,
    base: ExperimentConfig,
    variants: Sequence[str] = tuple(VARIANTS),
    horizons: Sequence[str] = tuple(HORIZONS),
    seeds: Sequence[int] = (0,),
    log=None,
) -> ForecastReport:
    """Run every (variant, horizon, seed) combination; a failing run is recorded, not raised."""
    report = ForecastReport(bars.data_hash())
    for seed in seeds:
        for horizon in horizons:
            for variant in variants:
                cfg = replace(base, variant=variant, horizon=horizon, seed=seed)
                try:
                    report.entries.append(run_experiment(bars, cfg))
                except ForecastError as exc:
                    report.failures.append(RunFailure(variant, horizon, seed, type(exc).__name__, str(exc)))
                    if log:
                        log(f"run {variant}/{horizon}/seed {seed} failed: {type(exc).__name__}: {exc}")
    return report

"""Feature engineering, train-only scaling, chronological split, windowing.

Eleven features per sample: the raw temperature, cyclical hour-of-day and
day-of-week encodings, first/second differences, the squared first
difference, and trailing rolling mean/std/range.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import ReadingSeries


class EmptySeries(DataError):
    pass


class TooShort(DataError):
    pass


class EmptyTrain(DataError):
    pass


class ConstantFeature(UserWarning):
    """A feature was constant on the training rows; its scale is set to 1."""


FEATURE_COLUMNS = (
    "temp",
    "hour_sin",
    "hour_cos",
    "dow_sin",
    "dow_cos",
    "d1",
    "d2",
    "energy",
    "roll_mean",
    "roll_std",
    "roll_range",
)

DEFAULT_ROLL_WINDOW = 6
DEFAULT_WINDOW_LEN = 48
DEFAULT_TRAIN_STRIDE = 1


@dataclass(frozen=True)
class FeatureFrame:
    timestamps: np.ndarray
    data: np.ndarray
    columns: tuple[str, ...] = FEATURE_COLUMNS

    def __post_init__(self):
        if self.data.shape != (len(self.timestamps), len(self.columns)):
            raise DataError(f"feature matrix shape {self.data.shape} inconsistent")

    def __len__(self) -> int:
        return len(self.timestamps)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def slice(self, start: int, stop: int) -> "FeatureFrame":
        return FeatureFrame(self.timestamps[start:stop], self.data[start:stop], self.columns)


def _rolling_stats(x: np.ndarray, w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trailing mean/std/range over the last w samples; warm-up rows use the
    available prefix."""
    t = len(x)
    mean = np.empty(t)
    std = np.empty(t)
    rng = np.empty(t)
    head = min(w - 1, t)
    for i in range(head):
        seg = x[: i + 1]
        mean[i] = seg.mean()
        std[i] = seg.std()
        rng[i] = seg.max() - seg.min()
    if t >= w:
        view = np.lib.stride_tricks.sliding_window_view(x, w)
        mean[w - 1 :] = view.mean(axis=1)
        std[w - 1 :] = view.std(axis=1)
        rng[w - 1 :] = view.max(axis=1) - view.min(axis=1)
    return mean, std, rng


def engineer(series: ReadingSeries, roll_window: int = DEFAULT_ROLL_WINDOW) -> FeatureFrame:
    """Derive the feature matrix from a gap-free series.

    Differences are zero-padded at the start so the frame keeps the series
    length; rolling statistics are trailing (causal).
    """
    if len(series) == 0:
        raise EmptySeries(f"{series.station_id}: empty series")
    x = np.asarray(series.values, dtype=np.float64)
    if not np.isfinite(x).all():
        raise DataError(f"{series.station_id}: series has missing values, align first")
    ts = np.asarray(series.timestamps, dtype=np.int64)

    hour = (ts % 86400) / 3600.0
    # epoch day 0 is a Thursday (weekday 3), matching datetime.weekday()
    dow = (ts // 86400 + 3) % 7 + (ts % 86400) / 86400.0
    hour_angle = 2.0 * np.pi * hour / 24.0
    dow_angle = 2.0 * np.pi * dow / 7.0

    d1 = np.zeros_like(x)
    d1[1:] = np.diff(x)
    d2 = np.zeros_like(x)
    d2[1:] = np.diff(d1)
    roll_mean, roll_std, roll_range = _rolling_stats(x, roll_window)

    data = np.column_stack(
        [
            x,
            np.sin(hour_angle),
            np.cos(hour_angle),
            np.sin(dow_angle),
            np.cos(dow_angle),
            d1,
            d2,
            d1**2,
            roll_mean,
            roll_std,
            roll_range,
        ]
    )
    return FeatureFrame(ts, data)


def chrono_split(frame: FeatureFrame, train_fraction: float = 0.8) -> tuple[FeatureFrame, FeatureFrame, int]:
    """First floor(train_fraction * T) rows train, the rest test; returns the
    boundary index as well."""
    t = len(frame)
    if t < 5:
        raise TooShort(f"cannot split {t} rows")
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction {train_fraction} out of (0, 1)")
    split = int(np.floor(train_fraction * t))
    return frame.slice(0, split), frame.slice(split, t), split


@dataclass(frozen=True)
class ZScoreScaler:
    """Per-feature standardisation fitted on training rows only."""

    mean: np.ndarray
    std: np.ndarray
    columns: tuple[str, ...] = FEATURE_COLUMNS

    def apply(self, frame: FeatureFrame) -> FeatureFrame:
        if frame.columns != self.columns:
            raise DataError("frame columns do not match the fitted scaler")
        return FeatureFrame(frame.timestamps, (frame.data - self.mean) / self.std, frame.columns)

    def unapply(self, frame: FeatureFrame) -> FeatureFrame:
        return FeatureFrame(frame.timestamps, frame.data * self.std + self.mean, frame.columns)

    def to_json(self, path: str | Path) -> None:
        doc = {
            name: {"mean": float(m), "std": float(s)}
            for name, m, s in zip(self.columns, self.mean, self.std)
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "ZScoreScaler":
        doc = json.loads(Path(path).read_text())
        columns = tuple(doc)
        mean = np.array([doc[c]["mean"] for c in columns])
        std = np.array([doc[c]["std"] for c in columns])
        return cls(mean, std, columns)


def fit_scaler(train: FeatureFrame) -> ZScoreScaler:
    """Fit per-column mean and population std; constant columns get std 1."""
    if len(train) == 0:
        raise EmptyTrain("cannot fit a scaler on an empty frame")
    mean = train.data.mean(axis=0)
    std = train.data.std(axis=0)
    flat = std == 0.0
    if flat.any():
        names = [c for c, f in zip(train.columns, flat) if f]
        warnings.warn(ConstantFeature(f"constant feature(s) {names}, std set to 1"), stacklevel=2)
        std = np.where(flat, 1.0, std)
    return ZScoreScaler(mean, std, train.columns)


@dataclass(frozen=True)
class WindowBatch:
    """Contiguous (window_len x n_features) blocks cut from a frame."""

    windows: np.ndarray
    origins: np.ndarray
    window_len: int
    stride: int

    def __len__(self) -> int:
        return len(self.origins)

    @property
    def n_features(self) -> int:
        return self.windows.shape[2] if self.windows.ndim == 3 else 0


def window(frame: FeatureFrame, window_len: int = DEFAULT_WINDOW_LEN, stride: int = 1) -> WindowBatch:
    """Slice the frame into overlapping windows; count is
    floor((T - window_len) / stride) + 1, or 0 when the frame is too short."""
    if window_len < 1 or stride < 1:
        raise DataError("window_len and stride must be >= 1")
    t, f = frame.data.shape
    if t < window_len:
        warnings.warn(f"frame of {t} rows yields no {window_len}-sample windows", stacklevel=2)
        return WindowBatch(np.empty((0, window_len, f)), np.empty(0, dtype=np.int64), window_len, stride)
    view = np.lib.stride_tricks.sliding_window_view(frame.data, (window_len, f))[::stride, 0]
    origins = np.arange(0, t - window_len + 1, stride, dtype=np.int64)
    return WindowBatch(np.ascontiguousarray(view), origins, window_len, stride)

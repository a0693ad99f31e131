"""CSV ingestion, standardization, calendar features, splits and sliding windows.

Series files follow the ETT/ECL layout: a ``date`` column formatted
``YYYY-MM-DD HH:MM:SS`` followed by numeric channels.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class DataError(ValueError):
    pass


class EmptySplitError(DataError):
    pass


@dataclass
class RawSeries:
    timestamps: pd.DatetimeIndex
    values: np.ndarray  # (L, C)
    columns: list[str]
    targets: list[str]
    freq: pd.Timedelta

    def __len__(self) -> int:
        return len(self.timestamps)

    def column_index(self, names) -> list[int]:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise DataError(f"unknown columns {missing}; available {self.columns}")
        return [self.columns.index(n) for n in names]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=self.columns)
        df.insert(0, "date", self.timestamps.strftime(DATE_FORMAT))
        return df


def _parse_float(text: str) -> float:
    try:
        return float(text) if text else np.nan
    except ValueError:
        return np.nan


def ingest_csv(path, targets=("OT",), freq=None, fill: str = "reject") -> RawSeries:
    """Parse and validate a series file.

    ``fill`` is "reject" (missing cells raise) or "ffill" (carry the last value
    forward). ``freq`` defaults to the first timestamp spacing.
    """
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if df.columns[0] != "date":
        raise DataError(f"first column must be 'date', got {df.columns[0]!r}")
    stamps = pd.to_datetime(df["date"], format=DATE_FORMAT, errors="coerce")
    bad = stamps.isna().to_numpy()
    if bad.any():
        row = int(np.argmax(bad))
        raise DataError(f"unparseable timestamp {df['date'].iloc[row]!r} at row {row}")
    columns = list(df.columns[1:])
    values = np.empty((len(df), len(columns)))
    for j, col in enumerate(columns):
        raw = df[col].str.strip()
        # float() is correctly rounded; pd.to_numeric can be off by an ulp
        parsed = raw.map(_parse_float)
        invalid = parsed.isna() & (raw != "")
        if invalid.any():
            row = int(np.argmax(invalid.to_numpy()))
            raise DataError(f"unparseable value {df[col].iloc[row]!r} at row {row}, column {col!r}")
        values[:, j] = parsed.to_numpy(dtype=float)
    if np.isnan(values).any():
        if fill != "ffill":
            row, j = np.argwhere(np.isnan(values))[0]
            raise DataError(f"missing value at row {row}, column {columns[j]!r}")
        values = pd.DataFrame(values).ffill().to_numpy()
        if np.isnan(values).any():
            raise DataError("leading missing values cannot be forward-filled")

    index = pd.DatetimeIndex(stamps)
    if len(index) >= 2:
        deltas = index[1:] - index[:-1]
        step = pd.Timedelta(freq) if freq is not None else deltas[0]
        if step <= pd.Timedelta(0):
            raise DataError("timestamps must be strictly increasing")
        off = np.flatnonzero(deltas != step)
        if off.size:
            k = off[0]
            raise DataError(
                f"timestamp gap after {index[k]}: next instant {index[k + 1]}, expected {index[k] + step}"
            )
    else:
        step = pd.Timedelta(freq or "1h")
    raw = RawSeries(index, values, columns, list(targets), step)
    raw.column_index(raw.targets)
    return raw


def write_csv(series: RawSeries, path) -> None:
    series.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


# standardization ------------------------------------------------------------------


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, values):
        return (values - self.mean) / self.std

    def inverse(self, values, columns=None):
        if columns is None:
            return values * self.std + self.mean
        return values * self.std[columns] + self.mean[columns]


def standardize(values: np.ndarray, train_end: int) -> tuple[np.ndarray, Scaler]:
    """Per-channel z-score using statistics of rows [0, train_end) only."""
    if train_end < 1:
        raise DataError("standardization needs a non-empty training span")
    train = values[:train_end]
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    flat = np.flatnonzero(sd == 0)
    if flat.size:
        raise DataError(f"channel(s) {flat.tolist()} are constant over the training span")
    scaler = Scaler(mu, sd)
    return scaler.transform(values), scaler


# calendar features ---------------------------------------------------------------


def time_features(timestamps, freq=None) -> np.ndarray:
    """Month, day, weekday, hour (+ minute below hourly frequency), each mapped to [-0.5, 0.5]."""
    ts = pd.DatetimeIndex(timestamps)
    cols = [
        (ts.month.to_numpy() - 1) / 11.0,
        (ts.day.to_numpy() - 1) / 30.0,
        ts.dayofweek.to_numpy() / 6.0,
        ts.hour.to_numpy() / 23.0,
    ]
    if freq is not None and pd.Timedelta(freq) < pd.Timedelta("1h"):
        cols.append(ts.minute.to_numpy() / 59.0)
    return np.stack(cols, axis=1).astype(float) - 0.5


def feature_count(freq) -> int:
    return 5 if pd.Timedelta(freq) < pd.Timedelta("1h") else 4


# splits ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test extents, either in calendar months or as fractions of the rows."""

    train: float
    val: float
    test: float
    unit: str = "months"

    def boundaries(self, timestamps) -> tuple[int, int, int]:
        ts = pd.DatetimeIndex(timestamps)
        if self.unit == "months":
            start = ts[0]
            ends = []
            total = 0
            for months in (self.train, self.val, self.test):
                total += months
                if total != int(total):
                    raise DataError("month splits must be whole months")
                ends.append(int(np.searchsorted(ts, start + pd.DateOffset(months=int(total)), side="left")))
            return tuple(ends)
        if self.unit == "fraction":
            n = len(ts)
            train_end = int(round(n * self.train))
            val_end = train_end + int(round(n * self.val))
            if math.isclose(self.train + self.val + self.test, 1.0):
                return train_end, val_end, n
            return train_end, val_end, min(n, val_end + int(round(n * self.test)))
        raise DataError(f"unknown split unit {self.unit!r}")

    def spans(self, timestamps) -> dict[str, tuple[int, int]]:
        a, b, c = self.boundaries(timestamps)
        return {"train": (0, a), "val": (a, b), "test": (b, c)}


ETT_SPLIT = SplitSpec(12, 4, 4)
ECL_SPLIT = SplitSpec(15, 3, 4)


# windows ----------------------------------------------------------------------------


@dataclass
class Batch:
    x: np.ndarray
    y: np.ndarray
    x_future: np.ndarray
    y_future: np.ndarray
    marks_past: np.ndarray
    marks_future: np.ndarray

    def __len__(self) -> int:
        return self.y.shape[0]


def window_count(span: int, T: int, tau: int, stride: int = 1) -> int:
    if span < T + tau:
        return 0
    return (span - (T + tau)) // stride + 1


@dataclass
class WindowedDataset:
    """Sliding (x, y, x', y') windows over one split.

    Windows start at ``i * stride``. When ``pad_past`` / ``pad_fut`` are
    non-zero the past and future segments are left-padded by repeating their
    first row so lengths reach a multiple of ``2**I``.
    """

    values: np.ndarray  # standardized (L, C) restricted to the split
    marks: np.ndarray  # (L, F)
    target_idx: list[int]
    predictor_idx: list[int]
    future_idx: list[int]
    T: int
    tau: int
    stride: int = 1
    pad_past: int = 0
    pad_fut: int = 0
    offset: int = 0  # row of values[0] in the full series

    def __post_init__(self):
        self._starts = np.arange(window_count(len(self.values), self.T, self.tau, self.stride)) * self.stride

    def __len__(self) -> int:
        return len(self._starts)

    @property
    def starts(self) -> np.ndarray:
        return self._starts

    def row_ranges(self) -> list[tuple[int, int]]:
        return [(int(s) + self.offset, int(s) + self.offset + self.T + self.tau) for s in self._starts]

    def batch(self, indices) -> Batch:
        starts = self._starts[np.asarray(indices)]
        T, tau = self.T, self.tau
        past = np.stack([np.arange(s, s + T) for s in starts])
        fut = past[:, -1:] + 1 + np.arange(tau)[None, :]
        if self.pad_past:
            past = np.concatenate([np.repeat(past[:, :1], self.pad_past, axis=1), past], axis=1)
        if self.pad_fut:
            fut = np.concatenate([np.repeat(fut[:, :1], self.pad_fut, axis=1), fut], axis=1)
        v, m = self.values, self.marks
        return Batch(
            x=v[past][..., self.predictor_idx],
            y=v[past][..., self.target_idx],
            x_future=v[fut][..., self.future_idx],
            y_future=v[fut][..., self.target_idx],
            marks_past=m[past],
            marks_future=m[fut],
        )

    def batches(self, batch_size: int, rng: np.random.Generator | None = None):
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for i in range(0, len(order), batch_size):
            yield self.batch(order[i : i + batch_size])


@dataclass
class DatasetSplits:
    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset
    scaler: Scaler
    target_idx: list[int]
    predictor_idx: list[int]
    future_idx: list[int]
    time_features: int
    info: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return len(self.predictor_idx)

    @property
    def O(self) -> int:
        return len(self.target_idx)

    @property
    def M_future(self) -> int:
        return len(self.future_idx)

    @property
    def padded_T(self) -> int:
        return self.train.T + self.train.pad_past

    @property
    def padded_tau(self) -> int:
        return self.train.tau + self.train.pad_fut


def divisibility_pad(length: int, I: int) -> int:
    return (-length) % (2**I)


def make_windows(
    series: RawSeries,
    values: np.ndarray,
    split: SplitSpec,
    T: int,
    tau: int,
    stride: int = 1,
    targets=None,
    predictors=(),
    future_predictors=(),
    I: int = 0,
) -> dict[str, WindowedDataset]:
    """Windows per split over standardized ``values``; no window crosses a boundary."""
    targets = list(series.targets if targets is None else targets)
    target_idx = series.column_index(targets)
    predictor_idx = series.column_index(predictors)
    future_idx = series.column_index(future_predictors)
    marks = time_features(series.timestamps, series.freq)
    out = {}
    for name, (lo, hi) in split.spans(series.timestamps).items():
        if hi - lo < T + tau:
            raise EmptySplitError(f"{name} split has {hi - lo} rows, fewer than T + tau = {T + tau}")
        out[name] = WindowedDataset(
            values[lo:hi],
            marks[lo:hi],
            target_idx,
            predictor_idx,
            future_idx,
            T,
            tau,
            stride,
            divisibility_pad(T, I),
            divisibility_pad(tau, I),
            offset=lo,
        )
    return out


def prepare_dataset(
    series: RawSeries,
    split: SplitSpec,
    T: int,
    tau: int,
    setting: str = "univariate",
    I: int = 2,
    stride: int = 1,
    targets=None,
) -> DatasetSplits:
    """Standardize on the train span and window every split.

    univariate: the first target only, no predictors. multivariate: every column
    is a target unless ``targets`` narrows it, in which case the rest become past
    predictors. Future predictors are calendar features only.
    """
    if setting == "univariate":
        targets = [series.targets[0]] if targets is None else list(targets)[:1]
        predictors = []
    elif setting == "multivariate":
        targets = list(series.columns) if targets is None else list(targets)
        predictors = [c for c in series.columns if c not in targets]
    else:
        raise DataError(f"unknown setting {setting!r}")
    train_end = split.boundaries(series.timestamps)[0]
    values, scaler = standardize(series.values, train_end)
    windows = make_windows(series, values, split, T, tau, stride, targets, predictors, (), I)
    return DatasetSplits(
        windows["train"],
        windows["val"],
        windows["test"],
        scaler,
        windows["train"].target_idx,
        windows["train"].predictor_idx,
        [],
        feature_count(series.freq),
        info={"setting": setting, "targets": targets, "predictors": predictors},
    )


# synthetic series --------------------------------------------------------------------

SYNTH_KINDS = ("sum-of-sines", "trend+season", "random-walk")


def synth_series(
    kind: str,
    length: int,
    noise_sigma: float = 0.1,
    seed: int = 0,
    start: str = "2016-07-01 00:00:00",
    freq: str = "1h",
) -> RawSeries:
    """Deterministic synthetic target ``OT``.

    sum-of-sines: sin(2 pi t / 24) + 0.5 sin(2 pi t / 168) + noise
    trend+season: 0.002 t + sin(2 pi t / 24) + noise
    random-walk:  cumulative sum of N(0, noise_sigma) increments
    """
    if kind not in SYNTH_KINDS:
        raise DataError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=float)
    noise = rng.normal(0.0, noise_sigma, size=length) if noise_sigma > 0 else np.zeros(length)
    if kind == "sum-of-sines":
        values = np.sin(2 * np.pi * t / 24) + 0.5 * np.sin(2 * np.pi * t / 168) + noise
    elif kind == "trend+season":
        values = 0.002 * t + np.sin(2 * np.pi * t / 24) + noise
    else:
        values = np.cumsum(noise)
    stamps = pd.date_range(start=start, periods=length, freq=freq)
    return RawSeries(stamps, values[:, None], ["OT"], ["OT"], pd.Timedelta(freq))


# manifest ---------------------------------------------------------------------------

MANIFEST_ENV = "YFORMER_MANIFEST"


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    path: str
    freq: str
    target: str
    split: SplitSpec

    def load(self) -> RawSeries:
        return ingest_csv(self.path, targets=[self.target], freq=self.freq)


def load_manifest(path=None, name: str | None = None) -> DatasetManifest:
    """Read a JSON manifest (a single dataset object or ``{"datasets": [...]}``).

    Relative data paths resolve against the manifest's directory.
    """
    path = path or os.environ.get(MANIFEST_ENV)
    if not path:
        raise DataError(f"no manifest given and ${MANIFEST_ENV} is unset")
    doc = json.loads(Path(path).read_text())
    entries = doc.get("datasets", [doc])
    if name is not None:
        entries = [e for e in entries if e["name"] == name]
        if not entries:
            raise DataError(f"dataset {name!r} not in manifest {path}")
    e = entries[0]
    split = e.get("split", [12, 4, 4])
    split = SplitSpec(*split) if isinstance(split, list) else SplitSpec(**split)
    data_path = Path(e["path"])
    if not data_path.is_absolute():
        data_path = Path(path).parent / data_path
    return DatasetManifest(e["name"], str(data_path), e.get("freq", "1h"), e.get("target", "OT"), split)

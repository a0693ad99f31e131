import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yformer.data import (
    ECL_SPLIT,
    ETT_SPLIT,
    DataError,
    EmptySplitError,
    RawSeries,
    SplitSpec,
    WindowedDataset,
    divisibility_pad,
    feature_count,
    ingest_csv,
    load_manifest,
    make_windows,
    prepare_dataset,
    standardize,
    synth_series,
    time_features,
    window_count,
    write_csv,
)


def hourly_csv(path, rows, start="2016-07-01 00:00:00", freq="1h", columns=("HUFL", "OT"), seed=0):
    stamps = pd.date_range(start, periods=rows, freq=freq)
    rng = np.random.default_rng(seed)
    df = pd.DataFrame(rng.normal(size=(rows, len(columns))), columns=list(columns))
    df.insert(0, "date", stamps.strftime("%Y-%m-%d %H:%M:%S"))
    df.to_csv(path, index=False)
    return df


def enumerate_windows(span, T, tau, stride):
    return [s for s in range(0, span, stride) if s + T + tau <= span]


# ingestion


def test_ingest_well_formed(tmp_path):
    path = tmp_path / "s.csv"
    hourly_csv(path, 3)
    series = ingest_csv(path)
    assert len(series) == 3 and series.columns == ["HUFL", "OT"] and series.freq == pd.Timedelta("1h")


def test_ingest_gap_reports_first_gap(tmp_path):
    path = tmp_path / "s.csv"
    df = hourly_csv(path, 6)
    df.drop(index=3).to_csv(path, index=False)
    with pytest.raises(DataError, match="2016-07-01 02:00:00.*expected 2016-07-01 03:00:00"):
        ingest_csv(path)


def test_ingest_bad_cell_reports_row_and_column(tmp_path):
    path = tmp_path / "s.csv"
    df = hourly_csv(path, 5).astype({"OT": object})
    df.loc[2, "OT"] = "abc"
    df.to_csv(path, index=False)
    with pytest.raises(DataError, match=r"row 2, column 'OT'"):
        ingest_csv(path)


def test_ingest_bad_date(tmp_path):
    path = tmp_path / "s.csv"
    df = hourly_csv(path, 4)
    df.loc[1, "date"] = "yesterday"
    df.to_csv(path, index=False)
    with pytest.raises(DataError, match="row 1"):
        ingest_csv(path)


def test_ingest_missing_reject_or_ffill(tmp_path):
    path = tmp_path / "s.csv"
    df = hourly_csv(path, 4).astype({"OT": object})
    df.loc[2, "OT"] = ""
    df.to_csv(path, index=False)
    with pytest.raises(DataError, match="missing"):
        ingest_csv(path)
    series = ingest_csv(path, fill="ffill")
    assert series.values[2, 1] == series.values[1, 1]


def test_ingest_fifteen_minute_data(tmp_path):
    path = tmp_path / "m.csv"
    hourly_csv(path, 10, freq="15min")
    series = ingest_csv(path)
    assert series.freq == pd.Timedelta(minutes=15)
    assert feature_count(series.freq) == 5
    assert time_features(series.timestamps, series.freq).shape == (10, 5)


def test_ingest_unknown_target(tmp_path):
    path = tmp_path / "s.csv"
    hourly_csv(path, 3)
    with pytest.raises(DataError):
        ingest_csv(path, targets=["MT 320"])


def test_csv_round_trip_is_exact(tmp_path):
    series = synth_series("random-walk", 50, 0.3, seed=2)
    write_csv(series, tmp_path / "w.csv")
    back = ingest_csv(tmp_path / "w.csv")
    assert np.array_equal(back.values, series.values)
    assert back.timestamps.equals(series.timestamps)


# standardization


def test_standardize_train_statistics():
    rng = np.random.default_rng(0)
    values = rng.normal(3, 5, size=(200, 3))
    out, scaler = standardize(values, 120)
    assert np.abs(out[:120].mean(axis=0)).max() < 1e-10
    assert np.abs(out[:120].std(axis=0) - 1).max() < 1e-10
    assert np.abs(scaler.inverse(out) - values).max() < 1e-12


def test_standardize_ignores_later_rows():
    values = np.random.default_rng(1).normal(size=(100, 2))
    _, a = standardize(values, 60)
    mutated = values.copy()
    mutated[60:] = 1e6
    _, b = standardize(mutated, 60)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.std, b.std)


def test_standardize_constant_channel():
    values = np.ones((10, 2))
    values[:, 0] = np.arange(10)
    with pytest.raises(DataError, match=r"\[1\]"):
        standardize(values, 5)


# calendar features


def test_time_features_midnight_jan_first():
    feats = time_features(pd.DatetimeIndex(["2017-01-01 00:00:00"]))
    # 2017-01-01 is a Sunday (weekday 6), the only feature not at its minimum
    assert feats[0, :2].tolist() == [-0.5, -0.5] and feats[0, 3] == -0.5
    monday = time_features(pd.DatetimeIndex(["2018-01-01 00:00:00"]), "15min")
    assert monday.tolist() == [[-0.5] * 5]


def test_time_feature_counts_and_range():
    stamps = pd.date_range("2016-01-01", periods=24 * 400, freq="1h")
    feats = time_features(stamps, "1h")
    assert feats.shape[1] == 4
    assert feats.min() == -0.5 and feats.max() == 0.5


def test_weekday_period_seven_days():
    stamps = pd.date_range("2016-03-01", periods=24 * 30, freq="1h")
    wd = time_features(stamps)[:, 2]
    assert np.array_equal(wd[: -24 * 7], wd[24 * 7 :])
    assert not np.array_equal(wd[: -24], wd[24:])


# splits


def test_twenty_month_split_is_12_4_4():
    stamps = pd.date_range("2016-07-01", "2018-02-28 23:00:00", freq="1h")
    a, b, c = ETT_SPLIT.boundaries(stamps)
    assert a == len(pd.date_range("2016-07-01", "2017-06-30 23:00:00", freq="1h"))
    assert b - a == len(pd.date_range("2017-07-01", "2017-10-31 23:00:00", freq="1h"))
    assert c - b == len(pd.date_range("2017-11-01", "2018-02-28 23:00:00", freq="1h"))
    assert c == len(stamps)


def test_ecl_split_months():
    stamps = pd.date_range("2012-01-01", "2013-10-31 23:00:00", freq="1h")
    a, b, c = ECL_SPLIT.boundaries(stamps)
    assert stamps[a] == pd.Timestamp("2013-04-01") and stamps[b] == pd.Timestamp("2013-07-01") and c == len(stamps)


def test_fraction_split():
    stamps = pd.date_range("2016-07-01", periods=2000, freq="1h")
    assert SplitSpec(0.7, 0.1, 0.2, unit="fraction").boundaries(stamps) == (1400, 1600, 2000)


# windows


def test_window_count_examples():
    assert window_count(100, 48, 24) == 29 == len(enumerate_windows(100, 48, 24, 1))
    assert window_count(72, 48, 24) == 1
    assert window_count(71, 48, 24) == 0


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 120), st.integers(1, 40), st.integers(1, 40), st.integers(1, 7))
def test_window_count_matches_enumeration(span, T, tau, stride):
    assert window_count(span, T, tau, stride) == len(enumerate_windows(span, T, tau, stride))
    ds = WindowedDataset(np.zeros((span, 1)), np.zeros((span, 4)), [0], [], [], T, tau, stride)
    assert ds.starts.tolist() == enumerate_windows(span, T, tau, stride)


def _toy_series(rows=24 * 200):
    return synth_series("trend+season", rows, 0.0, seed=0, start="2016-07-01")


def test_windows_never_cross_split_boundaries():
    series = _toy_series()
    split = SplitSpec(0.6, 0.2, 0.2, unit="fraction")
    values, _ = standardize(series.values, split.boundaries(series.timestamps)[0])
    for stride in (1, 5):
        windows = make_windows(series, values, split, 48, 24, stride)
        spans = split.spans(series.timestamps)
        for name, ds in windows.items():
            lo, hi = spans[name]
            ranges = ds.row_ranges()
            assert len(ranges) == window_count(hi - lo, 48, 24, stride)
            assert all(lo <= a and b <= hi for a, b in ranges)


def test_split_mutation_does_not_leak():
    series = _toy_series()
    split = SplitSpec(0.6, 0.2, 0.2, unit="fraction")
    base = prepare_dataset(series, split, 48, 24)
    train_end = split.boundaries(series.timestamps)[0]
    mutated = RawSeries(series.timestamps, series.values.copy(), series.columns, series.targets, series.freq)
    mutated.values[train_end:] += 1e3 * np.random.default_rng(0).normal(size=mutated.values[train_end:].shape)
    other = prepare_dataset(mutated, split, 48, 24)
    assert np.array_equal(base.scaler.mean, other.scaler.mean)
    idx = np.arange(len(base.train))
    a, b = base.train.batch(idx), other.train.batch(idx)
    for field in ("x", "y", "x_future", "y_future", "marks_past", "marks_future"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    assert not np.array_equal(base.test.batch([0]).y, other.test.batch([0]).y)


def test_window_contents_align_with_series():
    series = _toy_series()
    split = SplitSpec(0.6, 0.2, 0.2, unit="fraction")
    data = prepare_dataset(series, split, 48, 24)
    values = data.scaler.transform(series.values)
    i = 7
    lo = data.val.offset + data.val.starts[i]
    batch = data.val.batch([i])
    assert np.array_equal(batch.y[0, :, 0], values[lo : lo + 48, 0])
    assert np.array_equal(batch.y_future[0, :, 0], values[lo + 48 : lo + 72, 0])
    assert batch.x.shape == (1, 48, 0) and batch.x_future.shape == (1, 24, 0)
    assert batch.marks_future.shape == (1, 24, 4)


def test_short_split_errors():
    series = _toy_series(24 * 10)
    with pytest.raises(EmptySplitError):
        prepare_dataset(series, SplitSpec(0.8, 0.1, 0.1, unit="fraction"), 48, 24)


def test_divisibility_padding_repeats_first_row():
    series = _toy_series()
    data = prepare_dataset(series, SplitSpec(0.6, 0.2, 0.2, unit="fraction"), 30, 20, I=2)
    assert divisibility_pad(30, 2) == 2 and divisibility_pad(20, 2) == 0
    assert (data.padded_T, data.padded_tau) == (32, 20)
    batch = data.train.batch([0, 3])
    assert batch.y.shape == (2, 32, 1)
    assert np.array_equal(batch.y[:, 0], batch.y[:, 2]) and np.array_equal(batch.y[:, 1], batch.y[:, 2])
    assert np.array_equal(batch.marks_past[:, 0], batch.marks_past[:, 2])


def test_multivariate_setting(tmp_path):
    path = tmp_path / "mv.csv"
    hourly_csv(path, 24 * 30, columns=("HUFL", "HULL", "OT"))
    series = ingest_csv(path)
    split = SplitSpec(0.6, 0.2, 0.2, unit="fraction")
    full = prepare_dataset(series, split, 24, 24, setting="multivariate")
    assert (full.M, full.O, full.M_future) == (0, 3, 0)
    narrowed = prepare_dataset(series, split, 24, 24, setting="multivariate", targets=["OT"])
    assert (narrowed.M, narrowed.O) == (2, 1)
    batch = narrowed.train.batch([0])
    assert batch.x.shape == (1, 24, 2) and batch.x_future.shape == (1, 24, 0)


# synthetic


def test_sum_of_sines_period():
    s = synth_series("sum-of-sines", 168 * 4, 0.0).values[:, 0]
    assert np.abs(s[:-168] - s[168:]).max() < 1e-12
    assert np.abs(s[:-24] - s[24:]).max() > 0.1


def test_synth_deterministic_per_seed():
    a, b = synth_series("trend+season", 500, 0.1, seed=3), synth_series("trend+season", 500, 0.1, seed=3)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, synth_series("trend+season", 500, 0.1, seed=4).values)


def test_random_walk_increment_std():
    s = synth_series("random-walk", 10_000, 0.3, seed=0).values[:, 0]
    assert abs(np.diff(s).std() / 0.3 - 1) < 0.1


def test_synth_unknown_kind():
    with pytest.raises(DataError):
        synth_series("chirp", 10)


# manifest


def test_manifest_resolves_relative_paths(tmp_path, monkeypatch):
    hourly_csv(tmp_path / "ett.csv", 24 * 600)
    manifest = tmp_path / "datasets.json"
    manifest.write_text(
        json.dumps(
            {"datasets": [{"name": "ETTh1", "path": "ett.csv", "freq": "1h", "target": "OT", "split": [12, 4, 4]}]}
        )
    )
    monkeypatch.setenv("YFORMER_MANIFEST", str(manifest))
    entry = load_manifest(name="ETTh1")
    assert entry.split == ETT_SPLIT
    assert len(entry.load()) == 24 * 600
    with pytest.raises(DataError):
        load_manifest(name="ECL")

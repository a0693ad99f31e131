import json
import math
from dataclasses import replace

import numpy as np
import pytest

from yformer.data import SplitSpec, prepare_dataset, synth_series
from yformer.harness.optim import Adam, EarlyStopping, early_stopping_trace
from yformer.harness.presets import PRESETS, find_presets, get_preset
from yformer.harness.training import (
    ExperimentRecord,
    TrainConfig,
    ablate,
    alpha_distribution,
    baseline_metrics,
    evaluate,
    grid_cells,
    grid_search,
    load_index,
    load_record,
    model_config_for,
    train,
)
from yformer.model import Yformer
from yformer.numerics import Tensor, square, tsum

SPLIT = SplitSpec(0.6, 0.2, 0.2, unit="fraction")
TINY = dict(d_model=8, n_heads=1, I=2, c=5.0)


def tiny_data(tau=8, T=16, I=2, length=500, kind="sum-of-sines"):
    return prepare_dataset(synth_series(kind, length, 0.1, seed=0), SPLIT, T, tau, I=I)


@pytest.fixture(scope="module")
def data():
    return tiny_data()


# optimizer


def test_adam_matches_reference_on_quadratic():
    a = np.array([3.0, 0.5])
    target = np.array([1.0, -2.0])
    p = Tensor(np.array([0.0, 0.0]), requires_grad=True)
    opt = Adam([p], lr=0.05, betas=(0.9, 0.999), eps=1e-8)
    x, m, v = np.zeros(2), np.zeros(2), np.zeros(2)
    for step in range(1, 101):
        opt.zero_grad()
        tsum(square(p - target) * a).backward()
        opt.step()
        g = 2 * a * (x - target)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g**2
        x = x - 0.05 * (m / (1 - 0.9**step)) / (np.sqrt(v / (1 - 0.999**step)) + 1e-8)
        assert np.abs(p.data - x).max() < 1e-10
    assert np.abs(p.data - target).max() < 0.1


def test_adam_weight_decay_is_decoupled():
    p = Tensor(np.array([2.0]), requires_grad=True)
    opt = Adam([p], lr=0.1, weight_decay=0.5)
    p.grad = np.zeros(1)
    opt.step()
    assert p.data[0] == pytest.approx(2.0 * (1 - 0.05), abs=1e-15)
    assert opt.m[0][0] == 0.0 and opt.v[0][0] == 0.0


def test_early_stopping_trace():
    assert early_stopping_trace([3, 2, 2.5, 2.6, 2.7], patience=3) == (5, 2)
    assert early_stopping_trace([3, 2, 1, 0.5], patience=3) == (4, 4)
    assert early_stopping_trace([1, 1, 1, 1, 0], patience=3) == (4, 1)  # ties are not improvements


def test_early_stopping_validates_patience():
    with pytest.raises(ValueError):
        EarlyStopping(0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)


def test_best_epoch_not_beaten_within_patience():
    rng = np.random.default_rng(0)
    for _ in range(200):
        losses = rng.uniform(0, 1, size=12).tolist()
        stop, best = early_stopping_trace(losses, 3)
        assert losses[best - 1] == min(losses[:stop])
        assert stop == len(losses) or stop - best == 3


# training


def test_zero_learning_rate_changes_nothing(data):
    model_cfg = model_config_for(data, **TINY)
    record = train(model_cfg, TrainConfig(learning_rate=0.0, max_epochs=3, patience=5), data)
    assert len(set(record.train_losses)) == 1
    assert len(set(record.val_losses)) == 1
    fresh = Yformer(model_cfg)
    assert evaluate(fresh, data.test) == (record.test_mse, record.test_mae)


def test_alpha_zero_loss_is_forecast_mse(data):
    model_cfg = model_config_for(data, alpha=0.7, alpha_zero=True, **TINY)
    record = train(model_cfg, TrainConfig(learning_rate=0.0, max_epochs=1), data)
    forecast_mse, _ = evaluate(Yformer(model_cfg), data.train)
    assert record.train_losses[0] == pytest.approx(forecast_mse, rel=1e-12)


def test_training_reduces_loss(data):
    record = train(model_config_for(data, **TINY), TrainConfig(learning_rate=1e-3, max_epochs=5, patience=5), data)
    assert len(record.train_losses) == 5
    assert record.train_losses[4] < record.train_losses[0]
    assert record.status == "ok" and math.isfinite(record.test_mse)


def test_weight_decay_shrinks_parameters(data, tmp_path):
    norms = []
    for wd in (0.0, 0.5):
        ck = tmp_path / f"wd{wd}.ckpt"
        train(
            model_config_for(data, **TINY),
            TrainConfig(learning_rate=1e-3, weight_decay=wd, max_epochs=2, patience=5),
            data,
            checkpoint=ck,
        )
        from yformer.checkpoint import load_checkpoint

        model, _ = load_checkpoint(ck)
        norms.append(math.sqrt(sum(float(np.sum(p.data**2)) for p in model.parameters())))
    assert norms[1] < norms[0]


def test_identical_runs_identical_records(data):
    cfg, tc = model_config_for(data, c=1.0, **{k: v for k, v in TINY.items() if k != "c"}), TrainConfig(
        learning_rate=1e-3, max_epochs=2
    )
    a, b = train(cfg, tc, data), train(cfg, tc, data)
    assert a.comparable() == b.comparable()


def test_divergence_is_recorded(tmp_path):
    data = tiny_data()
    data.train.values[:] = np.nan
    record = train(model_config_for(data, **TINY), TrainConfig(max_epochs=2), data, results_dir=tmp_path)
    assert record.status == "diverged"
    assert "non-finite" in record.message
    assert load_record(tmp_path / "runs" / f"{record.run_id}.jsonl").status == "diverged"


def test_empty_split_rejected(data):
    broken = replace(data, val=replace(data.val, values=data.val.values[:3], marks=data.val.marks[:3]))
    with pytest.raises(ValueError):
        train(model_config_for(data, **TINY), TrainConfig(max_epochs=1), broken)


def test_padding_is_trimmed_before_loss():
    data = tiny_data(T=14, tau=6)
    assert (data.padded_T, data.padded_tau) == (16, 8)
    record = train(model_config_for(data, **TINY), TrainConfig(learning_rate=1e-3, max_epochs=1), data)
    assert record.horizon == 6 and math.isfinite(record.test_mse)


def test_baselines(data):
    last, _ = baseline_metrics(data.test, "repeat-last")
    mean, _ = baseline_metrics(data.test, "train-mean")
    assert last > 0 and mean > 0
    with pytest.raises(ValueError):
        baseline_metrics(data.test, "oracle")


# persistence


def test_record_round_trip_bit_identical(data, tmp_path):
    record = train(model_config_for(data, **TINY), TrainConfig(learning_rate=1e-3, max_epochs=2), data, results_dir=tmp_path)
    loaded = load_record(tmp_path / "runs" / f"{record.run_id}.jsonl")
    assert loaded == record
    assert ExperimentRecord.from_json(record.to_json()) == record
    lines = (tmp_path / "runs" / f"{record.run_id}.jsonl").read_text().splitlines()
    epochs = [json.loads(l) for l in lines[:-1]]
    assert [e["train_loss"] for e in epochs] == record.train_losses
    index = load_index(tmp_path)
    assert index[-1]["run_id"] == record.run_id and index[-1]["test_mse"] == record.test_mse


def test_record_carries_snapshot(data):
    record = train(model_config_for(data, **TINY), TrainConfig(max_epochs=1), data)
    assert record.model_config["d_model"] == 8 and record.train_config["max_epochs"] == 1
    assert record.parameter_count == Yformer(model_config_for(data, **TINY)).num_parameters()
    assert record.version.startswith("0.1.0") and record.wall_time > 0


# grid search


def test_grid_cells_product():
    assert len(grid_cells({"learning_rate": [1e-3], "alpha": [0.7]})) == 1
    assert len(grid_cells({"learning_rate": [1e-3, 1e-4], "alpha": [0.3, 0.7]})) == 4
    with pytest.raises(ValueError):
        grid_cells({"alpha": []})


def test_grid_search(data, tmp_path):
    tc = TrainConfig(max_epochs=1)
    best, records = grid_search(data, {"learning_rate": [1e-3]}, TINY, tc, results_dir=tmp_path)
    assert len(records) == 1 and best is records[0]
    best, records = grid_search(
        data, {"learning_rate": [1e-3, 1e-4], "alpha": [0.3, 0.7]}, TINY, tc, results_dir=tmp_path
    )
    assert len(records) == 4
    assert best.best_val_loss == min(r.best_val_loss for r in records)
    assert {(r.train_config["learning_rate"], r.model_config["alpha"]) for r in records} == {
        (1e-3, 0.3), (1e-3, 0.7), (1e-4, 0.3), (1e-4, 0.7)
    }
    assert len(load_index(tmp_path)) == 5


def test_grid_over_depth_rebuilds_padding():
    calls = []

    def data_for(I):
        calls.append(I)
        return tiny_data(T=12, tau=6, I=I)

    _, records = grid_search(data_for, {"I": [2, 3]}, {"d_model": 8, "n_heads": 1}, TrainConfig(max_epochs=1))
    assert calls == [2, 3]
    assert [(r.model_config["T"], r.model_config["tau"]) for r in records] == [(12, 8), (16, 8)]


def test_grid_parallel_matches_serial(data):
    grid = {"alpha": [0.3, 0.7]}
    tc = TrainConfig(learning_rate=1e-3, max_epochs=1)
    _, serial = grid_search(data, grid, TINY, tc)
    _, parallel = grid_search(data, grid, TINY, tc, jobs=2)
    assert [r.comparable() for r in serial] == [r.comparable() for r in parallel]


def test_grid_rejects_unknown_axis(data):
    with pytest.raises(ValueError):
        grid_search(data, {"dropout": [0.1]}, TINY, TrainConfig(max_epochs=1))


# ablation


def test_ablation_table(tmp_path):
    rows, records = ablate(lambda tau: tiny_data(tau=tau), [8, 16], TINY, TrainConfig(max_epochs=1), results_dir=tmp_path)
    assert len(rows) == 6
    assert [(r["variant"], r["horizon"]) for r in rows] == [
        (v, h) for h in (8, 16) for v in ("Yformer", "Yformer (alpha=0)", "Yformer*")
    ]
    for h in (8, 16):
        counts = {r["variant"]: r["parameter_count"] for r in rows if r["horizon"] == h}
        assert counts["Yformer*"] == counts["Yformer"] == counts["Yformer (alpha=0)"]
    by_variant = {r.variant: r for r in records[:3]}
    assert by_variant["Yformer*"].model_config["disable_skips"]
    assert by_variant["Yformer (alpha=0)"].model_config["alpha_zero"]
    header = (tmp_path / "ablation.csv").read_text().splitlines()[0]
    assert header == "variant,horizon,mse,mae"


def test_alpha_distribution():
    def rec(h, alpha, zero=False):
        return ExperimentRecord("r", "Yformer", "d", h, {"alpha": alpha, "alpha_zero": zero}, {})

    assert alpha_distribution([rec(24, 0.7)]) == {24: {0.7: 1}}
    records = [rec(24, 0.7), rec(24, 0.7), rec(24, 0.3), rec(48, 0.5, zero=True), rec(48, 1.0)]
    hist = alpha_distribution(records)
    assert hist == {24: {0.3: 1, 0.7: 2}, 48: {0.0: 1, 1.0: 1}}
    assert sum(sum(c.values()) for c in hist.values()) == len(records)


# presets


def test_preset_table_shape():
    assert len(PRESETS) == 40
    assert len(find_presets(setting="univariate")) == 20
    assert {p.dataset for p in PRESETS} == {"ETTh1", "ETTh2", "ETTm1", "ECL"}


@pytest.mark.parametrize(
    "dataset,horizon,setting,expected",
    [
        ("ETTh1", 24, "univariate", (720, 0.0, 0.0001, 0.7, 32, 2)),
        ("ETTh2", 168, "univariate", (336, 0.02, 0.001, 0.3, 32, 2)),
        ("ETTm1", 288, "univariate", (384, 0.02, 0.001, 0.7, 16, 2)),
        ("ECL", 960, "univariate", (48, 0.0, 0.0001, 0.5, 16, 4)),
        ("ETTh1", 720, "multivariate", (336, 0.05, 0.0001, 1.0, 16, 2)),
        ("ETTm1", 24, "multivariate", (672, 0.0, 0.0001, 0.7, 32, 2)),
        ("ECL", 48, "multivariate", (24, 0.0, 0.0001, 0.7, 16, 3)),
    ],
)
def test_preset_values(dataset, horizon, setting, expected):
    p = get_preset(dataset, horizon, setting)
    assert (p.history, p.weight_decay, p.learning_rate, p.alpha, p.batch_size, p.encoder_blocks) == expected


def test_unknown_preset():
    with pytest.raises(KeyError):
        get_preset("ETTh1", 25, "univariate")

"""Training loop, evaluation, grid search, ablations and result persistence."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import subprocess
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..checkpoint import save_checkpoint
from ..data import DatasetSplits, WindowedDataset
from ..model import ForecastOutput, ModelConfig, Yformer, loss, metrics
from ..numerics import NonFiniteError, slice_time
from .optim import Adam, EarlyStopping

log = logging.getLogger(__name__)

DEFAULT_GRID = {
    "learning_rate": [1e-3, 1e-4],
    "weight_decay": [0.0, 0.02, 0.05],
    "alpha": [0.0, 0.3, 0.5, 0.7, 1.0],
    "I": [2, 3, 4],
}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 3
    seed: int = 0
    destandardize: bool = False
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError(f"invalid training config {self}")


@dataclass
class ExperimentRecord:
    run_id: str
    variant: str
    dataset: str
    horizon: int
    model_config: dict
    train_config: dict
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    test_mse: float = float("nan")
    test_mae: float = float("nan")
    parameter_count: int = 0
    wall_time: float = 0.0
    version: str = ""
    status: str = "ok"
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ExperimentRecord":
        return cls.from_dict(json.loads(line))

    def comparable(self) -> dict:
        """Everything except wall time."""
        d = self.to_dict()
        d.pop("wall_time")
        return d


def version_stamp() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).resolve().parent,
            timeout=5,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+{rev}" if rev else __version__


def model_config_for(data: DatasetSplits, **kwargs) -> ModelConfig:
    """ModelConfig whose lengths and channel counts match ``data`` (after padding)."""
    return ModelConfig(
        T=data.padded_T,
        tau=data.padded_tau,
        M=data.M,
        O=data.O,
        M_future=data.M_future,
        time_features=data.time_features,
        **kwargs,
    )


def _trim(out: ForecastOutput, ds: WindowedDataset) -> ForecastOutput:
    if not (ds.pad_past or ds.pad_fut):
        return out
    past, fut = out.y_hat_past, out.y_hat_fut
    return ForecastOutput(
        slice_time(past, ds.pad_past, past.shape[1]), slice_time(fut, ds.pad_fut, fut.shape[1])
    )


def _batch_loss(model: Yformer, batch, ds: WindowedDataset, alpha: float):
    out = _trim(model.forward_batch(batch), ds)
    y = batch.y[:, ds.pad_past :]
    y_fut = batch.y_future[:, ds.pad_fut :]
    return loss(out, y, y_fut, alpha)


def evaluate(model: Yformer, ds: WindowedDataset, batch_size: int = 256, scaler=None) -> tuple[float, float]:
    """Forecast (MSE, MAE) over every window of ``ds``."""
    sq = ab = 0.0
    count = 0
    for batch in ds.batches(batch_size):
        pred = _trim(model.forward_batch(batch), ds).y_hat_fut.data
        truth = batch.y_future[:, ds.pad_fut :]
        if scaler is not None:
            pred = scaler.inverse(pred, ds.target_idx)
            truth = scaler.inverse(truth, ds.target_idx)
        mse, mae = metrics(truth, pred)
        sq += mse * truth.size
        ab += mae * truth.size
        count += truth.size
    return sq / count, ab / count


def baseline_metrics(ds: WindowedDataset, kind: str) -> tuple[float, float]:
    """Naive forecasts on the standardized scale: "repeat-last" or "train-mean" (zero)."""
    sq = ab = 0.0
    count = 0
    for batch in ds.batches(1024):
        truth = batch.y_future[:, ds.pad_fut :]
        if kind == "repeat-last":
            pred = np.broadcast_to(batch.y[:, -1:], truth.shape)
        elif kind == "train-mean":
            pred = np.zeros_like(truth)
        else:
            raise ValueError(f"unknown baseline {kind!r}")
        mse, mae = metrics(truth, pred)
        sq += mse * truth.size
        ab += mae * truth.size
        count += truth.size
    return sq / count, ab / count


def run_id_for(variant: str, dataset: str, horizon: int, model_cfg: ModelConfig, train_cfg: TrainConfig) -> str:
    blob = json.dumps([model_cfg.to_dict(), asdict(train_cfg)], sort_keys=True).encode()
    slug = "".join(ch if ch.isalnum() else "_" for ch in variant.lower()).strip("_")
    return f"{slug}-{dataset}-h{horizon}-{hashlib.sha1(blob).hexdigest()[:10]}"


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    data: DatasetSplits,
    variant: str = "Yformer",
    dataset: str = "synthetic",
    results_dir=None,
    checkpoint=None,
    checkpoint_extra: dict | None = None,
) -> ExperimentRecord:
    """Fit on the train split with early stopping on validation forecast MSE.

    The best-validation parameters are restored before the test evaluation.
    """
    if min(len(data.train), len(data.val), len(data.test)) == 0:
        raise ValueError("every split needs at least one window")
    start = time.perf_counter()
    model = Yformer(model_cfg)
    opt = Adam(model.parameters(), lr=train_cfg.learning_rate, weight_decay=train_cfg.weight_decay)
    stopper = EarlyStopping(train_cfg.patience)
    alpha = model_cfg.effective_alpha
    record = ExperimentRecord(
        run_id=run_id_for(variant, dataset, data.test.tau, model_cfg, train_cfg),
        variant=variant,
        dataset=dataset,
        horizon=data.test.tau,
        model_config=model_cfg.to_dict(),
        train_config=asdict(train_cfg),
        parameter_count=model.num_parameters(),
        version=version_stamp(),
    )
    best_state = model.state_dict()

    for epoch in range(1, train_cfg.max_epochs + 1):
        rng = np.random.default_rng([train_cfg.seed, epoch])
        total = 0.0
        seen = 0
        for batch in data.train.batches(train_cfg.batch_size, rng):
            try:
                value = _batch_loss(model, batch, data.train, alpha)
                finite = bool(np.isfinite(value.data).all())
            except NonFiniteError:
                finite = False
            if not finite:
                record.status = "diverged"
                record.message = f"non-finite training loss at epoch {epoch} after {seen} windows"
                break
            opt.zero_grad()
            value.backward()
            opt.step()
            total += value.item() * len(batch)
            seen += len(batch)
        if record.status == "ok" and not all(np.isfinite(p.data).all() for p in model.parameters()):
            record.status = "diverged"
            record.message = f"non-finite parameters after epoch {epoch}"
        if record.status == "diverged":
            break
        val_mse, _ = evaluate(model, data.val, train_cfg.eval_batch_size)
        record.train_losses.append(total / seen)
        record.val_losses.append(val_mse)
        log.info("epoch %d train %.6f val %.6f", epoch, total / seen, val_mse)
        if stopper.update(val_mse):
            best_state = model.state_dict()
        if stopper.should_stop:
            break

    model.load_state_dict(best_state)
    record.best_epoch = stopper.best_epoch
    record.best_val_loss = stopper.best_loss
    if record.status == "ok":
        scaler = data.scaler if train_cfg.destandardize else None
        record.test_mse, record.test_mae = evaluate(model, data.test, train_cfg.eval_batch_size, scaler)
    record.wall_time = time.perf_counter() - start
    if checkpoint is not None:
        extra = {"run_id": record.run_id, "data": data.info, **(checkpoint_extra or {})}
        save_checkpoint(checkpoint, model, extra=extra)
    if results_dir is not None:
        save_record(record, results_dir)
    return record


# persistence ---------------------------------------------------------------------


def save_record(record: ExperimentRecord, results_dir) -> Path:
    """Write runs/<run_id>.jsonl (one line per epoch, then the record) and append to index.jsonl."""
    root = Path(results_dir)
    (root / "runs").mkdir(parents=True, exist_ok=True)
    path = root / "runs" / f"{record.run_id}.jsonl"
    with open(path, "w") as fh:
        for i, (tr, va) in enumerate(zip(record.train_losses, record.val_losses), start=1):
            fh.write(json.dumps({"type": "epoch", "epoch": i, "train_loss": tr, "val_loss": va}) + "\n")
        fh.write(json.dumps({"type": "record", **record.to_dict()}, sort_keys=True) + "\n")
    entry = {
        "run_id": record.run_id,
        "variant": record.variant,
        "dataset": record.dataset,
        "horizon": record.horizon,
        "best_val_loss": record.best_val_loss,
        "test_mse": record.test_mse,
        "test_mae": record.test_mae,
        "file": str(path.relative_to(root)),
    }
    with open(root / "index.jsonl", "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return path


def load_record(path) -> ExperimentRecord:
    for line in reversed(Path(path).read_text().splitlines()):
        doc = json.loads(line)
        if doc.pop("type", None) == "record":
            return ExperimentRecord.from_dict(doc)
    raise ValueError(f"{path} holds no record line")


def load_index(results_dir) -> list[dict]:
    path = Path(results_dir) / "index.jsonl"
    return [json.loads(line) for line in path.read_text().splitlines()] if path.exists() else []


def write_table(rows: list[dict], path, columns=("variant", "horizon", "mse", "mae")) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# grid search -------------------------------------------------------------------------


def grid_cells(grid: dict) -> list[dict]:
    keys = sorted(grid)
    if any(len(grid[k]) == 0 for k in keys):
        raise ValueError("grid axes must be non-empty")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


_MODEL_KEYS = {"alpha", "I", "d_model", "n_heads", "c", "disable_skips"}
_TRAIN_KEYS = {"learning_rate", "weight_decay", "batch_size"}


def _cell_configs(cell: dict, model_kwargs: dict, train_cfg: TrainConfig, data: DatasetSplits):
    unknown = set(cell) - _MODEL_KEYS - _TRAIN_KEYS
    if unknown:
        raise ValueError(f"unsupported grid axes {sorted(unknown)}")
    mk = {**model_kwargs, **{k: v for k, v in cell.items() if k in _MODEL_KEYS}}
    tk = {k: v for k, v in cell.items() if k in _TRAIN_KEYS}
    return model_config_for(data, **mk), replace(train_cfg, **tk)


def _run_cell(args):
    model_cfg, train_cfg, data, variant, dataset, results_dir = args
    return train(model_cfg, train_cfg, data, variant=variant, dataset=dataset, results_dir=results_dir)


def grid_search(
    data_for,
    grid: dict,
    model_kwargs: dict | None = None,
    train_cfg: TrainConfig = TrainConfig(),
    dataset: str = "synthetic",
    variant: str = "Yformer",
    results_dir=None,
    jobs: int = 1,
) -> tuple[ExperimentRecord, list[ExperimentRecord]]:
    """Exhaustive search; the best record has the lowest validation loss.

    ``data_for`` is a DatasetSplits or a callable ``I -> DatasetSplits`` (the
    divisibility padding depends on the depth).
    """
    model_kwargs = dict(model_kwargs or {})
    cache: dict[int, DatasetSplits] = {}

    def splits(I):
        if not callable(data_for):
            return data_for
        if I not in cache:
            cache[I] = data_for(I)
        return cache[I]

    jobs_args = []
    for cell in grid_cells(grid):
        depth = cell.get("I", model_kwargs.get("I", 2))
        data = splits(depth)
        model_cfg, cell_train = _cell_configs(cell, model_kwargs, train_cfg, data)
        jobs_args.append((model_cfg, cell_train, data, variant, dataset, results_dir))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell, jobs_args))
    else:
        records = [_run_cell(a) for a in jobs_args]
    best = min(records, key=lambda r: r.best_val_loss)
    return best, records


# ablation --------------------------------------------------------------------------

ABLATION_VARIANTS = ("Yformer", "Yformer (alpha=0)", "Yformer*")


def ablate(
    data_for_horizon,
    horizons,
    model_kwargs: dict | None = None,
    train_cfg: TrainConfig = TrainConfig(),
    dataset: str = "synthetic",
    results_dir=None,
) -> tuple[list[dict], list[ExperimentRecord]]:
    """Full model, no reconstruction loss, and no skip connections, per horizon.

    Returns flat rows (variant, horizon, mse, mae, parameter_count) and the records.
    """
    model_kwargs = dict(model_kwargs or {})
    rows, records = [], []
    for horizon in horizons:
        data = data_for_horizon(horizon)
        base = model_config_for(data, **model_kwargs)
        variants = {
            "Yformer": base,
            "Yformer (alpha=0)": base.with_(alpha_zero=True),
            "Yformer*": base.with_(disable_skips=True),
        }
        for name, cfg in variants.items():
            rec = train(cfg, train_cfg, data, variant=name, dataset=dataset, results_dir=results_dir)
            records.append(rec)
            rows.append(
                {
                    "variant": name,
                    "horizon": horizon,
                    "mse": rec.test_mse,
                    "mae": rec.test_mae,
                    "parameter_count": rec.parameter_count,
                }
            )
    if results_dir is not None:
        write_table(rows, Path(results_dir) / "ablation.csv")
    return rows, records


def alpha_distribution(records) -> dict[int, dict[float, int]]:
    """Per-horizon counts of the reconstruction factor used by each (winning) record."""
    hist: dict[int, Counter] = defaultdict(Counter)
    for rec in records:
        cfg = rec.model_config
        alpha = 0.0 if cfg.get("alpha_zero") else cfg["alpha"]
        hist[rec.horizon][alpha] += 1
    return {h: dict(sorted(c.items())) for h, c in sorted(hist.items())}

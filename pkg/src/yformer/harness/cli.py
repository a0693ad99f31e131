"""Command line: ``yformer {train,grid,ablate,gradcheck,synth,eval,presets}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..checkpoint import load_checkpoint
from ..data import (
    ETT_SPLIT,
    SYNTH_KINDS,
    DataError,
    SplitSpec,
    ingest_csv,
    load_manifest,
    prepare_dataset,
    synth_series,
    write_csv,
)
from .presets import find_presets, get_preset
from .training import (
    DEFAULT_GRID,
    TrainConfig,
    ablate,
    alpha_distribution,
    evaluate,
    grid_search,
    load_index,
    model_config_for,
    train,
    write_table,
)

SYNTH_SPLIT = SplitSpec(0.7, 0.1, 0.2, unit="fraction")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _add_data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--synth", choices=SYNTH_KINDS, default=None, help="train on a synthetic series")
    g.add_argument("--length", type=int, default=2000)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--data-seed", type=int, default=0)
    g.add_argument("--csv", type=Path, help="CSV with a 'date' column (12/4/4 month split)")
    g.add_argument("--manifest", help="dataset manifest (default: $YFORMER_MANIFEST)")
    g.add_argument("--dataset", help="dataset name inside the manifest; also the preset key")
    g.add_argument("--target", default="OT")
    g.add_argument("--setting", choices=("univariate", "multivariate"), default="univariate")
    g.add_argument("--history", "-T", type=int, default=48, dest="T")
    g.add_argument("--horizon", "--tau", type=int, default=24, dest="tau")
    g.add_argument("--stride", type=int, default=1)


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model / optimizer")
    g.add_argument("--d-model", type=int, default=32)
    g.add_argument("--heads", type=int, default=1)
    g.add_argument("--blocks", "-I", type=int, default=2, dest="I")
    g.add_argument("--factor", type=float, default=5.0, dest="c")
    g.add_argument("--alpha", type=float, default=0.7)
    g.add_argument("--lr", type=float, default=1e-4)
    g.add_argument("--weight-decay", type=float, default=0.0)
    g.add_argument("--batch-size", type=int, default=32)
    g.add_argument("--max-epochs", type=int, default=20)
    g.add_argument("--patience", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--destandardize", action="store_true", help="report metrics in original units")
    g.add_argument("--preset", action="store_true", help="take T, lr, wd, alpha, batch, I from the preset table")
    g.add_argument("--results", type=Path, default=Path("results"))


def _source(args) -> dict:
    return {
        "synth": args.synth,
        "length": args.length,
        "noise": args.noise,
        "data_seed": args.data_seed,
        "csv": str(args.csv) if args.csv else None,
        "manifest": args.manifest,
        "dataset": args.dataset,
        "target": args.target,
        "setting": args.setting,
        "stride": args.stride,
    }


def _dataset_name(src: dict) -> str:
    if src["synth"]:
        return f"synth-{src['synth']}"
    if src["dataset"]:
        return src["dataset"]
    return Path(src["csv"]).stem if src["csv"] else "synth-sum-of-sines"


def load_splits(src: dict, T: int, tau: int, I: int):
    if src.get("csv"):
        series = ingest_csv(src["csv"], targets=[src["target"]])
        split = ETT_SPLIT
    elif src.get("manifest") or (src.get("dataset") and not src.get("synth")):
        manifest = load_manifest(src.get("manifest"), src.get("dataset"))
        series, split = manifest.load(), manifest.split
    else:
        kind = src.get("synth") or "sum-of-sines"
        series = synth_series(kind, src["length"], src["noise"], seed=src["data_seed"])
        split = SYNTH_SPLIT
    return prepare_dataset(series, split, T, tau, setting=src["setting"], I=I, stride=src.get("stride", 1))


def _apply_preset(args) -> None:
    if not args.preset:
        return
    if not args.dataset:
        raise SystemExit("--preset needs --dataset")
    p = get_preset(args.dataset, args.tau, args.setting)
    args.T, args.lr, args.weight_decay = p.history, p.learning_rate, p.weight_decay
    args.alpha, args.batch_size, args.I = p.alpha, p.batch_size, p.encoder_blocks


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
        destandardize=args.destandardize,
    )


def _model_kwargs(args) -> dict:
    return {"d_model": args.d_model, "n_heads": args.heads, "I": args.I, "c": args.c, "alpha": args.alpha, "seed": args.seed}


def _refresh_table(results: Path) -> None:
    rows = [
        {"variant": e["variant"], "horizon": e["horizon"], "mse": e["test_mse"], "mae": e["test_mae"]}
        for e in load_index(results)
    ]
    write_table(rows, results / "table.csv")


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def cmd_train(args) -> int:
    _apply_preset(args)
    src = _source(args)
    data = load_splits(src, args.T, args.tau, args.I)
    model_cfg = model_config_for(data, **_model_kwargs(args))
    checkpoint = args.checkpoint
    if checkpoint is not None:
        checkpoint.parent.mkdir(parents=True, exist_ok=True)
    record = train(
        model_cfg,
        _train_cfg(args),
        data,
        variant=args.variant,
        dataset=_dataset_name(src),
        results_dir=args.results,
        checkpoint=checkpoint,
        checkpoint_extra={"source": src, "T": args.T, "tau": args.tau},
    )
    _refresh_table(args.results)
    _emit({"type": "record", **record.to_dict()})
    return 0 if record.status == "ok" else 2


def cmd_grid(args) -> int:
    src = _source(args)
    grid = {
        "learning_rate": args.lrs,
        "weight_decay": args.weight_decays,
        "alpha": args.alphas,
        "I": args.depths,
    }
    kwargs = _model_kwargs(args)
    kwargs.pop("I")
    best, records = grid_search(
        lambda I: load_splits(src, args.T, args.tau, I),
        grid,
        model_kwargs=kwargs,
        train_cfg=_train_cfg(args),
        dataset=_dataset_name(src),
        results_dir=args.results,
        jobs=args.jobs,
    )
    for r in records:
        _emit({"type": "record", **r.to_dict()})
    _emit({"type": "best", "run_id": best.run_id, "best_val_loss": best.best_val_loss})
    _emit({"type": "alpha_distribution", "counts": {str(h): c for h, c in alpha_distribution([best]).items()}})
    _refresh_table(args.results)
    return 0


def cmd_ablate(args) -> int:
    src = _source(args)
    rows, records = ablate(
        lambda tau: load_splits(src, args.T, tau, args.I),
        args.horizons,
        model_kwargs=_model_kwargs(args),
        train_cfg=_train_cfg(args),
        dataset=_dataset_name(src),
        results_dir=args.results,
    )
    for row in rows:
        _emit({"type": "ablation", **row})
    _refresh_table(args.results)
    return 0


def cmd_gradcheck(args) -> int:
    from ..gradcheck import TOLERANCE, run_suites

    results = run_suites(args.suite or None, instances=args.instances, seed=args.seed)
    for r in results:
        _emit(
            {
                "type": "gradcheck",
                "case": r.name,
                "instances": r.instances,
                "max_rel_error": r.max_rel_error,
                "tolerance": TOLERANCE,
                "seconds": round(r.seconds, 3),
                "passed": r.passed,
                "failures": r.failures,
            }
        )
    return 0 if all(r.passed for r in results) else 1


def cmd_synth(args) -> int:
    series = synth_series(args.kind, args.length, args.noise, seed=args.seed, freq=args.freq)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(series, args.out)
    _emit({"type": "synth", "path": str(args.out), "kind": args.kind, "rows": len(series)})
    return 0


def cmd_eval(args) -> int:
    model, extra = load_checkpoint(args.checkpoint)
    explicit = args.synth or args.csv or args.manifest or args.dataset
    src = _source(args) if explicit or "source" not in extra else extra["source"]
    cfg = model.cfg
    data = load_splits(src, extra.get("T", args.T), extra.get("tau", args.tau), cfg.I)
    if (data.padded_T, data.padded_tau) != (cfg.T, cfg.tau):
        raise DataError(f"checkpoint expects T={cfg.T}, tau={cfg.tau}; data gives {data.padded_T}, {data.padded_tau}")
    split = getattr(data, args.split)
    mse, mae = evaluate(model, split, scaler=data.scaler if args.destandardize else None)
    _emit({"type": "eval", "checkpoint": str(args.checkpoint), "split": args.split, "mse": mse, "mae": mae})
    return 0


def cmd_presets(args) -> int:
    found = find_presets(args.dataset, args.horizon, args.setting)
    for p in found:
        _emit({"type": "preset", **p.to_dict()})
    return 0 if found else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yformer", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--variant", default="Yformer")
    p.add_argument("--checkpoint", type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="exhaustive hyperparameter grid")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--lrs", type=_floats, default=DEFAULT_GRID["learning_rate"])
    p.add_argument("--weight-decays", type=_floats, default=DEFAULT_GRID["weight_decay"])
    p.add_argument("--alphas", type=_floats, default=DEFAULT_GRID["alpha"])
    p.add_argument("--depths", type=_ints, default=DEFAULT_GRID["I"])
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("ablate", help="Yformer vs alpha=0 vs no-skip, per horizon")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--horizons", type=_ints, default=[24, 48])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--suite", action="append", choices=("numerics", "attention", "blocks"))
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a synthetic series as CSV")
    p.add_argument("--kind", choices=SYNTH_KINDS, default="sum-of-sines")
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--freq", default="1h")
    p.add_argument("--out", type=Path, default=Path("synth.csv"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="metrics of a saved checkpoint")
    _add_data_args(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--destandardize", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("presets", help="list tuned hyperparameters")
    p.add_argument("--dataset")
    p.add_argument("--horizon", type=int)
    p.add_argument("--setting", choices=("univariate", "multivariate"))
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (DataError, KeyError, ValueError, FileNotFoundError) as exc:
        print(f"yformer {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

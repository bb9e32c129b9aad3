"""Command-line entry point.

Subcommands: pca-report, train, eval, sweep, baseline. Configuration is a
JSON file merged over built-in defaults, with dotted flag overrides such as
`--train.learning-rate 0.05` or `--model.n-vqcs=3`. Exit codes: 0 success,
1 configuration error, 2 data error, 3 numerical failure.

All artifacts are timestamp-free CSV/JSON with stable key ordering, so a
rerun with the same config and seed is byte-identical. The output directory
comes from the config (`output_dir`) unless MULTIVQC_OUTPUT_DIR is set.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .baseline import fit_logreg, logreg_split_metrics
from .datasets import DATASET_NAMES, resolve_dataset
from .errors import (
    ConfigError,
    DataError,
    MultiVqcError,
    NumericalError,
    PipelineStateError,
)
from .metrics import evaluate
from .model import (
    MultiVqcConfig,
    MultiVqcModel,
    Rescale,
    load_model,
    save_model,
)
from .pipeline import (
    ANGLE_RANGES,
    Dataset,
    MinMaxScaler,
    Pipeline,
    SplitDataset,
    explained_variance_table,
    load_csv,
    load_schema,
    split,
)
from .training import (
    SweepRow,
    TrainConfig,
    build_grid,
    compute_class_weights,
    rank_rows,
    run_cells,
    sweep_row_from_json,
    sweep_row_record,
    sweep_rows_to_json_dict,
    SWEEP_CSV_COLUMNS,
    train,
    train_report_to_json_dict,
)

OUTPUT_DIR_ENV = "MULTIVQC_OUTPUT_DIR"

DEFAULT_CONFIG: dict = {
    "dataset": "prostate",
    "schema": None,
    "n_components": 3,
    "angle_range": "0_pi",
    "split": {"fractions": [0.6, 0.2, 0.2], "seed": 0},
    "model": {
        "n_vqcs": 1,
        "encoding": "RY",
        "ansatz": "basic",
        "n_layers": 1,
        "reuploading": True,
        "rescale": "pi",
    },
    "train": {
        "max_epochs": 100,
        "patience": 5,
        "learning_rate": 0.01,
        "batch_size": 16,
        "seed": 0,
    },
    "sweep": {
        "feature_counts": [2, 3],
        "vqc_counts": [1, 2, 3],
        "max_layers": 20,
        "workers": 1,
        "include_baseline": True,
    },
    "output_dir": "multivqc-out",
}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message: str):
        raise ConfigError(message)


def _deep_merge(base: dict, overlay: dict, path: str = "") -> dict:
    merged = dict(base)
    for key, value in overlay.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            merged[key] = _deep_merge(base[key], value, where)
        else:
            merged[key] = value
    return merged


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(tokens: list[str]) -> dict:
    """Turn `--a.b-c value` / `--a.b-c=value` pairs into a nested dict."""
    overrides: dict = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}")
        body = token[2:]
        if "=" in body:
            key_text, value_text = body.split("=", 1)
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"override {token!r} is missing a value")
            key_text, value_text = body, tokens[i + 1]
            i += 1
        i += 1
        keys = [part.replace("-", "_") for part in key_text.split(".")]
        if not all(keys):
            raise ConfigError(f"malformed override key {key_text!r}")
        node = overrides
        for part in keys[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"conflicting overrides at {key_text!r}")
        node[keys[-1]] = _parse_override_value(value_text)
    return overrides


def load_run_config(config_path: str | None, override_tokens: list[str]) -> dict:
    config = DEFAULT_CONFIG
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as fh:
                file_config = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config file {config_path} is not valid JSON: {exc}") from exc
        if not isinstance(file_config, dict):
            raise ConfigError(f"config file {config_path} must hold a JSON object")
        config = _deep_merge(config, file_config)
    overrides = parse_overrides(override_tokens)
    return _deep_merge(config, overrides)


def _output_dir(config: dict) -> Path:
    out = os.environ.get(OUTPUT_DIR_ENV) or config["output_dir"]
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _angle_range(config: dict) -> tuple[float, float]:
    name = config["angle_range"]
    if isinstance(name, (list, tuple)) and len(name) == 2:
        return float(name[0]), float(name[1])
    if name not in ANGLE_RANGES:
        raise ConfigError(
            f"angle_range must be one of {sorted(ANGLE_RANGES)} or a [low, high] pair"
        )
    return ANGLE_RANGES[name]


def _load_raw_dataset(config: dict) -> tuple[Dataset, str, str]:
    """Returns (dataset, source description, resolved path)."""
    name_or_path = config["dataset"]
    if name_or_path in DATASET_NAMES:
        resolved = resolve_dataset(name_or_path)
        dataset = load_csv(str(resolved.csv_path), resolved.schema)
        return dataset, resolved.source, str(resolved.csv_path)
    if config["schema"] is None:
        raise ConfigError(
            f"dataset {name_or_path!r} is not a built-in name "
            f"({', '.join(DATASET_NAMES)}); loading a CSV path needs 'schema'"
        )
    schema = load_schema(config["schema"])
    return load_csv(name_or_path, schema), "external", name_or_path


def _announce_source(dataset: Dataset, source: str, path: str) -> None:
    print(f"dataset {dataset.name}: {dataset.n_samples} rows, "
          f"{dataset.n_features} features, class counts {dataset.class_counts()}")
    if source == "bundled-synthetic":
        print(f"NOTE: using the bundled synthetic stand-in at {path}; point "
              f"MULTIVQC_DATA_DIR at the real files to override")
    else:
        print(f"source: {path}")


def _encode_splits(raw: SplitDataset, n_components: int,
                   angle_range: tuple[float, float]) -> tuple[SplitDataset, Pipeline]:
    pipe = Pipeline(n_components, angle_range).fit(raw.train.features)
    names = tuple(f"pc{i + 1}" for i in range(n_components))

    def encode(part: Dataset) -> Dataset:
        return Dataset(part.name, pipe.transform(part.features), part.labels, names)

    encoded = SplitDataset(
        train=encode(raw.train), validation=encode(raw.validation),
        test=encode(raw.test), fractions=raw.fractions, seed=raw.seed,
    )
    return encoded, pipe


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, columns: tuple[str, ...], records: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow(record)


METRICS_CSV_COLUMNS = ("dataset", "n_components", "split_seed", "train_seed",
                       "split", "precision", "recall", "f1")


def _metrics_records(config: dict, model: MultiVqcModel, store, data: SplitDataset,
                     dataset_name: str) -> list[dict]:
    records = []
    for split_name, part in (("train", data.train), ("validation", data.validation),
                             ("test", data.test)):
        predictions = model.predict_batch(store, part.features)
        m = evaluate(predictions, part.labels)
        records.append({
            "dataset": dataset_name, "n_components": config["n_components"],
            "split_seed": config["split"]["seed"],
            "train_seed": config["train"]["seed"], "split": split_name,
            "precision": m.precision, "recall": m.recall, "f1": m.f1,
        })
    return records


def _resolved_config_payload(config: dict, source: str, path: str) -> dict:
    return {"format": "multivqc-run-config/1", "config": config,
            "data_source": source, "dataset_path": path}


def cmd_pca_report(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, args.overrides)
    if args.dataset is not None:
        config = _deep_merge(config, {"dataset": args.dataset})
    dataset, source, path = _load_raw_dataset(config)
    _announce_source(dataset, source, path)
    scaled = MinMaxScaler().fit(dataset.features).transform(dataset.features)
    table = explained_variance_table(scaled)
    print(f"{'component':>9}  {'variance':>10}  {'cumulative':>10}")
    records = []
    for i, (ratio, cum) in enumerate(table, start=1):
        print(f"{i:>9}  {ratio:>10.6f}  {cum:>10.6f}")
        records.append({"dataset": dataset.name, "component": i,
                        "variance_ratio": ratio, "cumulative": cum})
    out = _output_dir(config)
    _write_csv(out / f"pca_report_{dataset.name}.csv",
               ("dataset", "component", "variance_ratio", "cumulative"), records)
    print(f"wrote {out / f'pca_report_{dataset.name}.csv'}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, args.overrides)
    dataset, source, path = _load_raw_dataset(config)
    _announce_source(dataset, source, path)
    raw_split = split(dataset, tuple(config["split"]["fractions"]),
                      config["split"]["seed"])
    encoded, pipe = _encode_splits(raw_split, config["n_components"],
                                   _angle_range(config))
    weights = compute_class_weights(encoded.train.labels)
    model_cfg = MultiVqcConfig(
        n_features=config["n_components"], n_classes=2,
        n_vqcs=config["model"]["n_vqcs"],
        encoding=config["model"]["encoding"],
        ansatz=config["model"]["ansatz"],
        n_layers=config["model"]["n_layers"],
        reuploading=config["model"]["reuploading"],
        rescale=config["model"]["rescale"],
    )
    tcfg = TrainConfig(**config["train"])
    report = train(model_cfg, encoded, tcfg, weights)
    out = _output_dir(config)
    _write_json(out / "resolved_config.json",
                _resolved_config_payload(config, source, path))
    save_model(str(out / "model.json"), model_cfg, report.final_params)
    _write_json(out / "pipeline.json", pipe.to_json_dict())
    _write_json(out / "train_report.json",
                train_report_to_json_dict(report, model_cfg, tcfg, weights))
    model = MultiVqcModel(model_cfg)
    _write_csv(out / "metrics.csv", METRICS_CSV_COLUMNS,
               _metrics_records(config, model, report.final_params, encoded,
                                dataset.name))
    best = report.epochs[report.best_epoch]
    print(f"trained {model_cfg.n_vqcs} circuit(s) x {model_cfg.n_layers} layer(s): "
          f"best epoch {report.best_epoch}, val loss {best.val_loss:.6f}, "
          f"val F1 {best.val_metrics.f1:.4f}"
          f"{' (stopped early)' if report.stopped_early else ''}")
    predictions = model.predict_batch(report.final_params, encoded.test.features)
    test_metrics = evaluate(predictions, encoded.test.labels)
    print(f"test: precision {test_metrics.precision:.4f}, "
          f"recall {test_metrics.recall:.4f}, f1 {test_metrics.f1:.4f}")
    print(f"artifacts in {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    config_path = run_dir / "resolved_config.json"
    if not config_path.is_file():
        raise ConfigError(f"{config_path} not found; run `train` first")
    with open(config_path, encoding="utf-8") as fh:
        payload = json.load(fh)
    config = payload["config"]
    dataset, source, path = _load_raw_dataset(config)
    _announce_source(dataset, source, path)
    raw_split = split(dataset, tuple(config["split"]["fractions"]),
                      config["split"]["seed"])
    with open(run_dir / "pipeline.json", encoding="utf-8") as fh:
        pipe = Pipeline.from_json_dict(json.load(fh))
    model, store = load_model(str(run_dir / "model.json"))
    names = tuple(f"pc{i + 1}" for i in range(config["n_components"]))

    def encode(part: Dataset) -> Dataset:
        return Dataset(part.name, pipe.transform(part.features), part.labels, names)

    encoded = SplitDataset(
        train=encode(raw_split.train), validation=encode(raw_split.validation),
        test=encode(raw_split.test), fractions=raw_split.fractions,
        seed=raw_split.seed,
    )
    records = _metrics_records(config, model, store, encoded, dataset.name)
    _write_csv(run_dir / "eval_metrics.csv", METRICS_CSV_COLUMNS, records)
    for record in records:
        print(f"{record['split']}: precision {record['precision']:.4f}, "
              f"recall {record['recall']:.4f}, f1 {record['f1']:.4f}")
    print(f"wrote {run_dir / 'eval_metrics.csv'}")
    return 0


def _marker_payload(base_seed: int, row: SweepRow) -> dict:
    record = sweep_row_record(0, row)
    record.pop("rank")
    record["train_curve"] = list(row.train_curve)
    record["val_curve"] = list(row.val_curve)
    return {"format": "multivqc-sweep-cell/1", "base_seed": base_seed,
            "row": record}


def _cell_signature(row_record: dict) -> tuple:
    return (row_record["model"], row_record["features"], row_record["n_vqcs"],
            row_record["encoding"], row_record["ansatz"],
            row_record["reuploading"])


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, args.overrides)
    if args.workers is not None:
        config = _deep_merge(config, {"sweep": {"workers": args.workers}})
    sweep_cfg = config["sweep"]
    dataset, source, path = _load_raw_dataset(config)
    _announce_source(dataset, source, path)
    raw_split = split(dataset, tuple(config["split"]["fractions"]),
                      config["split"]["seed"])
    feature_counts = tuple(int(k) for k in sweep_cfg["feature_counts"])
    angle_range = _angle_range(config)
    datasets_by_width = {}
    for k in feature_counts:
        encoded, _ = _encode_splits(raw_split, k, angle_range)
        datasets_by_width[k] = encoded
    grid = build_grid(feature_counts, tuple(int(v) for v in sweep_cfg["vqc_counts"]))
    tcfg = TrainConfig(**config["train"])
    rescale = Rescale(config["model"]["rescale"])

    out = _output_dir(config)
    cells_dir = out / "cells"
    cells_dir.mkdir(exist_ok=True)

    completed: dict[int, SweepRow] = {}
    if args.resume:
        for cell in grid:
            marker = cells_dir / f"cell_{cell.index:04d}.json"
            if not marker.is_file():
                continue
            with open(marker, encoding="utf-8") as fh:
                payload = json.load(fh)
            expected = ("multivqc", cell.features, cell.n_vqcs,
                        cell.encoding.value, cell.ansatz.value, cell.reuploading)
            if (payload.get("base_seed") != tcfg.seed
                    or _cell_signature(payload["row"]) != expected):
                raise ConfigError(
                    f"{marker} was produced by a different grid or seed; "
                    f"clear {cells_dir} to start over"
                )
            completed[cell.index] = sweep_row_from_json(payload["row"])
    pending = tuple(c for c in grid if c.index not in completed)
    print(f"sweep: {len(grid)} cells ({len(completed)} already done, "
          f"{len(pending)} to run), {sweep_cfg['workers']} worker(s)")
    fresh = run_cells(pending, datasets_by_width, tcfg, rescale=rescale,
                      max_layers=int(sweep_cfg["max_layers"]),
                      max_workers=int(sweep_cfg["workers"]))
    for row in fresh:
        _write_json(cells_dir / f"cell_{row.cell:04d}.json",
                    _marker_payload(tcfg.seed, row))
    rows = sorted(list(completed.values()) + fresh, key=lambda r: r.cell)

    if sweep_cfg["include_baseline"]:
        for offset, k in enumerate(feature_counts):
            index = len(grid) + offset
            marker = cells_dir / f"cell_{index:04d}.json"
            if args.resume and marker.is_file():
                with open(marker, encoding="utf-8") as fh:
                    rows.append(sweep_row_from_json(json.load(fh)["row"]))
                continue
            data = datasets_by_width[k]
            logreg = fit_logreg(data, tcfg=tcfg)
            m_train, m_val, m_test = logreg_split_metrics(logreg.model, data)
            row = SweepRow(
                cell=index, model="logreg", features=k, n_vqcs=None,
                encoding=None, ansatz=None, reuploading=None, layers=None,
                n_params=k + 1, val_loss=logreg.val_losses[logreg.best_epoch],
                train=m_train, validation=m_val, test=m_test, status="ok",
                train_curve=tuple(logreg.train_losses),
                val_curve=tuple(logreg.val_losses),
            )
            _write_json(marker, _marker_payload(tcfg.seed, row))
            rows.append(row)

    ok_rows = [r for r in rows if r.status == "ok"]
    if not ok_rows:
        raise NumericalError("every sweep cell failed; see cells/*.json")
    ranked = rank_rows(rows)
    _write_csv(out / "sweep.csv", SWEEP_CSV_COLUMNS,
               [sweep_row_record(rank, row)
                for rank, row in enumerate(ranked, start=1)])
    _write_json(out / "sweep.json", sweep_rows_to_json_dict(rows, tcfg.seed))

    groups: dict[tuple, SweepRow] = {}
    for row in ok_rows:
        key = (row.features, row.model if row.model != "multivqc" else str(row.n_vqcs))
        best = groups.get(key)
        if (best is None or row.validation.f1 > best.validation.f1
                or (row.validation.f1 == best.validation.f1
                    and row.n_params < best.n_params)):
            groups[key] = row
    summary_records = []
    for key in sorted(groups, key=lambda k: (k[0], k[1])):
        row = groups[key]
        summary_records.append({
            "features": row.features, "group": key[1], "model": row.model,
            "encoding": row.encoding or "", "ansatz": row.ansatz or "",
            "reuploading": "" if row.reuploading is None else row.reuploading,
            "layers": "" if row.layers is None else row.layers,
            "val_f1": row.validation.f1, "test_f1": row.test.f1,
            "test_precision": row.test.precision, "test_recall": row.test.recall,
        })
    _write_csv(out / "summary.csv",
               ("features", "group", "model", "encoding", "ansatz", "reuploading",
                "layers", "val_f1", "test_f1", "test_precision", "test_recall"),
               summary_records)
    failed = len(rows) - len(ok_rows)
    top = ranked[0]
    print(f"sweep complete: {len(ok_rows)} ok, {failed} failed; best "
          f"val F1 {top.validation.f1:.4f} "
          f"(model={top.model}, features={top.features}, n_vqcs={top.n_vqcs}, "
          f"enc={top.encoding}, ansatz={top.ansatz}, layers={top.layers})")
    print(f"wrote {out / 'sweep.csv'}, {out / 'sweep.json'}, {out / 'summary.csv'}")
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, args.overrides)
    dataset, source, path = _load_raw_dataset(config)
    _announce_source(dataset, source, path)
    raw_split = split(dataset, tuple(config["split"]["fractions"]),
                      config["split"]["seed"])
    encoded, _ = _encode_splits(raw_split, config["n_components"],
                                _angle_range(config))
    tcfg = TrainConfig(**config["train"])
    report = fit_logreg(encoded, tcfg=tcfg)
    out = _output_dir(config)
    m_train, m_val, m_test = logreg_split_metrics(report.model, encoded)
    records = []
    for split_name, m in (("train", m_train), ("validation", m_val),
                          ("test", m_test)):
        records.append({
            "dataset": dataset.name, "n_components": config["n_components"],
            "split_seed": config["split"]["seed"],
            "train_seed": config["train"]["seed"], "split": split_name,
            "precision": m.precision, "recall": m.recall, "f1": m.f1,
        })
    _write_csv(out / "baseline_metrics.csv", METRICS_CSV_COLUMNS, records)
    _write_json(out / "baseline_report.json", {
        "format": "multivqc-baseline-report/1",
        "config": config, "data_source": source,
        "weights": report.model.weights.tolist(), "bias": report.model.bias,
        "best_epoch": report.best_epoch, "stopped_early": report.stopped_early,
        "train_losses": list(report.train_losses),
        "val_losses": list(report.val_losses),
    })
    print(f"logreg best epoch {report.best_epoch}: "
          f"test precision {m_test.precision:.4f}, recall {m_test.recall:.4f}, "
          f"f1 {m_test.f1:.4f}")
    print(f"artifacts in {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="multivqc",
                     description="Chained variational circuit classifiers on "
                                 "small tabular datasets")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_pca = sub.add_parser("pca-report",
                           help="explained-variance table for a dataset")
    p_pca.add_argument("--config", default=None)
    p_pca.add_argument("--dataset", default=None,
                       help="built-in dataset name or CSV path")
    p_pca.set_defaults(func=cmd_pca_report)

    p_train = sub.add_parser("train", help="train one model and write artifacts")
    p_train.add_argument("--config", default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="re-evaluate a saved training run")
    p_eval.add_argument("--run-dir", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="hyperparameter grid sweep")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--resume", action="store_true",
                         help="skip cells with completed markers")
    p_sweep.add_argument("--workers", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_base = sub.add_parser("baseline", help="class-weighted logistic regression")
    p_base.add_argument("--config", default=None)
    p_base.set_defaults(func=cmd_baseline)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        args.overrides = extra
        if not hasattr(args, "func"):
            raise ConfigError("a subcommand is required")
        return args.func(args)
    except (ConfigError, PipelineStateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MultiVqcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

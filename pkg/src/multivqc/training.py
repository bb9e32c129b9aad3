"""Weighted mini-batch training, layer-count search, and the sweep driver.

Class imbalance is handled by weighting each sample's cross-entropy term
with the opposite class's prevalence, so both classes contribute equal
total mass. Optimization is Adam over shuffled mini-batches with early
stopping on validation loss (strict improvement, fixed patience), always
returning the best-validation-epoch parameters.

Layer search retrains from scratch at increasing layer counts and stops
once the validation loss has not improved for as many consecutive counts
as the circuit has qubits. The sweep driver runs the hyperparameter grid,
one seeded RNG stream per cell, so serial and parallel execution produce
identical tables.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, MultiVqcError, NumericalError
from .gradients import batch_loss_gradient
from .metrics import Metrics, evaluate
from .model import (
    MultiVqcConfig,
    MultiVqcModel,
    Rescale,
    nll_from_scores,
    PROB_FLOOR,
)
from .params import ParamStore
from .pipeline import SplitDataset
from .templates import Ansatz, Encoding

MAX_LAYERS_DEFAULT = 20


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    patience: int = 5
    learning_rate: float = 0.01
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if not self.learning_rate > 0.0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class ClassWeights:
    weight_class0: float
    weight_class1: float

    def as_array(self) -> np.ndarray:
        return np.array([self.weight_class0, self.weight_class1], dtype=np.float64)


def _step_ulps(value: float, steps: int) -> float:
    toward = math.inf if steps > 0 else -math.inf
    for _ in range(abs(steps)):
        value = math.nextafter(value, toward)
    return value


def compute_class_weights(labels: np.ndarray) -> ClassWeights:
    """Each class is weighted by the other class's proportion, which makes
    weight_0 * count_0 equal weight_1 * count_1 exactly.

    The two quotients round independently, so the float products can end
    up one ulp apart. The smallest ulp adjustment that restores exact
    product equality is applied; each weight stays within a few
    representable steps of the other class's exact proportion.
    """
    labels = np.asarray(labels)
    count0 = int(np.sum(labels == 0))
    count1 = int(np.sum(labels == 1))
    if count0 == 0 or count1 == 0:
        raise DataError("class weighting needs both classes present")
    total = count0 + count1
    weight0 = count1 / total
    weight1 = count0 / total
    for cost in range(0, 9):
        for i in range(-cost, cost + 1):
            j = cost - abs(i)
            for signed_j in ((j,) if j == 0 else (j, -j)):
                a = _step_ulps(weight0, i)
                b = _step_ulps(weight1, signed_j)
                if a * count0 == b * count1:
                    return ClassWeights(weight_class0=a, weight_class1=b)
    return ClassWeights(weight_class0=weight0, weight_class1=weight1)


def weighted_loss(probabilities: np.ndarray, label: int, weights: ClassWeights) -> float:
    """-weight(label) * log(probabilities[label]), probability floored at 1e-12."""
    p = float(np.asarray(probabilities, dtype=np.float64)[label])
    weight = weights.weight_class1 if label == 1 else weights.weight_class0
    return -weight * float(np.log(max(p, PROB_FLOOR)))


class Adam:
    """Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8."""

    def __init__(self, n_params: int, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n_params, dtype=np.float64)
        self.v = np.zeros(n_params, dtype=np.float64)

    def step(self, values: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return values - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_metrics: Metrics
    val_metrics: Metrics


@dataclass(frozen=True)
class TrainReport:
    epochs: tuple[EpochRecord, ...]
    best_epoch: int
    final_params: ParamStore
    stopped_early: bool

    @property
    def best_val_loss(self) -> float:
        return self.epochs[self.best_epoch].val_loss


def _evaluate_split(
    model: MultiVqcModel, store: ParamStore,
    features: np.ndarray, labels: np.ndarray, weight_arr: np.ndarray,
) -> tuple[float, Metrics]:
    trace = model.forward_batch(store, features)
    loss = float(nll_from_scores(trace.scores, labels, weight_arr).mean())
    predictions = np.argmax(trace.probabilities, axis=1)
    return loss, evaluate(predictions, labels)


def train(
    config: MultiVqcConfig,
    data: SplitDataset,
    tcfg: TrainConfig,
    weights: ClassWeights | None = None,
) -> TrainReport:
    """Adam over shuffled mini-batches with early stopping on validation loss.

    Improvement is strict; after `patience` consecutive non-improving epochs
    training stops and the best epoch's parameters are returned. Fully
    reproducible from tcfg.seed. Class weights default to the train split's.
    """
    if data.train.n_features != config.n_features:
        raise DataError(
            f"model expects {config.n_features} features, split has "
            f"{data.train.n_features}"
        )
    if weights is None:
        weights = compute_class_weights(data.train.labels)
    weight_arr = weights.as_array()
    model = MultiVqcModel(config)
    rng = np.random.default_rng(tcfg.seed)
    store = model.new_store(rng)
    adam = Adam(store.total, tcfg.learning_rate)

    x_train, y_train = data.train.features, data.train.labels
    n_train = x_train.shape[0]
    records: list[EpochRecord] = []
    best_val = np.inf
    best_epoch = -1
    best_values = store.values.copy()
    bad_streak = 0
    stopped_early = False
    for epoch in range(tcfg.max_epochs):
        order = rng.permutation(n_train)
        for batch_no, start in enumerate(range(0, n_train, tcfg.batch_size)):
            idx = order[start:start + tcfg.batch_size]
            try:
                loss, grad = batch_loss_gradient(
                    model, store, x_train[idx], y_train[idx], weight_arr)
            except NumericalError as exc:
                raise NumericalError(
                    f"epoch {epoch}, batch {batch_no}, parameter norm "
                    f"{np.linalg.norm(store.values):.6g}: {exc}"
                ) from exc
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}, "
                    f"parameter norm {np.linalg.norm(store.values):.6g}"
                )
            store.values = adam.step(store.values, grad)
        train_loss, train_metrics = _evaluate_split(
            model, store, x_train, y_train, weight_arr)
        val_loss, val_metrics = _evaluate_split(
            model, store, data.validation.features, data.validation.labels, weight_arr)
        records.append(EpochRecord(epoch, train_loss, val_loss,
                                   train_metrics, val_metrics))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_values = store.values.copy()
            bad_streak = 0
        else:
            bad_streak += 1
            if bad_streak >= tcfg.patience:
                stopped_early = True
                break
    return TrainReport(
        epochs=tuple(records),
        best_epoch=best_epoch,
        final_params=ParamStore(model.param_counts, best_values),
        stopped_early=stopped_early,
    )


@dataclass(frozen=True)
class LayerSearchReport:
    tried_layer_counts: tuple[int, ...]
    validation_losses: tuple[float, ...]
    chosen_layers: int
    stop_reason: str
    best_report: TrainReport


def select_layers(
    base_config: MultiVqcConfig,
    data: SplitDataset,
    tcfg: TrainConfig,
    weights: ClassWeights | None = None,
    max_layers: int = MAX_LAYERS_DEFAULT,
) -> LayerSearchReport:
    """Try L = 1, 2, 3, ... with a fresh training run each (no warm start);
    stop once the best validation loss has gone unimproved for as many
    consecutive counts as there are qubits. One shared L applies to every
    circuit in the chain."""
    stall_limit = base_config.n_features
    tried: list[int] = []
    losses: list[float] = []
    best_loss = np.inf
    best_layers = 0
    best_report: TrainReport | None = None
    stall = 0
    stop_reason = f"layer cap {max_layers} reached"
    for layers in range(1, max_layers + 1):
        report = train(base_config.with_layers(layers), data, tcfg, weights)
        tried.append(layers)
        losses.append(report.best_val_loss)
        if report.best_val_loss < best_loss:
            best_loss = report.best_val_loss
            best_layers = layers
            best_report = report
            stall = 0
        else:
            stall += 1
            if stall >= stall_limit:
                stop_reason = (
                    f"validation loss unimproved for {stall_limit} "
                    "consecutive layer counts"
                )
                break
    return LayerSearchReport(
        tried_layer_counts=tuple(tried),
        validation_losses=tuple(losses),
        chosen_layers=best_layers,
        stop_reason=stop_reason,
        best_report=best_report,
    )


@dataclass(frozen=True)
class SweepCell:
    index: int
    features: int
    n_vqcs: int
    encoding: Encoding
    ansatz: Ansatz
    reuploading: bool


def build_grid(feature_counts: tuple[int, ...],
               vqc_counts: tuple[int, ...] = (1, 2, 3)) -> tuple[SweepCell, ...]:
    """Fixed enumeration order; the cell index seeds the cell's RNG stream,
    so this order is part of the reproducibility contract."""
    cells = []
    index = 0
    for features in feature_counts:
        for n_vqcs in vqc_counts:
            for encoding in (Encoding.RX, Encoding.RY):
                for ansatz in (Ansatz.BASIC, Ansatz.STRONGLY):
                    for reuploading in (True, False):
                        cells.append(SweepCell(index, features, n_vqcs,
                                               encoding, ansatz, reuploading))
                        index += 1
    return tuple(cells)


@dataclass(frozen=True)
class SweepRow:
    cell: int
    model: str
    features: int
    n_vqcs: int | None
    encoding: str | None
    ansatz: str | None
    reuploading: bool | None
    layers: int | None
    n_params: int
    val_loss: float
    train: Metrics
    validation: Metrics
    test: Metrics
    status: str
    error: str = ""
    train_curve: tuple[float, ...] = ()
    val_curve: tuple[float, ...] = ()


def cell_seed(base_seed: int, cell_index: int) -> int:
    """Independent per-cell RNG stream derived from (seed, cell index)."""
    return int(np.random.SeedSequence([base_seed, cell_index]).generate_state(1)[0])


_FAILED_METRICS = Metrics(0.0, 0.0, 0.0, degenerate=True)


def run_cell(
    cell: SweepCell,
    data: SplitDataset,
    tcfg: TrainConfig,
    rescale: Rescale = Rescale.PI,
    max_layers: int = MAX_LAYERS_DEFAULT,
) -> SweepRow:
    """Layer search plus final evaluation for one grid cell. Failures are
    captured in the row instead of propagating, so one bad cell cannot
    bring down a sweep."""
    seeded = replace(tcfg, seed=cell_seed(tcfg.seed, cell.index))
    try:
        base = MultiVqcConfig(
            n_features=cell.features, n_classes=2, n_vqcs=cell.n_vqcs,
            encoding=cell.encoding, ansatz=cell.ansatz, n_layers=1,
            reuploading=cell.reuploading, rescale=rescale,
        )
        search = select_layers(base, data, seeded, max_layers=max_layers)
        config = base.with_layers(search.chosen_layers)
        model = MultiVqcModel(config)
        store = search.best_report.final_params
        split_metrics = []
        for part in (data.train, data.validation, data.test):
            predictions = model.predict_batch(store, part.features)
            split_metrics.append(evaluate(predictions, part.labels))
        return SweepRow(
            cell=cell.index, model="multivqc", features=cell.features,
            n_vqcs=cell.n_vqcs, encoding=cell.encoding.value,
            ansatz=cell.ansatz.value, reuploading=cell.reuploading,
            layers=search.chosen_layers, n_params=store.total,
            val_loss=search.best_report.best_val_loss,
            train=split_metrics[0], validation=split_metrics[1],
            test=split_metrics[2], status="ok",
            train_curve=tuple(r.train_loss for r in search.best_report.epochs),
            val_curve=tuple(r.val_loss for r in search.best_report.epochs),
        )
    except (MultiVqcError, ValueError, FloatingPointError) as exc:
        return SweepRow(
            cell=cell.index, model="multivqc", features=cell.features,
            n_vqcs=cell.n_vqcs, encoding=cell.encoding.value,
            ansatz=cell.ansatz.value, reuploading=cell.reuploading,
            layers=None, n_params=0, val_loss=float("inf"),
            train=_FAILED_METRICS, validation=_FAILED_METRICS,
            test=_FAILED_METRICS, status="failed", error=str(exc),
        )


def _run_cell_payload(payload: tuple) -> SweepRow:
    return run_cell(*payload)


def run_cells(
    cells: tuple[SweepCell, ...],
    datasets_by_width: dict[int, SplitDataset],
    tcfg: TrainConfig,
    rescale: Rescale = Rescale.PI,
    max_layers: int = MAX_LAYERS_DEFAULT,
    max_workers: int = 1,
) -> list[SweepRow]:
    """Run grid cells serially or on a process pool; the result list is in
    cell-index order either way."""
    payloads = [(cell, datasets_by_width[cell.features], tcfg, rescale, max_layers)
                for cell in cells]
    if max_workers <= 1 or len(cells) <= 1:
        rows = [_run_cell_payload(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(_run_cell_payload, payloads))
    return sorted(rows, key=lambda r: r.cell)


def rank_rows(rows: list[SweepRow]) -> list[SweepRow]:
    """Successful rows by descending validation F1, ties broken by fewer
    parameters then fewer circuits; failed rows last in cell order."""
    def key(row: SweepRow):
        failed = row.status != "ok"
        return (failed, -row.validation.f1 if not failed else 0.0,
                row.n_params, row.n_vqcs or 0, row.cell)
    return sorted(rows, key=key)


SWEEP_CSV_COLUMNS = (
    "rank", "cell", "model", "features", "n_vqcs", "encoding", "ansatz",
    "reuploading", "layers", "n_params", "val_loss",
    "train_precision", "train_recall", "train_f1",
    "val_precision", "val_recall", "val_f1",
    "test_precision", "test_recall", "test_f1",
    "status", "error",
)


def sweep_row_record(rank: int, row: SweepRow) -> dict:
    def opt(value):
        return "" if value is None else value
    return {
        "rank": rank, "cell": row.cell, "model": row.model,
        "features": row.features, "n_vqcs": opt(row.n_vqcs),
        "encoding": opt(row.encoding), "ansatz": opt(row.ansatz),
        "reuploading": opt(row.reuploading), "layers": opt(row.layers),
        "n_params": row.n_params,
        "val_loss": row.val_loss if np.isfinite(row.val_loss) else "",
        "train_precision": row.train.precision, "train_recall": row.train.recall,
        "train_f1": row.train.f1,
        "val_precision": row.validation.precision,
        "val_recall": row.validation.recall, "val_f1": row.validation.f1,
        "test_precision": row.test.precision, "test_recall": row.test.recall,
        "test_f1": row.test.f1,
        "status": row.status, "error": row.error,
    }


def sweep_rows_to_json_dict(rows: list[SweepRow], base_seed: int) -> dict:
    ranked = rank_rows(rows)
    return {
        "format": "multivqc-sweep/1",
        "seed": base_seed,
        "rows": [
            {**sweep_row_record(rank, row),
             "train_curve": list(row.train_curve),
             "val_curve": list(row.val_curve)}
            for rank, row in enumerate(ranked, start=1)
        ],
    }


def sweep_row_from_json(record: dict) -> SweepRow:
    """Rebuild a row from its JSON record (used to resume interrupted sweeps)."""
    def opt(value):
        return None if value == "" else value
    return SweepRow(
        cell=int(record["cell"]), model=record["model"],
        features=int(record["features"]),
        n_vqcs=None if record["n_vqcs"] == "" else int(record["n_vqcs"]),
        encoding=opt(record["encoding"]), ansatz=opt(record["ansatz"]),
        reuploading=None if record["reuploading"] == "" else bool(record["reuploading"]),
        layers=None if record["layers"] == "" else int(record["layers"]),
        n_params=int(record["n_params"]),
        val_loss=float("inf") if record["val_loss"] == "" else float(record["val_loss"]),
        train=Metrics(float(record["train_precision"]), float(record["train_recall"]),
                      float(record["train_f1"])),
        validation=Metrics(float(record["val_precision"]), float(record["val_recall"]),
                           float(record["val_f1"])),
        test=Metrics(float(record["test_precision"]), float(record["test_recall"]),
                     float(record["test_f1"])),
        status=record["status"], error=record.get("error", ""),
        train_curve=tuple(record.get("train_curve", ())),
        val_curve=tuple(record.get("val_curve", ())),
    )


def train_report_to_json_dict(
    report: TrainReport, config: MultiVqcConfig, tcfg: TrainConfig,
    weights: ClassWeights,
) -> dict:
    return {
        "format": "multivqc-train-report/1",
        "model_config": {
            "n_features": config.n_features, "n_classes": config.n_classes,
            "n_vqcs": config.n_vqcs, "encoding": config.encoding.value,
            "ansatz": config.ansatz.value, "n_layers": config.n_layers,
            "reuploading": config.reuploading, "rescale": config.rescale.value,
        },
        "train_config": {
            "max_epochs": tcfg.max_epochs, "patience": tcfg.patience,
            "learning_rate": tcfg.learning_rate, "batch_size": tcfg.batch_size,
            "seed": tcfg.seed,
        },
        "class_weights": [weights.weight_class0, weights.weight_class1],
        "best_epoch": report.best_epoch,
        "stopped_early": report.stopped_early,
        "epochs": [
            {
                "epoch": r.epoch,
                "train_loss": r.train_loss, "val_loss": r.val_loss,
                "train_f1": r.train_metrics.f1, "val_f1": r.val_metrics.f1,
                "train_precision": r.train_metrics.precision,
                "val_precision": r.val_metrics.precision,
                "train_recall": r.train_metrics.recall,
                "val_recall": r.val_metrics.recall,
            }
            for r in report.epochs
        ],
    }

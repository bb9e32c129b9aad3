"""Tabular data pipeline: CSV loading, scaling, PCA, angle encoding, splits.

The preprocessing order is fixed and enforced: per-feature min-max scaling
to [0, 1], then PCA on the scaled features, then an affine re-normalization
of the projected columns into a rotation-angle range (default [0, pi]).
Every statistic is fitted on the training split only; validation and test
values falling outside the fitted range are clipped.

PCA is a mean-centered covariance eigendecomposition computed by a cyclic
Jacobi sweep (feature counts here are tiny). Component sign convention: the
largest-magnitude entry of each component is positive.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, PipelineStateError

PIPELINE_FORMAT = "multivqc-pipeline/1"

ANGLE_RANGES: dict[str, tuple[float, float]] = {
    "0_pi": (0.0, np.pi),
    "0_2pi": (0.0, 2.0 * np.pi),
    "-pi_pi": (-np.pi, np.pi),
}


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or labels.ndim != 1 or feats.shape[0] != labels.shape[0]:
            raise DataError(
                f"features {feats.shape} and labels {labels.shape} are inconsistent"
            )
        if feats.shape[1] != len(self.feature_names):
            raise DataError(
                f"{feats.shape[1]} feature columns but "
                f"{len(self.feature_names)} feature names"
            )
        if not np.all(np.isfinite(feats)):
            raise DataError(f"dataset {self.name!r} contains non-finite feature values")
        if not np.all((labels == 0) | (labels == 1)):
            raise DataError(f"dataset {self.name!r} has labels outside {{0, 1}}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.name, self.features[indices], self.labels[indices],
                       self.feature_names)


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    validation: Dataset
    test: Dataset
    fractions: tuple[float, float, float]
    seed: int


def load_schema(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            schema = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read schema file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"schema file {path} is not valid JSON: {exc}") from exc
    if "name" not in schema or "label_column" not in schema:
        raise ConfigError(f"schema file {path} needs 'name' and 'label_column'")
    return schema


def load_csv(path: str, schema: dict) -> Dataset:
    """Read a comma-separated file with a header row into a Dataset.

    The schema names the label column, optionally maps label strings to
    {0, 1}, lists columns to drop, and may carry expected row/feature/class
    counts; count mismatches warn (public copies of these datasets vary)
    while parse problems fail with the offending row number.
    """
    label_column = schema["label_column"]
    label_mapping = schema.get("label_mapping")
    drop = set(schema.get("drop_columns", ()))
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read dataset file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path} has no column {label_column!r} (header: {header})")
        label_idx = header.index(label_column)
        feature_idx = [i for i, h in enumerate(header)
                       if i != label_idx and h not in drop]
        feature_names = tuple(header[i] for i in feature_idx)
        rows: list[list[float]] = []
        labels: list[int] = []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{row_no}: expected {len(header)} fields, got {len(row)}"
                )
            raw_label = row[label_idx].strip()
            if label_mapping is not None:
                if raw_label not in label_mapping:
                    raise DataError(
                        f"{path}:{row_no}: label {raw_label!r} not in schema mapping"
                    )
                labels.append(int(label_mapping[raw_label]))
            else:
                try:
                    labels.append(int(float(raw_label)))
                except ValueError:
                    raise DataError(
                        f"{path}:{row_no}: cannot parse label {raw_label!r}"
                    ) from None
            try:
                rows.append([float(row[i]) for i in feature_idx])
            except ValueError as exc:
                raise DataError(f"{path}:{row_no}: {exc}") from None
    dataset = Dataset(schema["name"], np.asarray(rows), np.asarray(labels), feature_names)
    _check_profile(dataset, schema, path)
    return dataset


def _check_profile(dataset: Dataset, schema: dict, path: str) -> None:
    expected_rows = schema.get("expected_rows")
    if expected_rows is not None and dataset.n_samples != expected_rows:
        warnings.warn(
            f"{path}: {dataset.n_samples} rows, expected {expected_rows} "
            f"for {dataset.name!r}", stacklevel=3)
    expected_features = schema.get("expected_features")
    if expected_features is not None and dataset.n_features != expected_features:
        warnings.warn(
            f"{path}: {dataset.n_features} feature columns, expected "
            f"{expected_features} for {dataset.name!r}", stacklevel=3)
    expected_class1 = schema.get("expected_class1")
    if expected_class1 is not None and dataset.class_counts()[1] != expected_class1:
        warnings.warn(
            f"{path}: {dataset.class_counts()[1]} positive labels, expected "
            f"{expected_class1} for {dataset.name!r}", stacklevel=3)


class MinMaxScaler:
    """Per-column affine map onto [0, 1], fitted on training data only.

    Constant columns carry no information under this map and are dropped
    with a warning. Transform output is clipped to [0, 1] so out-of-range
    validation/test values cannot escape the encoding domain.
    """

    def __init__(self) -> None:
        self.mins: np.ndarray | None = None
        self.maxs: np.ndarray | None = None
        self.kept: np.ndarray | None = None

    def fit(self, features: np.ndarray) -> "MinMaxScaler":
        features = np.asarray(features, dtype=np.float64)
        mins = features.min(axis=0)
        maxs = features.max(axis=0)
        kept = maxs > mins
        if not np.all(kept):
            warnings.warn(
                f"dropping {int(np.sum(~kept))} constant feature column(s): "
                f"indices {np.nonzero(~kept)[0].tolist()}", stacklevel=2)
        self.mins = mins[kept]
        self.maxs = maxs[kept]
        self.kept = kept
        return self

    def transform(self, features: np.ndarray) -> np.ndarray:
        if self.mins is None:
            raise PipelineStateError("scaler used before fitting")
        features = np.asarray(features, dtype=np.float64)[:, self.kept]
        scaled = (features - self.mins) / (self.maxs - self.mins)
        return np.clip(scaled, 0.0, 1.0)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray               # (k, d), rows orthonormal
    explained_variance_ratio: np.ndarray  # (k,), nonincreasing


def _jacobi_eigh(matrix: np.ndarray, tol: float = 1e-14,
                 max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors-as-columns), unordered. Each sweep
    zeroes every off-diagonal pair once; stops when the off-diagonal mass
    is negligible against the matrix scale.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    vecs = np.eye(n)
    scale = max(np.abs(a).max(), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale * n:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.hypot(theta, 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                vcol_p, vcol_q = vecs[:, p].copy(), vecs[:, q].copy()
                vecs[:, p] = c * vcol_p - s * vcol_q
                vecs[:, q] = s * vcol_p + c * vcol_q
    return np.diag(a).copy(), vecs


def fit_pca(train_features: np.ndarray, k: int) -> PcaModel:
    train_features = np.asarray(train_features, dtype=np.float64)
    n, d = train_features.shape
    if not 1 <= k <= d:
        raise ConfigError(f"component count {k} not in 1..{d}")
    if n <= k:
        raise DataError(f"need more than {k} samples to fit {k} components, got {n}")
    mean = train_features.mean(axis=0)
    centered = train_features - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = _jacobi_eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]
    components = eigvecs[:, :k].T.copy()
    for row in components:  # sign convention: dominant entry positive
        if row[np.argmax(np.abs(row))] < 0.0:
            row *= -1.0
    trace = float(np.trace(cov))
    if trace <= 0.0:
        raise DataError("covariance has zero trace; all features are constant")
    return PcaModel(mean=mean, components=components,
                    explained_variance_ratio=eigvals[:k] / trace)


def transform_pca(model: PcaModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[1] != model.mean.shape[0]:
        raise DataError(
            f"PCA expects {model.mean.shape[0]} columns, got {features.shape[1]}"
        )
    return (features - model.mean) @ model.components.T


def explained_variance_table(train_features: np.ndarray) -> np.ndarray:
    """(d, 2) table of per-component and cumulative variance ratios."""
    d = np.asarray(train_features).shape[1]
    model = fit_pca(train_features, d)
    ratios = model.explained_variance_ratio
    return np.column_stack([ratios, np.cumsum(ratios)])


class AngleEncoder:
    """Affine per-column map of PCA outputs onto a rotation-angle range.

    Fitted on training data; transform clips into the target range. A
    constant column maps to the range midpoint.
    """

    def __init__(self, angle_range: tuple[float, float] = ANGLE_RANGES["0_pi"]):
        low, high = float(angle_range[0]), float(angle_range[1])
        if not high > low:
            raise ConfigError(f"invalid angle range ({low}, {high})")
        self.low = low
        self.high = high
        self.mins: np.ndarray | None = None
        self.maxs: np.ndarray | None = None

    def fit(self, projected: np.ndarray) -> "AngleEncoder":
        projected = np.asarray(projected, dtype=np.float64)
        self.mins = projected.min(axis=0)
        self.maxs = projected.max(axis=0)
        return self

    def transform(self, projected: np.ndarray) -> np.ndarray:
        if self.mins is None:
            raise PipelineStateError("angle encoder used before fitting")
        projected = np.asarray(projected, dtype=np.float64)
        span = self.maxs - self.mins
        width = self.high - self.low
        midpoint = self.low + 0.5 * width
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = (projected - self.mins) / span
        angles = self.low + width * unit
        angles = np.where(span > 0.0, angles, midpoint)
        return np.clip(angles, self.low, self.high)


class Pipeline:
    """Scale, project, and encode, in that order and no other.

    Stage methods must be called in sequence (fit_scaler, fit_projection,
    fit_encoder); calling one out of order raises PipelineStateError. fit()
    runs all three on a training matrix.
    """

    def __init__(self, n_components: int,
                 angle_range: tuple[float, float] = ANGLE_RANGES["0_pi"]):
        if n_components < 1:
            raise ConfigError(f"n_components must be >= 1, got {n_components}")
        self.n_components = n_components
        self.angle_range = (float(angle_range[0]), float(angle_range[1]))
        self.scaler: MinMaxScaler | None = None
        self.pca: PcaModel | None = None
        self.encoder: AngleEncoder | None = None
        self._train_scaled: np.ndarray | None = None

    def fit_scaler(self, train_features: np.ndarray) -> "Pipeline":
        self.scaler = MinMaxScaler().fit(train_features)
        self._train_scaled = self.scaler.transform(train_features)
        return self

    def fit_projection(self) -> "Pipeline":
        if self._train_scaled is None:
            raise PipelineStateError("fit_projection called before fit_scaler")
        self.pca = fit_pca(self._train_scaled, self.n_components)
        return self

    def fit_encoder(self) -> "Pipeline":
        if self.pca is None:
            raise PipelineStateError("fit_encoder called before fit_projection")
        projected = transform_pca(self.pca, self._train_scaled)
        self.encoder = AngleEncoder(self.angle_range).fit(projected)
        self._train_scaled = None
        return self

    def fit(self, train_features: np.ndarray) -> "Pipeline":
        return self.fit_scaler(train_features).fit_projection().fit_encoder()

    def transform(self, features: np.ndarray) -> np.ndarray:
        if self.encoder is None:
            raise PipelineStateError("pipeline used before fitting completed")
        scaled = self.scaler.transform(features)
        return self.encoder.transform(transform_pca(self.pca, scaled))

    def to_json_dict(self) -> dict:
        if self.encoder is None:
            raise PipelineStateError("cannot serialize an unfitted pipeline")
        return {
            "format": PIPELINE_FORMAT,
            "n_components": self.n_components,
            "angle_range": list(self.angle_range),
            "scaler": {
                "mins": self.scaler.mins.tolist(),
                "maxs": self.scaler.maxs.tolist(),
                "kept": self.scaler.kept.tolist(),
            },
            "pca": {
                "mean": self.pca.mean.tolist(),
                "components": self.pca.components.tolist(),
                "explained_variance_ratio":
                    self.pca.explained_variance_ratio.tolist(),
            },
            "encoder": {
                "mins": self.encoder.mins.tolist(),
                "maxs": self.encoder.maxs.tolist(),
            },
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "Pipeline":
        if not isinstance(payload, dict) or payload.get("format") != PIPELINE_FORMAT:
            raise ConfigError("not a serialized pipeline document")
        pipe = cls(int(payload["n_components"]), tuple(payload["angle_range"]))
        scaler = MinMaxScaler()
        scaler.mins = np.asarray(payload["scaler"]["mins"], dtype=np.float64)
        scaler.maxs = np.asarray(payload["scaler"]["maxs"], dtype=np.float64)
        scaler.kept = np.asarray(payload["scaler"]["kept"], dtype=bool)
        pipe.scaler = scaler
        pipe.pca = PcaModel(
            mean=np.asarray(payload["pca"]["mean"], dtype=np.float64),
            components=np.asarray(payload["pca"]["components"], dtype=np.float64),
            explained_variance_ratio=np.asarray(
                payload["pca"]["explained_variance_ratio"], dtype=np.float64),
        )
        encoder = AngleEncoder(pipe.angle_range)
        encoder.mins = np.asarray(payload["encoder"]["mins"], dtype=np.float64)
        encoder.maxs = np.asarray(payload["encoder"]["maxs"], dtype=np.float64)
        pipe.encoder = encoder
        return pipe


def _largest_remainder(total: int, fractions: tuple[float, ...]) -> list[int]:
    raw = [f * total for f in fractions]
    base = [int(np.floor(r)) for r in raw]
    leftover = total - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def split(dataset: Dataset, fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
          seed: int = 0) -> SplitDataset:
    """Stratified, seeded train/validation/test partition.

    Split sizes and per-class allocations both use largest-remainder
    rounding, so each split's class balance is within one sample of the
    dataset's. Every split must end up with both classes present.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0.0 for f in fractions):
        raise ConfigError(f"split fractions must be three positives, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {sum(fractions)}")
    labels = dataset.labels
    pos = np.nonzero(labels == 1)[0]
    neg = np.nonzero(labels == 0)[0]
    if pos.size == 0 or neg.size == 0:
        raise DataError("both classes must be present to split")
    totals = _largest_remainder(dataset.n_samples, fractions)
    pos_counts = _largest_remainder(pos.size, fractions)
    neg_counts = [t - p for t, p in zip(totals, pos_counts)]
    if any(p < 1 or n < 1 for p, n in zip(pos_counts, neg_counts)):
        raise DataError(
            f"split sizes {totals} cannot hold both classes "
            f"({pos.size} positive, {neg.size} negative samples)"
        )
    rng = np.random.default_rng(seed)
    pos = pos[rng.permutation(pos.size)]
    neg = neg[rng.permutation(neg.size)]
    parts = []
    p_start = n_start = 0
    for pc, nc in zip(pos_counts, neg_counts):
        indices = np.sort(np.concatenate([pos[p_start:p_start + pc],
                                          neg[n_start:n_start + nc]]))
        parts.append(dataset.subset(indices))
        p_start += pc
        n_start += nc
    return SplitDataset(train=parts[0], validation=parts[1], test=parts[2],
                        fractions=fractions, seed=seed)

"""Chained variational circuit classifier.

A model is a sequence of circuits sharing one hyperparameter shape. Every
circuit but the last measures the Pauli-Z expectation of all its qubits;
those expectations, each in [-1, 1], are rescaled to rotation angles and
fed to the next circuit's angle encoding. The last circuit measures one
qubit per class and its expectations are the class scores, mapped to
probabilities with a softmax. Predicted label is the argmax probability.

Qubit count equals the feature count throughout the chain, so the model's
inputs must already be rotation angles (the preprocessing pipeline ends
with an angle encoding step).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import GateOp, MAX_QUBITS, run_circuit_batch, expectations_z_batch
from .errors import ConfigError
from .params import ParamStore
from .templates import Ansatz, Encoding, VqcConfig, build_vqc

PROB_FLOOR = 1e-12
MODEL_FORMAT = "multivqc-model/1"
_ARCCOS_CLAMP = 1.0 - 1e-9


class Rescale(str, Enum):
    """How intermediate expectations become the next circuit's angles."""

    PI = "pi"           # angle = pi * e, spans [-pi, pi]
    ARCCOS = "arccos"   # angle = arccos(e), spans [0, pi]
    IDENTITY = "identity"


def rescale_expectations(values: np.ndarray, mode: Rescale) -> np.ndarray:
    if mode == Rescale.PI:
        return np.pi * values
    if mode == Rescale.ARCCOS:
        return np.arccos(np.clip(values, -_ARCCOS_CLAMP, _ARCCOS_CLAMP))
    return np.asarray(values, dtype=np.float64)


def rescale_derivative(values: np.ndarray, mode: Rescale) -> np.ndarray:
    """Elementwise d(angle)/d(expectation) at the given expectations."""
    if mode == Rescale.PI:
        return np.full_like(values, np.pi)
    if mode == Rescale.ARCCOS:
        clipped = np.clip(values, -_ARCCOS_CLAMP, _ARCCOS_CLAMP)
        return -1.0 / np.sqrt(1.0 - clipped * clipped)
    return np.ones_like(values)


@dataclass(frozen=True)
class MultiVqcConfig:
    """Shape of the whole chain.

    Encoding, ansatz, reuploading, and rescale apply to every circuit in the
    chain; n_layers is either one shared count or a per-circuit tuple.
    """

    n_features: int
    n_classes: int = 2
    n_vqcs: int = 1
    encoding: Encoding = Encoding.RY
    ansatz: Ansatz = Ansatz.BASIC
    n_layers: int | tuple[int, ...] = 1
    reuploading: bool = True
    rescale: Rescale = Rescale.PI

    def __post_init__(self) -> None:
        if not 2 <= self.n_features <= MAX_QUBITS:
            raise ConfigError(
                f"n_features must be in 2..{MAX_QUBITS}, got {self.n_features}"
            )
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.n_classes > self.n_features:
            raise ConfigError(
                f"need one measured qubit per class: n_classes {self.n_classes} "
                f"exceeds qubit count {self.n_features}"
            )
        if self.n_vqcs < 1:
            raise ConfigError(f"n_vqcs must be >= 1, got {self.n_vqcs}")
        if isinstance(self.n_layers, (tuple, list)):
            layers = tuple(int(v) for v in self.n_layers)
            if len(layers) != self.n_vqcs:
                raise ConfigError(
                    f"per-circuit n_layers has {len(layers)} entries for "
                    f"{self.n_vqcs} circuits"
                )
            if any(v < 1 for v in layers):
                raise ConfigError(f"every layer count must be >= 1, got {layers}")
            object.__setattr__(self, "n_layers", layers)
        elif self.n_layers < 1:
            raise ConfigError(f"n_layers must be >= 1, got {self.n_layers}")
        object.__setattr__(self, "encoding", Encoding(self.encoding))
        object.__setattr__(self, "ansatz", Ansatz(self.ansatz))
        object.__setattr__(self, "rescale", Rescale(self.rescale))

    def layers_for_stage(self, stage: int) -> int:
        if isinstance(self.n_layers, tuple):
            return self.n_layers[stage]
        return self.n_layers

    def with_layers(self, n_layers: int | tuple[int, ...]) -> "MultiVqcConfig":
        return MultiVqcConfig(
            n_features=self.n_features, n_classes=self.n_classes,
            n_vqcs=self.n_vqcs, encoding=self.encoding, ansatz=self.ansatz,
            n_layers=n_layers, reuploading=self.reuploading, rescale=self.rescale,
        )

    def stage_configs(self) -> tuple[VqcConfig, ...]:
        """Per-circuit shape: intermediates measure all qubits, the last one
        measures one qubit per class."""
        stages = []
        for k in range(self.n_vqcs):
            last = k == self.n_vqcs - 1
            stages.append(VqcConfig(
                n_qubits=self.n_features,
                encoding=self.encoding,
                ansatz=self.ansatz,
                n_layers=self.layers_for_stage(k),
                reuploading=self.reuploading,
                n_measured=self.n_classes if last else self.n_features,
            ))
        return tuple(stages)


def validate_stages(stages, n_classes: int) -> list[str]:
    """Check the chain-shape rules over explicit per-circuit configs.

    Returns every violation found (empty list = valid) rather than raising
    on the first one; each message names the offending circuit index.
    stage_configs() satisfies these by construction, so this is the check
    for externally assembled or deserialized stage sequences.
    """
    stages = list(stages)
    problems: list[str] = []
    for k, cfg in enumerate(stages[:-1]):
        if cfg.n_measured != cfg.n_qubits:
            problems.append(
                f"circuit {k}: intermediate circuits must measure every qubit "
                f"(n_measured {cfg.n_measured} != n_qubits {cfg.n_qubits})"
            )
    if stages and stages[-1].n_measured != n_classes:
        problems.append(
            f"circuit {len(stages) - 1}: final circuit must measure one qubit "
            f"per class (n_measured {stages[-1].n_measured} != n_classes "
            f"{n_classes})"
        )
    for k in range(1, len(stages)):
        if stages[k].n_qubits != stages[k - 1].n_measured:
            problems.append(
                f"circuit {k}: input width {stages[k].n_qubits} does not match "
                f"circuit {k - 1} output width {stages[k - 1].n_measured}"
            )
    return problems


@dataclass(frozen=True)
class ForwardTrace:
    """Everything the forward pass computed, kept for backpropagation.

    stage_inputs[k] are the angles fed to circuit k; for k > 0 they equal
    rescale(stage_expectations[k-1]). scores is stage_expectations[-1].
    """

    stage_inputs: tuple[np.ndarray, ...]
    stage_expectations: tuple[np.ndarray, ...]
    scores: np.ndarray
    probabilities: np.ndarray


class MultiVqcModel:
    def __init__(self, config: MultiVqcConfig):
        self.config = config
        self.stages = config.stage_configs()
        problems = validate_stages(self.stages, config.n_classes)
        if problems:
            raise ConfigError("; ".join(problems))
        built = [build_vqc(s) for s in self.stages]
        self.stage_gates: tuple[tuple[GateOp, ...], ...] = tuple(g for g, _ in built)
        self.param_counts: tuple[int, ...] = tuple(c for _, c in built)

    def new_store(self, rng: np.random.Generator | None = None) -> ParamStore:
        if rng is None:
            return ParamStore(self.param_counts)
        return ParamStore.random_init(self.param_counts, rng)

    def stage_expectations_batch(
        self,
        stage: int,
        inputs: np.ndarray,
        stage_params: np.ndarray,
        shift: tuple[int, float] | None = None,
    ) -> np.ndarray:
        """Run circuit ``stage`` on a (batch, n_features) block of angles and
        return its (batch, n_measured) Pauli-Z expectations. ``shift`` adds a
        delta to the resolved angle of one gate (by index in the gate list)."""
        cfg = self.stages[stage]
        amps = run_circuit_batch(
            cfg.n_qubits, self.stage_gates[stage],
            params=stage_params, features=inputs, shift=shift,
        )
        return expectations_z_batch(amps, range(cfg.n_measured), cfg.n_qubits)

    def forward_batch(self, store: ParamStore, features: np.ndarray) -> ForwardTrace:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.config.n_features:
            raise ConfigError(
                f"expected features of shape (batch, {self.config.n_features}), "
                f"got {features.shape}"
            )
        if store.counts != self.param_counts:
            raise ConfigError(
                f"parameter store shape {store.counts} does not match model "
                f"{self.param_counts}"
            )
        inputs: list[np.ndarray] = [features]
        expectations: list[np.ndarray] = []
        for k in range(self.config.n_vqcs):
            exp = self.stage_expectations_batch(k, inputs[-1], store.slice_for(k))
            expectations.append(exp)
            if k < self.config.n_vqcs - 1:
                inputs.append(rescale_expectations(exp, self.config.rescale))
        scores = expectations[-1]
        return ForwardTrace(
            stage_inputs=tuple(inputs),
            stage_expectations=tuple(expectations),
            scores=scores,
            probabilities=softmax(scores),
        )

    def forward(self, store: ParamStore, features: np.ndarray) -> ForwardTrace:
        trace = self.forward_batch(store, np.asarray(features, dtype=np.float64)[None, :])
        return ForwardTrace(
            stage_inputs=tuple(x[0] for x in trace.stage_inputs),
            stage_expectations=tuple(e[0] for e in trace.stage_expectations),
            scores=trace.scores[0],
            probabilities=trace.probabilities[0],
        )

    def predict_batch(self, store: ParamStore, features: np.ndarray) -> np.ndarray:
        trace = self.forward_batch(store, features)
        return np.argmax(trace.probabilities, axis=1)


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stable under large scores."""
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def nll_from_scores(
    scores: np.ndarray, labels: np.ndarray, label_weights: np.ndarray
) -> np.ndarray:
    """Per-sample weighted negative log likelihood from class scores.

    label_weights maps label -> weight. Probabilities are floored at 1e-12
    before the log; with scores confined to [-1, 1] the floor never binds,
    it only guards degenerate callers.
    """
    probs = softmax(np.atleast_2d(scores))
    labels = np.asarray(labels, dtype=np.int64)
    picked = probs[np.arange(probs.shape[0]), labels]
    weights = np.asarray(label_weights, dtype=np.float64)[labels]
    return -weights * np.log(np.maximum(picked, PROB_FLOOR))


def model_to_json_dict(config: MultiVqcConfig, store: ParamStore) -> dict:
    return {
        "format": MODEL_FORMAT,
        "config": {
            "n_features": config.n_features,
            "n_classes": config.n_classes,
            "n_vqcs": config.n_vqcs,
            "encoding": config.encoding.value,
            "ansatz": config.ansatz.value,
            "n_layers": list(config.n_layers)
            if isinstance(config.n_layers, tuple) else config.n_layers,
            "reuploading": config.reuploading,
            "rescale": config.rescale.value,
        },
        "param_counts": list(store.counts),
        "params": [float(v) for v in store.values],
    }


def model_from_json_dict(payload: dict) -> tuple[MultiVqcModel, ParamStore]:
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ConfigError(
            f"not a {MODEL_FORMAT} document (format={payload.get('format')!r})"
            if isinstance(payload, dict) else "model document must be a JSON object"
        )
    try:
        config = MultiVqcConfig(**payload["config"])
        counts = tuple(int(c) for c in payload["param_counts"])
        values = np.asarray(payload["params"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed model document: {exc}") from exc
    model = MultiVqcModel(config)
    if counts != model.param_counts:
        raise ConfigError(
            f"stored parameter layout {counts} does not match config-derived "
            f"layout {model.param_counts}"
        )
    return model, ParamStore(counts, values)


def save_model(path: str, config: MultiVqcConfig, store: ParamStore) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json_dict(config, store), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> tuple[MultiVqcModel, ParamStore]:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_json_dict(payload)

"""Analytic gradients via the parameter-shift rule.

Every trainable angle enters the circuits through a Pauli rotation, so the
derivative of any Pauli-Z expectation with respect to that angle is exactly
[E(theta + pi/2) - E(theta - pi/2)] / 2.

For a chain of circuits the loss also depends on upstream parameters through
the intermediate expectations. Those are explicit differentiable nodes:
per-circuit Jacobians (w.r.t. the circuit's own parameters and, for circuits
past the first, w.r.t. its input angles) are computed by parameter shift and
composed in reverse with the rescaling derivative and the softmax
cross-entropy cotangent. Input-angle derivatives shift one encoding gate at
a time and sum over occurrences, since with reuploading a feature appears in
several gates.

A central finite-difference mode over the full forward pass is provided as a
cross-check.
"""

from __future__ import annotations

import numpy as np

from .core import GateOp, run_circuit_batch, run_circuit_blocks, expectations_z_batch
from .errors import NumericalError
from .model import MultiVqcModel, nll_from_scores, rescale_derivative
from .params import ParamStore

SHIFT = np.pi / 2.0


def expectation_gradient(
    n_qubits: int,
    gates: tuple[GateOp, ...] | list[GateOp],
    params: np.ndarray | ParamStore,
    features: np.ndarray | None,
    measured_qubit: int,
) -> np.ndarray:
    """Gradient of one circuit's single-qubit Z expectation w.r.t. each of
    its parameters; two circuit evaluations per parameter."""
    values = np.asarray(getattr(params, "values", params), dtype=np.float64)
    feats = None if features is None else np.asarray(features, dtype=np.float64)[None, :]

    def run(vals: np.ndarray) -> float:
        amps = run_circuit_batch(n_qubits, gates, params=vals, features=feats)
        return float(expectations_z_batch(amps, [measured_qubit], n_qubits)[0, 0])

    grad = np.zeros(values.shape[0], dtype=np.float64)
    for p in range(values.shape[0]):
        plus = values.copy()
        plus[p] += SHIFT
        minus = values.copy()
        minus[p] -= SHIFT
        grad[p] = 0.5 * (run(plus) - run(minus))
    return grad


def stage_parameter_jacobian(
    model: MultiVqcModel, stage: int, inputs: np.ndarray, stage_params: np.ndarray
) -> np.ndarray:
    """(batch, n_measured, n_params) Jacobian of one circuit's expectations
    w.r.t. its own parameters, inputs held fixed.

    All 2*n_params shifted parameter vectors run as blocks of one batched
    evaluation instead of separate circuit calls."""
    n_params = stage_params.shape[0]
    batch = inputs.shape[0]
    cfg = model.stages[stage]
    if n_params == 0:
        return np.zeros((batch, cfg.n_measured, 0), dtype=np.float64)
    blocks = np.repeat(stage_params[None, :], 2 * n_params, axis=0)
    rows = np.arange(n_params)
    blocks[2 * rows, rows] += SHIFT
    blocks[2 * rows + 1, rows] -= SHIFT
    amps = run_circuit_blocks(
        cfg.n_qubits, model.stage_gates[stage],
        features=inputs, param_blocks=blocks,
    )
    exp = expectations_z_batch(amps, range(cfg.n_measured), cfg.n_qubits)
    exp = exp.reshape(2 * n_params, batch, cfg.n_measured)
    jac = 0.5 * (exp[0::2] - exp[1::2])  # (n_params, batch, n_measured)
    return np.ascontiguousarray(np.transpose(jac, (1, 2, 0)))


def stage_input_jacobian(
    model: MultiVqcModel, stage: int, inputs: np.ndarray, stage_params: np.ndarray
) -> np.ndarray:
    """(batch, n_measured, n_features) Jacobian of one circuit's expectations
    w.r.t. its input angles. Each occurrence of a feature is shifted on its
    own and the contributions are summed, since with reuploading a feature
    appears in several gates. All shifted runs share one blocked evaluation."""
    batch = inputs.shape[0]
    cfg = model.stages[stage]
    gates = model.stage_gates[stage]
    occurrences = [
        (gate_index, gate.feature_id)
        for gate_index, gate in enumerate(gates)
        if gate.feature_id is not None
    ]
    jac = np.zeros((batch, cfg.n_measured, model.config.n_features), dtype=np.float64)
    if not occurrences:
        return jac
    deltas = np.zeros((2 * len(occurrences), len(gates)), dtype=np.float64)
    for row, (gate_index, _) in enumerate(occurrences):
        deltas[2 * row, gate_index] = SHIFT
        deltas[2 * row + 1, gate_index] = -SHIFT
    amps = run_circuit_blocks(
        cfg.n_qubits, gates,
        params=stage_params, features=inputs, gate_deltas=deltas,
    )
    exp = expectations_z_batch(amps, range(cfg.n_measured), cfg.n_qubits)
    exp = exp.reshape(2 * len(occurrences), batch, cfg.n_measured)
    diff = 0.5 * (exp[0::2] - exp[1::2])  # (n_occurrences, batch, n_measured)
    for row, (_, feature_id) in enumerate(occurrences):
        jac[:, :, feature_id] += diff[row]
    return jac


def score_cotangent(
    probabilities: np.ndarray, labels: np.ndarray, label_weights: np.ndarray
) -> np.ndarray:
    """d(per-sample weighted NLL)/d(class scores): w[y] * (p - onehot(y)).

    Components of each row sum to zero, reflecting the softmax's invariance
    to a shared shift of all scores."""
    labels = np.asarray(labels, dtype=np.int64)
    weights = np.asarray(label_weights, dtype=np.float64)[labels]
    onehot = np.zeros_like(probabilities)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    return weights[:, None] * (probabilities - onehot)


def batch_loss(
    model: MultiVqcModel,
    store: ParamStore,
    features: np.ndarray,
    labels: np.ndarray,
    label_weights: np.ndarray,
) -> float:
    """Mean per-sample weighted NLL over a batch."""
    trace = model.forward_batch(store, features)
    return float(nll_from_scores(trace.scores, labels, label_weights).mean())


def batch_loss_gradient(
    model: MultiVqcModel,
    store: ParamStore,
    features: np.ndarray,
    labels: np.ndarray,
    label_weights: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Mean batch loss and its gradient w.r.t. the full flat parameter vector."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    trace = model.forward_batch(store, features)
    for k, exp in enumerate(trace.stage_expectations):
        if not np.all(np.isfinite(exp)):
            raise NumericalError(f"non-finite expectation values from circuit {k}")
    losses = nll_from_scores(trace.scores, labels, label_weights)
    loss = float(losses.mean())

    batch = features.shape[0]
    cotangent = score_cotangent(trace.probabilities, labels, label_weights) / batch
    grad = np.zeros(store.total, dtype=np.float64)
    for k in range(model.config.n_vqcs - 1, -1, -1):
        inputs = trace.stage_inputs[k]
        stage_params = store.slice_for(k)
        jac_p = stage_parameter_jacobian(model, k, inputs, stage_params)
        start = store.offsets[k]
        grad[start:start + store.counts[k]] = np.einsum("bm,bmp->p", cotangent, jac_p)
        if k > 0:
            jac_in = stage_input_jacobian(model, k, inputs, stage_params)
            input_cot = np.einsum("bm,bmn->bn", cotangent, jac_in)
            cotangent = input_cot * rescale_derivative(
                trace.stage_expectations[k - 1], model.config.rescale)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite loss gradient")
    return loss, grad


def loss_gradient(
    model: MultiVqcModel,
    store: ParamStore,
    features: np.ndarray,
    label: int,
    label_weights: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Single-sample weighted loss and gradient over all parameters."""
    return batch_loss_gradient(
        model, store,
        np.asarray(features, dtype=np.float64)[None, :],
        np.asarray([label], dtype=np.int64),
        label_weights,
    )


def finite_difference_loss_gradient(
    model: MultiVqcModel,
    store: ParamStore,
    features: np.ndarray,
    labels: np.ndarray,
    label_weights: np.ndarray,
    h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of the batch loss; slow, for cross-checks."""
    grad = np.zeros(store.total, dtype=np.float64)
    for i in range(store.total):
        up = store.replaced(i, store.values[i] + h)
        down = store.replaced(i, store.values[i] - h)
        grad[i] = (
            batch_loss(model, up, features, labels, label_weights)
            - batch_loss(model, down, features, labels, label_weights)
        ) / (2.0 * h)
    return grad

"""Exact statevector simulation of few-qubit circuits.

Conventions, fixed package-wide and relied on by every test:

- Qubit 0 is the *most significant* bit of the amplitude index: for an
  n-qubit register the basis state |q0 q1 ... q_{n-1}> lives at index
  q0*2^(n-1) + q1*2^(n-2) + ... + q_{n-1}.
- Rotations are R(theta) = exp(-i*theta*P/2) for P in {X, Y, Z}. The
  canonical check is <Z> = cos(theta) after RY(theta) on |0>.

All kernels operate on arrays of shape (batch, 2**n_qubits) so a circuit
can be evaluated for a whole batch of feature vectors in one pass; the
single-state operations below are thin wrappers around them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ModelDefinitionError

MAX_QUBITS = 8


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CNOT = "CNOT"


ROTATION_KINDS = (GateKind.RX, GateKind.RY, GateKind.RZ)


@dataclass(frozen=True)
class GateOp:
    """One circuit operation.

    Rotation gates carry exactly one angle source: a fixed ``angle``, a
    trainable ``param_id``, or a data-bound ``feature_id``. CNOT carries
    none of them.
    """

    kind: GateKind
    target: int
    control: int | None = None
    angle: float | None = None
    param_id: int | None = None
    feature_id: int | None = None

    def __post_init__(self) -> None:
        sources = [s for s in (self.angle, self.param_id, self.feature_id) if s is not None]
        if self.kind == GateKind.CNOT:
            if self.control is None:
                raise ConfigError("CNOT requires a control qubit")
            if self.control == self.target:
                raise ConfigError("CNOT control and target must differ")
            if sources:
                raise ConfigError("CNOT carries no angle source")
        else:
            if self.control is not None:
                raise ConfigError(f"{self.kind.value} takes no control qubit")
            if len(sources) != 1:
                raise ConfigError(
                    f"{self.kind.value} needs exactly one of angle/param_id/feature_id"
                )

    @property
    def is_rotation(self) -> bool:
        return self.kind != GateKind.CNOT


def rotation(kind: GateKind, target: int, *, angle: float | None = None,
             param_id: int | None = None, feature_id: int | None = None) -> GateOp:
    return GateOp(kind=kind, target=target, angle=angle,
                  param_id=param_id, feature_id=feature_id)


def cnot(control: int, target: int) -> GateOp:
    return GateOp(kind=GateKind.CNOT, target=target, control=control)


@dataclass(frozen=True)
class Statevector:
    """Complex amplitude vector over ``n_qubits`` (qubit-0-major indexing)."""

    n_qubits: int
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


def new_zero_state(n_qubits: int) -> Statevector:
    """|0...0> on ``n_qubits`` qubits."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n_qubits}")
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return Statevector(n_qubits=n_qubits, amplitudes=amps)


def _check_qubit(qubit: int, n_qubits: int) -> None:
    if not 0 <= qubit < n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {n_qubits}-qubit state")


def _axis_index(n_qubits: int, qubit: int, bit: int) -> tuple:
    # Index tuple selecting one value of a qubit axis in a (batch, 2, ..., 2) view.
    idx: list = [slice(None)] * (n_qubits + 1)
    idx[1 + qubit] = bit
    return tuple(idx)


def apply_rotation_batch(amps: np.ndarray, kind: GateKind, target: int,
                         angles, n_qubits: int) -> np.ndarray:
    """Apply RX/RY/RZ to a (batch, 2**n) array; ``angles`` is a scalar or (batch,)."""
    batch = amps.shape[0]
    psi = amps.reshape(batch, *([2] * n_qubits))
    ang = np.asarray(angles, dtype=np.float64)
    if ang.ndim == 1:
        ang = ang.reshape((batch,) + (1,) * (n_qubits - 1))
    half = ang / 2.0
    i0 = _axis_index(n_qubits, target, 0)
    i1 = _axis_index(n_qubits, target, 1)
    a0 = psi[i0]
    a1 = psi[i1]
    out = np.empty_like(psi)
    if kind == GateKind.RZ:
        phase = np.exp(-1j * half)
        out[i0] = phase * a0
        out[i1] = np.conj(phase) * a1
        return out.reshape(batch, -1)
    c = np.cos(half)
    s = np.sin(half)
    if kind == GateKind.RX:
        out[i0] = c * a0 - 1j * s * a1
        out[i1] = -1j * s * a0 + c * a1
    elif kind == GateKind.RY:
        out[i0] = c * a0 - s * a1
        out[i1] = s * a0 + c * a1
    else:
        raise ConfigError(f"unknown rotation kind {kind}")
    return out.reshape(batch, -1)


def apply_cnot_batch(amps: np.ndarray, control: int, target: int, n_qubits: int) -> np.ndarray:
    """Apply CNOT to a (batch, 2**n) array: flip target where control bit is 1."""
    batch = amps.shape[0]
    psi = amps.reshape(batch, *([2] * n_qubits))
    idx10: list = [slice(None)] * (n_qubits + 1)
    idx10[1 + control] = 1
    idx11 = list(idx10)
    idx10[1 + target] = 0
    idx11[1 + target] = 1
    out = psi.copy()
    out[tuple(idx10)] = psi[tuple(idx11)]
    out[tuple(idx11)] = psi[tuple(idx10)]
    return out.reshape(batch, -1)


def _resolve_angle(gate: GateOp, params: np.ndarray | None, features: np.ndarray | None):
    if gate.angle is not None:
        return gate.angle
    if gate.param_id is not None:
        if params is None or not 0 <= gate.param_id < params.shape[0]:
            raise ModelDefinitionError(
                f"unresolvable param_id {gate.param_id} "
                f"(have {0 if params is None else params.shape[0]} parameters)"
            )
        return params[gate.param_id]
    if features is None or not 0 <= gate.feature_id < features.shape[1]:
        raise ModelDefinitionError(
            f"unresolvable feature_id {gate.feature_id} "
            f"(have {0 if features is None else features.shape[1]} features)"
        )
    return features[:, gate.feature_id]


def apply_gate(state: Statevector, gate: GateOp, resolved_angle: float | None = None) -> Statevector:
    """Apply one gate to a single state.

    ``resolved_angle`` supplies the angle for parameter- or feature-bound
    rotations (and overrides a fixed one); it is ignored for CNOT.
    """
    n = state.n_qubits
    _check_qubit(gate.target, n)
    amps = state.amplitudes.reshape(1, -1)
    if gate.kind == GateKind.CNOT:
        _check_qubit(gate.control, n)
        out = apply_cnot_batch(amps, gate.control, gate.target, n)
    else:
        angle = resolved_angle if resolved_angle is not None else gate.angle
        if angle is None:
            raise ModelDefinitionError("rotation gate needs a resolved angle")
        out = apply_rotation_batch(amps, gate.kind, gate.target, float(angle), n)
    return Statevector(n_qubits=n, amplitudes=out[0])


def expectation_z(state: Statevector, qubit: int) -> float:
    """<Z> on one qubit: P(bit=0) - P(bit=1), in [-1, 1]."""
    _check_qubit(qubit, state.n_qubits)
    return float(expectations_z_batch(state.amplitudes.reshape(1, -1), [qubit], state.n_qubits)[0, 0])


def expectations_z_batch(amps: np.ndarray, qubits, n_qubits: int) -> np.ndarray:
    """Per-qubit <Z> for a (batch, 2**n) array; returns (batch, len(qubits))."""
    batch = amps.shape[0]
    probs = (amps.real**2 + amps.imag**2).reshape(batch, *([2] * n_qubits))
    out = np.empty((batch, len(qubits)), dtype=np.float64)
    for j, q in enumerate(qubits):
        _check_qubit(q, n_qubits)
        axes = tuple(a for a in range(1, n_qubits + 1) if a != 1 + q)
        marginal = probs.sum(axis=axes) if axes else probs
        out[:, j] = marginal[:, 0] - marginal[:, 1]
    return out


def run_circuit_batch(n_qubits: int, gates, params=None, features: np.ndarray | None = None,
                      shift: tuple[int, float] | None = None) -> np.ndarray:
    """Run a gate list on |0...0> for a batch of feature rows.

    ``params`` is this circuit's flat parameter vector (anything array-like,
    including a ParamStore via its ``values``). ``features`` has shape
    (batch, n_features); with no feature-bound gates it may be None, in which
    case the batch size is 1. ``shift`` adds a delta to the resolved angle of
    the single gate at that index (used by per-occurrence shift rules).
    """
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n_qubits}")
    if params is not None:
        params = np.asarray(getattr(params, "values", params), dtype=np.float64)
    if features is not None:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ConfigError("features must be a (batch, n_features) array")
        batch = features.shape[0]
    else:
        batch = 1
    amps = np.zeros((batch, 2**n_qubits), dtype=np.complex128)
    amps[:, 0] = 1.0
    for i, gate in enumerate(gates):
        _check_qubit(gate.target, n_qubits)
        if gate.kind == GateKind.CNOT:
            _check_qubit(gate.control, n_qubits)
            amps = apply_cnot_batch(amps, gate.control, gate.target, n_qubits)
            continue
        angle = _resolve_angle(gate, params, features)
        if shift is not None and shift[0] == i:
            angle = angle + shift[1]
        amps = apply_rotation_batch(amps, gate.kind, gate.target, angle, n_qubits)
    return amps


def run_circuit(n_qubits: int, gates, params=None, features=None) -> Statevector:
    """Run a gate list on |0...0> for a single feature vector."""
    feats = None
    if features is not None:
        feats = np.asarray(features, dtype=np.float64).reshape(1, -1)
    amps = run_circuit_batch(n_qubits, gates, params=params, features=feats)
    return Statevector(n_qubits=n_qubits, amplitudes=amps[0])


def run_circuit_blocks(n_qubits: int, gates, params=None,
                       features: np.ndarray | None = None,
                       param_blocks: np.ndarray | None = None,
                       gate_deltas: np.ndarray | None = None) -> np.ndarray:
    """Evaluate one circuit under R parameter variants for B samples at once.

    Rows [r*B, (r+1)*B) of the returned (R*B, 2**n) array hold the circuit
    run with parameter vector ``param_blocks[r]`` (falling back to ``params``
    when no blocks are given) and with ``gate_deltas[r, i]`` added to gate
    i's resolved angle. Shift-rule evaluations across many parameters thus
    collapse into a single pass over the gate list.
    """
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n_qubits}")
    if params is not None:
        params = np.asarray(getattr(params, "values", params), dtype=np.float64)
    n_blocks = 1
    if param_blocks is not None:
        param_blocks = np.asarray(param_blocks, dtype=np.float64)
        n_blocks = param_blocks.shape[0]
    if gate_deltas is not None:
        gate_deltas = np.asarray(gate_deltas, dtype=np.float64)
        if gate_deltas.shape[1] != len(gates):
            raise ConfigError(
                f"gate_deltas has {gate_deltas.shape[1]} columns for "
                f"{len(gates)} gates"
            )
        if param_blocks is not None and gate_deltas.shape[0] != n_blocks:
            raise ConfigError("param_blocks and gate_deltas disagree on block count")
        n_blocks = gate_deltas.shape[0]
    if features is not None:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ConfigError("features must be a (batch, n_features) array")
        batch = features.shape[0]
    else:
        batch = 1
    total = n_blocks * batch
    amps = np.zeros((total, 2**n_qubits), dtype=np.complex128)
    amps[:, 0] = 1.0
    for i, gate in enumerate(gates):
        _check_qubit(gate.target, n_qubits)
        if gate.kind == GateKind.CNOT:
            _check_qubit(gate.control, n_qubits)
            amps = apply_cnot_batch(amps, gate.control, gate.target, n_qubits)
            continue
        if gate.param_id is not None and param_blocks is not None:
            if not 0 <= gate.param_id < param_blocks.shape[1]:
                raise ModelDefinitionError(
                    f"unresolvable param_id {gate.param_id} "
                    f"(blocks carry {param_blocks.shape[1]} parameters)"
                )
            base = param_blocks[:, gate.param_id]  # per-block, shape (R,)
        else:
            base = _resolve_angle(gate, params, features)  # scalar or (B,)
        delta = None
        if gate_deltas is not None:
            column = gate_deltas[:, i]
            if np.any(column):
                delta = column  # per-block, shape (R,)
        # Combine the block axis (R) and the sample axis (B) into (R*B,).
        if gate.param_id is not None and param_blocks is not None:
            block_vals = base + (delta if delta is not None else 0.0)
            angle = np.repeat(block_vals, batch)
        elif isinstance(base, np.ndarray):  # feature-bound, shape (B,)
            if delta is None:
                angle = np.tile(base, n_blocks) if n_blocks > 1 else base
            else:
                angle = (delta[:, None] + base[None, :]).reshape(-1)
        else:  # fixed scalar angle
            if delta is None:
                angle = base
            else:
                angle = np.repeat(base + delta, batch)
        amps = apply_rotation_batch(amps, gate.kind, gate.target, angle, n_qubits)
    return amps

"""Seeded statevector simulator with per-qubit readout-noise injection.

Conventions: basis index treats qubit 0 as the least-significant bit, so a
state reshaped to [2]*n has qubit k on axis n-1-k. Counts keys follow the
same rule (clbit 0 is the rightmost character). Sampling computes the full
measured-qubit marginal once and draws all shots from it; readout noise is
the per-qubit confusion channel applied to that marginal, which yields the
same distribution as flipping each drawn bit independently.
"""

from __future__ import annotations

import math

import numpy as np

from .circuits import Gate, QuantumCircuit
from .devices import ConfusionMatrix, Counts, DeviceSpec

DEFAULT_MAX_QUBITS = 20
UNITARY_MAX_QUBITS = 10
RNG_ALGORITHM = "numpy-pcg64"


class SimulatorError(ValueError):
    pass


class TooManyQubits(SimulatorError):
    pass


class MeasureInStatevectorPath(SimulatorError):
    pass


class NoMeasurements(SimulatorError):
    pass


class DeviceMismatch(SimulatorError):
    pass


class ZeroShots(SimulatorError):
    pass


_SQ2 = 1.0 / math.sqrt(2.0)
_FIXED_1Q = {
    "h": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "s": np.array([[1, 0], [0, 1j]], dtype=complex),
    "sdg": np.array([[1, 0], [0, -1j]], dtype=complex),
    "t": np.array([[1, 0], [0, np.exp(1j * math.pi / 4)]], dtype=complex),
    "tdg": np.array([[1, 0], [0, np.exp(-1j * math.pi / 4)]], dtype=complex),
    "sx": 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex),
}


def gate_matrix(gate: Gate) -> np.ndarray:
    """Textbook 2x2 or 4x4 matrix of a unitary gate (qubit order: first operand = LSB)."""
    if gate.name in _FIXED_1Q:
        return _FIXED_1Q[gate.name]
    if gate.name in ("rx", "ry", "rz"):
        th = gate.params[0]
        c, s = math.cos(th / 2), math.sin(th / 2)
        if gate.name == "rx":
            return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
        if gate.name == "ry":
            return np.array([[c, -s], [s, c]], dtype=complex)
        return np.array([[np.exp(-1j * th / 2), 0], [0, np.exp(1j * th / 2)]], dtype=complex)
    if gate.name == "cx":
        # control = first operand (LSB of the 2-qubit index)
        return np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
    if gate.name == "cz":
        return np.diag([1, 1, 1, -1]).astype(complex)
    if gate.name == "swap":
        return np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
    raise SimulatorError(f"gate {gate.name} has no matrix")


def _apply_1q(tensor: np.ndarray, mat: np.ndarray, qubit: int, n: int) -> np.ndarray:
    axis = n - 1 - qubit
    moved = np.moveaxis(tensor, axis, 0)
    out = np.tensordot(mat, moved, axes=([1], [0]))
    return np.moveaxis(out, 0, axis)


def _apply_2q(tensor: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    qa, qb = gate.qubits
    axa, axb = n - 1 - qa, n - 1 - qb
    out = tensor.copy()

    def sl(va, vb):
        idx = [slice(None)] * tensor.ndim
        idx[axa], idx[axb] = va, vb
        return tuple(idx)

    if gate.name == "cx":
        out[sl(1, 0)], out[sl(1, 1)] = tensor[sl(1, 1)], tensor[sl(1, 0)]
    elif gate.name == "cz":
        out[sl(1, 1)] = -tensor[sl(1, 1)]
    elif gate.name == "swap":
        out[sl(0, 1)], out[sl(1, 0)] = tensor[sl(1, 0)], tensor[sl(0, 1)]
    else:
        raise SimulatorError(f"unknown two-qubit gate {gate.name}")
    return out


def _apply_circuit(tensor: np.ndarray, circuit: QuantumCircuit) -> np.ndarray:
    n = circuit.n_qubits
    for g in circuit.gates:
        if g.name == "barrier":
            continue
        if g.name == "measure":
            raise MeasureInStatevectorPath("circuit contains measurements")
        if len(g.qubits) == 1:
            tensor = _apply_1q(tensor, gate_matrix(g), g.qubits[0], n)
        else:
            tensor = _apply_2q(tensor, g, n)
    return tensor


def statevector(circuit: QuantumCircuit, max_qubits: int = DEFAULT_MAX_QUBITS) -> np.ndarray:
    """Amplitudes of the circuit applied to |0...0>, length 2**n_qubits."""
    n = circuit.n_qubits
    if n > max_qubits:
        raise TooManyQubits(f"{n} qubits exceeds the statevector cap of {max_qubits}")
    psi = np.zeros([2] * n, dtype=complex)
    psi[(0,) * n] = 1.0
    return _apply_circuit(psi, circuit).reshape(-1)


def unitary(circuit: QuantumCircuit) -> np.ndarray:
    """Full 2^n x 2^n matrix; column b is the circuit applied to basis state |b>."""
    n = circuit.n_qubits
    if n > UNITARY_MAX_QUBITS:
        raise TooManyQubits(f"{n} qubits exceeds the unitary cap of {UNITARY_MAX_QUBITS}")
    dim = 2 ** n
    u = np.eye(dim, dtype=complex).reshape([2] * n + [dim])
    return _apply_circuit(u, circuit).reshape(dim, dim)


def apply_bit_channel(probs: np.ndarray, mat, axis: int, divisor: float = 1.0) -> np.ndarray:
    """Apply a 2x2 matrix along one bit axis of a real tensor.

    Uses explicit elementwise products (not BLAS) so results follow plain
    IEEE evaluation order; `divisor` is applied once at the end, which lets
    an inverse be expressed as integer-structured numerators over det.
    """
    (a, b), (c, d) = mat
    moved = np.moveaxis(np.asarray(probs, dtype=float), axis, 0)
    p0, p1 = moved[0], moved[1]
    out = np.empty_like(moved)
    out[0] = a * p0 + b * p1
    out[1] = c * p0 + d * p1
    if divisor != 1.0:
        out /= divisor
    return np.moveaxis(out, 0, axis)


def measured_marginal(circuit: QuantumCircuit, max_qubits: int = DEFAULT_MAX_QUBITS):
    """Ideal distribution over the measured qubits.

    Returns (probs, measured_qubits_ascending): probs is a flat array of
    length 2**m whose index-bit j corresponds to measured_qubits[j].
    """
    measures = circuit.measurements
    if not measures:
        raise NoMeasurements("circuit measures no qubits")
    base = circuit.without_measurements()
    psi = statevector(base, max_qubits=max_qubits)
    n = circuit.n_qubits
    probs = np.abs(psi.reshape([2] * n)) ** 2
    measured = sorted(g.qubits[0] for g in measures)
    drop = tuple(n - 1 - q for q in range(n) if q not in measured)
    marginal = probs.sum(axis=drop) if drop else probs
    return marginal, measured


def clbit_distribution(circuit: QuantumCircuit, max_qubits: int = DEFAULT_MAX_QUBITS) -> dict:
    """Exact outcome distribution keyed by clbit strings (zeros included)."""
    marginal, measured = measured_marginal(circuit, max_qubits=max_qubits)
    flat = marginal.reshape(-1)
    rank_of = {q: j for j, q in enumerate(measured)}
    n_clbits = circuit.n_clbits
    out: dict[str, float] = {}
    for v in range(flat.size):
        chars = ["0"] * n_clbits
        for g in circuit.measurements:
            bit = (v >> rank_of[g.qubits[0]]) & 1
            chars[n_clbits - 1 - g.clbit] = "01"[bit]
        out["".join(chars)] = out.get("".join(chars), 0.0) + float(flat[v])
    return out


def sample(
    circuit: QuantumCircuit,
    shots: int,
    seed: int | None,
    device: DeviceSpec,
    noise: bool = False,
) -> Counts:
    """Draw `shots` outcomes from the measured-qubit distribution.

    With noise on, each measured bit passes through the device's per-qubit
    confusion channel. Deterministic for a fixed (circuit, shots, seed,
    device, noise) tuple.
    """
    if shots < 1:
        raise ZeroShots(f"shots must be positive, got {shots}")
    if circuit.n_qubits > device.n_qubits:
        raise DeviceMismatch(
            f"circuit needs {circuit.n_qubits} qubits, device {device.id} has {device.n_qubits}"
        )
    marginal, measured = measured_marginal(circuit)
    m = len(measured)
    if noise:
        for rank, q in enumerate(measured):
            err = device.readout_errors[q]
            if err.eps01 == 0.0 and err.eps10 == 0.0:
                continue
            axis = m - 1 - rank
            marginal = apply_bit_channel(marginal, ConfusionMatrix(err.eps01, err.eps10).matrix, axis)
    p = marginal.reshape(-1)
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    drawn = rng.multinomial(shots, p)

    rank_of = {q: j for j, q in enumerate(measured)}
    n_clbits = circuit.n_clbits
    counts: dict[str, int] = {}
    for v in np.nonzero(drawn)[0]:
        chars = ["0"] * n_clbits
        for g in circuit.measurements:
            bit = (int(v) >> rank_of[g.qubits[0]]) & 1
            chars[n_clbits - 1 - g.clbit] = "01"[bit]
        key = "".join(chars)
        counts[key] = counts.get(key, 0) + int(drawn[v])
    return Counts(counts, shots)


def calibrate_readout(device: DeviceSpec, shots: int, seed: int | None) -> list[ConfusionMatrix]:
    """Estimate per-qubit confusion matrices from two device-wide runs.

    Prepares all-|0> and all-|1> (X on every qubit), measures every qubit,
    and turns the empirical flip frequencies into column-stochastic
    matrices (columns sum to 1 exactly).
    """
    if shots < 1:
        raise ZeroShots(f"calibration needs at least one shot, got {shots}")
    n = device.n_qubits
    meas = tuple(Gate("measure", (q,), clbit=q) for q in range(n))
    prep0 = QuantumCircuit(n, n, meas)
    prep1 = QuantumCircuit(n, n, tuple(Gate("x", (q,)) for q in range(n)) + meas)
    base = 0 if seed is None else seed
    counts0 = sample(prep0, shots, base, device, noise=True)
    counts1 = sample(prep1, shots, base + 1, device, noise=True)

    matrices = []
    for q in range(n):
        pos = n - 1 - q
        ones0 = sum(v for k, v in counts0.counts.items() if k[pos] == "1")
        zeros1 = sum(v for k, v in counts1.counts.items() if k[pos] == "0")
        matrices.append(ConfusionMatrix(eps01=ones0 / shots, eps10=zeros1 / shots))
    return matrices

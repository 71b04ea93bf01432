"""Readout error mitigation by tensor-product confusion-matrix inversion.

Each measured clbit gets one 2x2 confusion matrix; the full inverse is the
tensor product of the per-qubit inverses, applied axis by axis in
O(m * 2^m) without ever materializing the 2^m x 2^m matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .devices import ConfusionMatrix, Counts
from .simulator import apply_bit_channel

MAX_MEASURED_QUBITS = 16


class MitigationError(ValueError):
    pass


class SingularConfusionMatrix(MitigationError):
    pass


class DimensionMismatch(MitigationError):
    pass


class TooManyMeasuredQubits(MitigationError):
    pass


@dataclass(frozen=True)
class QuasiDistribution:
    """Signed distribution over bitstrings; raw weights sum to 1."""

    raw: dict
    n_clbits: int

    def clipped(self) -> dict:
        """Non-negative view: negatives dropped, renormalized to sum 1."""
        pos = {k: w for k, w in self.raw.items() if w > 0.0}
        total = sum(pos.values())
        if total == 0.0:
            return {}
        return {k: w / total for k, w in pos.items()}

    @property
    def raw_sum(self) -> float:
        return sum(self.raw.values())


def _key(index: int, width: int) -> str:
    return format(index, f"0{width}b")


def counts_to_vector(counts: Counts, width: int) -> np.ndarray:
    """Empirical distribution as a 2^width vector; index bit j = clbit j."""
    vec = np.zeros(2 ** width)
    for key, value in counts.counts.items():
        vec[int(key, 2)] = value / counts.shots
    return vec


class Mitigator:
    """Holds per-clbit inverse confusion matrices; apply() is pure."""

    def __init__(self, matrices):
        self.matrices = tuple(matrices)
        for i, m in enumerate(self.matrices):
            if m.det <= 0.0:
                raise SingularConfusionMatrix(
                    f"matrix {i}: eps01 + eps10 = {m.eps01 + m.eps10} >= 1"
                )

    @property
    def n_qubits(self) -> int:
        return len(self.matrices)

    def apply_forward_vector(self, vec: np.ndarray) -> np.ndarray:
        """The noise channel itself: tensor-product of the A_q, axis by axis."""
        m = self.n_qubits
        tensor = np.asarray(vec, dtype=float).reshape([2] * m)
        for clbit, cm in enumerate(self.matrices):
            tensor = apply_bit_channel(tensor, cm.matrix, m - 1 - clbit)
        return tensor.reshape(-1)

    def apply_inverse_vector(self, vec: np.ndarray) -> np.ndarray:
        m = self.n_qubits
        tensor = np.asarray(vec, dtype=float).reshape([2] * m)
        for clbit, cm in enumerate(self.matrices):
            # integer-structured numerator over det keeps exact cancellations exact
            numerator = ((1.0 - cm.eps10, -cm.eps10), (-cm.eps01, 1.0 - cm.eps01))
            tensor = apply_bit_channel(tensor, numerator, m - 1 - clbit, divisor=cm.det)
        return tensor.reshape(-1)

    def apply(self, counts: Counts) -> QuasiDistribution:
        """Invert the readout channel on measured counts.

        Returns the raw quasi-distribution (weights sum to 1, may be
        negative); use .clipped() for a presentable histogram.
        """
        m = self.n_qubits
        if counts.n_clbits != m:
            raise DimensionMismatch(
                f"counts have {counts.n_clbits} clbits, mitigator covers {m}"
            )
        if m > MAX_MEASURED_QUBITS:
            raise TooManyMeasuredQubits(f"{m} measured qubits exceeds cap {MAX_MEASURED_QUBITS}")
        raw = self.apply_inverse_vector(counts_to_vector(counts, m))
        weights = {_key(i, m): float(w) for i, w in enumerate(raw) if w != 0.0}
        return QuasiDistribution(raw=weights, n_clbits=m)


def build_mitigator(matrices) -> Mitigator:
    """One ConfusionMatrix per measured clbit, in clbit order."""
    return Mitigator(matrices)


def matrices_for_measures(device, transpiled_circuit) -> list[ConfusionMatrix]:
    """Calibration matrices for the physical qubits a circuit measures, in clbit order.

    Clbits no measurement writes to get an identity matrix (their bit is a
    constant 0 and carries no readout noise).
    """
    if device.calibration is None:
        raise MitigationError(f"device {device.id} has no calibration snapshot")
    mats = [ConfusionMatrix.identity()] * transpiled_circuit.n_clbits
    for g in transpiled_circuit.measurements:
        mats[g.clbit] = device.calibration[g.qubits[0]]
    return mats

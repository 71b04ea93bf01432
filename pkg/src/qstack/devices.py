"""Device data model: spec, readout-error calibration snapshot, and counts.

The JSON form produced by `device_to_json` is both the wire format served
by the HTTP API and the seed-data format for device registration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .circuits import GATE_NAMES, CircuitError, Topology


@dataclass(frozen=True)
class QubitReadoutError:
    """Per-qubit classical bit-flip rates: eps01 = P(read 1 | true 0), eps10 = P(read 0 | true 1)."""

    eps01: float = 0.0
    eps10: float = 0.0

    def __post_init__(self):
        for v in (self.eps01, self.eps10):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"readout error rate {v} outside [0, 1]")
        if self.eps01 + self.eps10 >= 1.0:
            raise ValueError(f"eps01 + eps10 = {self.eps01 + self.eps10} >= 1: confusion matrix not invertible")


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 column-stochastic readout matrix; A[read][true] = P(read | true)."""

    eps01: float
    eps10: float

    def __post_init__(self):
        for v in (self.eps01, self.eps10):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"confusion rate {v} outside [0, 1]")

    @property
    def matrix(self):
        return ((1.0 - self.eps01, self.eps10), (self.eps01, 1.0 - self.eps10))

    @property
    def det(self) -> float:
        return 1.0 - self.eps01 - self.eps10

    @staticmethod
    def from_matrix(m) -> "ConfusionMatrix":
        (a00, a01), (a10, a11) = m
        if abs((a00 + a10) - 1.0) > 1e-9 or abs((a01 + a11) - 1.0) > 1e-9:
            raise ValueError("confusion matrix columns must sum to 1")
        return ConfusionMatrix(eps01=float(a10), eps10=float(a01))

    @staticmethod
    def identity() -> "ConfusionMatrix":
        return ConfusionMatrix(0.0, 0.0)


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    n_qubits: int
    topology: Topology
    basis_gates: tuple[str, ...]
    readout_errors: tuple[QubitReadoutError, ...]
    status: str = "available"
    calibrated_at: str | None = None
    calibration: tuple[ConfusionMatrix, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "basis_gates", tuple(self.basis_gates))
        object.__setattr__(self, "readout_errors", tuple(self.readout_errors))
        if self.calibration is not None:
            object.__setattr__(self, "calibration", tuple(self.calibration))
        if self.topology.n_qubits != self.n_qubits:
            raise CircuitError(
                f"topology is over {self.topology.n_qubits} qubits, device has {self.n_qubits}"
            )
        if len(self.readout_errors) != self.n_qubits:
            raise ValueError(f"need {self.n_qubits} readout error entries, got {len(self.readout_errors)}")
        unknown = set(self.basis_gates) - GATE_NAMES
        if unknown:
            raise ValueError(f"unknown basis gates {sorted(unknown)}")
        if self.status not in ("available", "unavailable"):
            raise ValueError(f"bad device status {self.status!r}")

    def with_calibration(self, matrices, calibrated_at: str) -> "DeviceSpec":
        return DeviceSpec(
            id=self.id, n_qubits=self.n_qubits, topology=self.topology,
            basis_gates=self.basis_gates, readout_errors=self.readout_errors,
            status=self.status, calibrated_at=calibrated_at, calibration=tuple(matrices),
        )

    def with_status(self, status: str) -> "DeviceSpec":
        return DeviceSpec(
            id=self.id, n_qubits=self.n_qubits, topology=self.topology,
            basis_gates=self.basis_gates, readout_errors=self.readout_errors,
            status=status, calibrated_at=self.calibrated_at, calibration=self.calibration,
        )


DEFAULT_BASIS = ("rz", "sx", "x", "cx")


def device_to_json(device: DeviceSpec) -> dict:
    doc = {
        "id": device.id,
        "n_qubits": device.n_qubits,
        "edges": sorted([a, b] for a, b in device.topology.edges),
        "basis_gates": list(device.basis_gates),
        "readout_errors": [{"eps01": r.eps01, "eps10": r.eps10} for r in device.readout_errors],
        "status": device.status,
        "calibrated_at": device.calibrated_at,
    }
    if device.calibration is not None:
        doc["calibration"] = [[list(row) for row in m.matrix] for m in device.calibration]
    return doc


def device_from_json(doc: dict) -> DeviceSpec:
    n = int(doc["n_qubits"])
    topo = Topology(n, frozenset((int(a), int(b)) for a, b in doc.get("edges", [])))
    errors = tuple(
        QubitReadoutError(float(r.get("eps01", 0.0)), float(r.get("eps10", 0.0)))
        for r in doc.get("readout_errors", [{} for _ in range(n)])
    )
    calibration = None
    if doc.get("calibration") is not None:
        calibration = tuple(ConfusionMatrix.from_matrix(m) for m in doc["calibration"])
    return DeviceSpec(
        id=str(doc["id"]),
        n_qubits=n,
        topology=topo,
        basis_gates=tuple(doc.get("basis_gates", DEFAULT_BASIS)),
        readout_errors=errors,
        status=doc.get("status", "available"),
        calibrated_at=doc.get("calibrated_at"),
        calibration=calibration,
    )


@dataclass(frozen=True)
class Counts:
    """Measured bitstring histogram. Character k (0 = leftmost) holds clbit
    n_clbits-1-k, so clbit 0 is the rightmost character."""

    counts: dict = field(default_factory=dict)
    shots: int = 0

    def __post_init__(self):
        total = 0
        width = None
        for key, value in self.counts.items():
            if width is None:
                width = len(key)
            if len(key) != width:
                raise ValueError(f"counts keys have mixed lengths ({len(key)} vs {width})")
            if set(key) - {"0", "1"}:
                raise ValueError(f"counts key {key!r} is not a bitstring")
            if value <= 0:
                raise ValueError(f"count for {key!r} must be positive")
            total += value
        if total != self.shots:
            raise ValueError(f"counts sum to {total}, shots = {self.shots}")

    @property
    def n_clbits(self) -> int:
        return len(next(iter(self.counts))) if self.counts else 0

    def probabilities(self) -> dict:
        return {k: v / self.shots for k, v in self.counts.items()}

    def to_json(self) -> dict:
        return {"counts": dict(self.counts), "shots": self.shots}

    @staticmethod
    def from_json(doc: dict) -> "Counts":
        return Counts({str(k): int(v) for k, v in doc["counts"].items()}, int(doc["shots"]))

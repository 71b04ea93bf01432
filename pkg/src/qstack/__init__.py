"""qstack: a self-hosted cloud quantum computing stack.

Circuit IR and OpenQASM subset, a seeded noisy statevector simulator,
a pluggable transpiler, multi-programming, readout-error mitigation,
Pauli expectation estimation, a FIFO job engine with sessions, an HTTP
API, and a CLI client.
"""

from .circuits import CircuitMetrics, Gate, QuantumCircuit, Topology, circuit_metrics
from .devices import ConfusionMatrix, Counts, DeviceSpec, QubitReadoutError
from .operators import Observable, PauliString, parse_operator
from .qasm import emit_qasm, parse_qasm
from .simulator import calibrate_readout, sample, statevector, unitary

__version__ = "0.1.0"

__all__ = [
    "CircuitMetrics", "ConfusionMatrix", "Counts", "DeviceSpec", "Gate",
    "Observable", "PauliString", "QuantumCircuit", "QubitReadoutError",
    "Topology", "calibrate_readout", "circuit_metrics", "emit_qasm",
    "parse_operator", "parse_qasm", "sample", "statevector", "unitary",
]

"""Shared test utilities: random circuit/topology generators and oracles."""

from __future__ import annotations

import math

import numpy as np

from qstack.circuits import GATE_SIGNATURES, Gate, QuantumCircuit, Topology
from qstack.devices import DEFAULT_BASIS, DeviceSpec, QubitReadoutError
from qstack.simulator import unitary

UNITARY_GATES = [n for n in GATE_SIGNATURES if n != "measure"]
ONE_QUBIT_GATES = [n for n, (q, _) in GATE_SIGNATURES.items() if q == 1 and n != "measure"]


def random_circuit(rng: np.random.Generator, n_qubits: int, n_gates: int,
                   measure_all: bool = False, allow_barrier: bool = True) -> QuantumCircuit:
    """Seeded random circuit over the full supported gate set (terminal measures)."""
    gates = []
    for _ in range(n_gates):
        choices = UNITARY_GATES + (["barrier"] if allow_barrier else [])
        name = choices[rng.integers(len(choices))]
        if name == "barrier":
            k = int(rng.integers(0, n_qubits + 1))
            qs = tuple(sorted(rng.choice(n_qubits, size=k, replace=False).tolist()))
            gates.append(Gate("barrier", qs))
            continue
        arity, n_params = GATE_SIGNATURES[name]
        if arity == 2 and n_qubits < 2:
            name, arity, n_params = "h", 1, 0
        qs = tuple(rng.choice(n_qubits, size=arity, replace=False).tolist())
        params = tuple(float(rng.uniform(-2 * math.pi, 2 * math.pi)) for _ in range(n_params))
        gates.append(Gate(name, qs, params))
    n_clbits = 0
    if measure_all:
        n_clbits = n_qubits
        gates += [Gate("measure", (q,), clbit=q) for q in range(n_qubits)]
    return QuantumCircuit(n_qubits, n_clbits, tuple(gates))


def random_connected_topology(rng: np.random.Generator, n: int, extra_edges: int = 2) -> Topology:
    """Random spanning tree plus a few extra edges."""
    edges = set()
    order = rng.permutation(n).tolist()
    for i in range(1, n):
        j = order[int(rng.integers(0, i))]
        edges.add((min(order[i], j), max(order[i], j)))
    for _ in range(extra_edges):
        a, b = rng.choice(n, size=2, replace=False).tolist()
        edges.add((min(a, b), max(a, b)))
    return Topology(n, frozenset(edges))


def make_device(device_id: str, topology: Topology, eps=None,
                basis=DEFAULT_BASIS, status: str = "available") -> DeviceSpec:
    n = topology.n_qubits
    if eps is None:
        errors = tuple(QubitReadoutError() for _ in range(n))
    else:
        errors = tuple(QubitReadoutError(e01, e10) for e01, e10 in eps)
    return DeviceSpec(device_id, n, topology, tuple(basis), errors)


def line_device(device_id: str, n: int, eps=None) -> DeviceSpec:
    return make_device(device_id, Topology.line(n), eps)


def wire_permutation_matrix(initial_layout, final_layout, n: int) -> np.ndarray:
    """Unitary moving the bit at position initial[v] to position final[v]."""
    dim = 2 ** n
    p = np.zeros((dim, dim))
    for b in range(dim):
        out = 0
        for v in range(len(initial_layout)):
            bit = (b >> initial_layout[v]) & 1
            out |= bit << final_layout[v]
        # wires not owned by any virtual qubit keep their bit in place
        owned_in = set(initial_layout)
        owned_out = set(final_layout)
        free_in = [w for w in range(n) if w not in owned_in]
        free_out = [w for w in range(n) if w not in owned_out]
        for src, dst in zip(free_in, free_out):
            out |= ((b >> src) & 1) << dst
        p[out, b] = 1.0
    return p


def permuted_fidelity(u_in: np.ndarray, v_out: np.ndarray, initial_layout, final_layout) -> float:
    """|tr(V^dag P U)| / 2^n with P induced by the layouts."""
    n = int(math.log2(v_out.shape[0]))
    if u_in.shape[0] != v_out.shape[0]:
        # pad the input unitary with identity wires up to the output width
        pad = n - int(math.log2(u_in.shape[0]))
        u_in = np.kron(np.eye(2 ** pad), u_in)
    p = wire_permutation_matrix(initial_layout, final_layout, n)
    return abs(np.trace(v_out.conj().T @ (p @ u_in))) / (2 ** n)


def circuit_fidelity(original: QuantumCircuit, transpiled) -> float:
    u = unitary(original.without_measurements())
    v = unitary(transpiled.circuit.without_measurements())
    return permuted_fidelity(u, v, transpiled.initial_layout, transpiled.final_layout)


def pauli_matrix(pauli, n_qubits: int) -> np.ndarray:
    """Dense matrix of a Pauli string on n qubits (qubit 0 = least significant)."""
    single = {
        "I": np.eye(2, dtype=complex),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    out = np.array([[1.0 + 0j]])
    for q in range(n_qubits - 1, -1, -1):
        out = np.kron(out, single[pauli.get(q) or "I"])
    return out


def observable_matrix(observable, n_qubits: int) -> np.ndarray:
    h = np.zeros((2 ** n_qubits, 2 ** n_qubits), dtype=complex)
    for pauli, coeff in observable.terms.items():
        h += coeff * pauli_matrix(pauli, n_qubits)
    return h

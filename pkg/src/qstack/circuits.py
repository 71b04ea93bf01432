"""Gate-list circuit IR and structural metrics.

Circuits are immutable after construction and validated eagerly: operand
arity, index bounds, parameter counts, and the terminal-measurement rule
(no gate may touch a qubit that has already been measured).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class CircuitError(ValueError):
    """Structural violation in a gate or circuit."""


# name -> (qubit arity, param arity); barrier is variadic and handled apart
GATE_SIGNATURES = {
    "h": (1, 0), "x": (1, 0), "y": (1, 0), "z": (1, 0),
    "s": (1, 0), "sdg": (1, 0), "t": (1, 0), "tdg": (1, 0),
    "sx": (1, 0),
    "rx": (1, 1), "ry": (1, 1), "rz": (1, 1),
    "cx": (2, 0), "cz": (2, 0), "swap": (2, 0),
    "measure": (1, 0),
}
TWO_QUBIT_GATES = frozenset({"cx", "cz", "swap"})
GATE_NAMES = frozenset(GATE_SIGNATURES) | {"barrier"}


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    clbit: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.name not in GATE_NAMES:
            raise CircuitError(f"unknown gate '{self.name}'")
        if self.name == "barrier":
            n_q, n_p = len(self.qubits), 0
        else:
            n_q, n_p = GATE_SIGNATURES[self.name]
        if len(self.qubits) != n_q:
            raise CircuitError(f"{self.name} takes {n_q} qubit(s), got {len(self.qubits)}")
        if len(self.params) != n_p:
            raise CircuitError(f"{self.name} takes {n_p} parameter(s), got {len(self.params)}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"{self.name} has repeated qubit operands {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise CircuitError(f"negative qubit index in {self.name}")
        for p in self.params:
            if not math.isfinite(p):
                raise CircuitError(f"non-finite parameter {p!r} in {self.name}")
        if self.name == "measure":
            if self.clbit is None or self.clbit < 0:
                raise CircuitError("measure requires a non-negative clbit")
        elif self.clbit is not None:
            raise CircuitError(f"{self.name} does not take a clbit")

    @property
    def is_two_qubit(self) -> bool:
        return self.name in TWO_QUBIT_GATES


# terse constructors, mostly for tests and generated circuits
def h(q): return Gate("h", (q,))
def x(q): return Gate("x", (q,))
def y(q): return Gate("y", (q,))
def z(q): return Gate("z", (q,))
def s(q): return Gate("s", (q,))
def sdg(q): return Gate("sdg", (q,))
def t(q): return Gate("t", (q,))
def tdg(q): return Gate("tdg", (q,))
def sx(q): return Gate("sx", (q,))
def rx(q, theta): return Gate("rx", (q,), (theta,))
def ry(q, theta): return Gate("ry", (q,), (theta,))
def rz(q, theta): return Gate("rz", (q,), (theta,))
def cx(c, tgt): return Gate("cx", (c, tgt))
def cz(a, b): return Gate("cz", (a, b))
def swap(a, b): return Gate("swap", (a, b))
def measure(q, c): return Gate("measure", (q,), clbit=c)
def barrier(*qs): return Gate("barrier", tuple(qs))


@dataclass(frozen=True)
class QuantumCircuit:
    n_qubits: int
    n_clbits: int = 0
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise CircuitError("circuit needs at least one qubit")
        if self.n_clbits < 0:
            raise CircuitError("negative clbit count")
        measured: set[int] = set()
        used_clbits: set[int] = set()
        for g in self.gates:
            for q in g.qubits:
                if q >= self.n_qubits:
                    raise CircuitError(f"{g.name} on qubit {q} out of range (n_qubits={self.n_qubits})")
                if q in measured:
                    raise CircuitError(f"{g.name} acts on qubit {q} after its measurement")
            if g.name == "measure":
                if g.clbit >= self.n_clbits:
                    raise CircuitError(f"measure clbit {g.clbit} out of range (n_clbits={self.n_clbits})")
                if g.clbit in used_clbits:
                    raise CircuitError(f"clbit {g.clbit} written by two measurements")
                used_clbits.add(g.clbit)
                measured.add(g.qubits[0])

    @property
    def measurements(self) -> list[Gate]:
        return [g for g in self.gates if g.name == "measure"]

    def without_measurements(self) -> "QuantumCircuit":
        return QuantumCircuit(self.n_qubits, 0, tuple(g for g in self.gates if g.name != "measure"))

    def with_gates(self, extra) -> "QuantumCircuit":
        return QuantumCircuit(self.n_qubits, self.n_clbits, self.gates + tuple(extra))


@dataclass(frozen=True)
class Topology:
    """Undirected coupling graph over device qubits."""

    n_qubits: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        norm = set()
        for e in self.edges:
            a, b = e
            if a == b:
                raise CircuitError(f"self-loop edge on qubit {a}")
            if not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise CircuitError(f"edge {e} out of range for {self.n_qubits} qubits")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))
        if self.n_qubits < 1:
            raise CircuitError("topology needs at least one qubit")

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def neighbors(self, q: int) -> list[int]:
        out = [b if a == q else a for a, b in self.edges if q in (a, b)]
        return sorted(out)

    def shortest_path(self, src: int, dst: int, allowed=None) -> list[int] | None:
        """BFS path src..dst, optionally restricted to `allowed` qubits. None if disconnected."""
        if src == dst:
            return [src]
        ok = (lambda q: True) if allowed is None else (lambda q: q in allowed)
        prev = {src: None}
        frontier = [src]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self.neighbors(u):
                    if v in prev or not ok(v):
                        continue
                    prev[v] = u
                    if v == dst:
                        path = [v]
                        while prev[path[-1]] is not None:
                            path.append(prev[path[-1]])
                        return path[::-1]
                    nxt.append(v)
            frontier = nxt
        return None

    @staticmethod
    def line(n: int) -> "Topology":
        return Topology(n, frozenset((i, i + 1) for i in range(n - 1)))

    @staticmethod
    def full(n: int) -> "Topology":
        return Topology(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))


@dataclass(frozen=True)
class CircuitMetrics:
    gate_count: int
    two_qubit_count: int
    depth: int


def circuit_metrics(circuit: QuantumCircuit) -> CircuitMetrics:
    """Gate count (barriers excluded), 2q-gate count, and DAG depth.

    Depth is the longest chain over shared qubit/clbit wires; barriers
    synchronize their wires without contributing a level of their own.
    """
    gate_count = 0
    two_qubit_count = 0
    qubit_level = [0] * circuit.n_qubits
    clbit_level = [0] * circuit.n_clbits
    for g in circuit.gates:
        if g.name == "barrier" and not g.qubits:
            # bare barrier synchronizes every qubit wire
            lvl = max(qubit_level, default=0)
            for q in range(circuit.n_qubits):
                qubit_level[q] = lvl
            continue
        base = max((qubit_level[q] for q in g.qubits), default=0)
        if g.name == "measure":
            base = max(base, clbit_level[g.clbit])
        if g.name == "barrier":
            lvl = base
        else:
            gate_count += 1
            if g.is_two_qubit:
                two_qubit_count += 1
            lvl = base + 1
        for q in g.qubits:
            qubit_level[q] = lvl
        if g.name == "measure":
            clbit_level[g.clbit] = lvl
    depth = max(qubit_level + clbit_level, default=0)
    return CircuitMetrics(gate_count, two_qubit_count, depth)

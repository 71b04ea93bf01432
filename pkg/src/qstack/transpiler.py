"""Pluggable transpiler framework with a built-in default pipeline.

The default pipeline rewrites gates into the {rz, sx, x, cx} basis with a
fixed table, routes two-qubit gates over the device topology by inserting
SWAPs (as cx triples) along BFS shortest paths, defers measurements to the
end of the circuit, and runs a small peephole optimizer. Equivalence is
always up to global phase; layouts record where each virtual qubit starts
and ends up.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

from .circuits import (
    CircuitMetrics,
    Gate,
    QuantumCircuit,
    TWO_QUBIT_GATES,
    circuit_metrics,
)
from .devices import DeviceSpec


class TranspilerError(Exception):
    pass


class DuplicateName(TranspilerError):
    pass


class UnknownTranspiler(TranspilerError):
    pass


class CircuitTooLarge(TranspilerError):
    pass


class RoutingFailure(TranspilerError):
    pass


class NotConformant(TranspilerError):
    """Identity transpiler input that already needs work."""


class AllTranspilersFailed(TranspilerError):
    pass


@dataclass(frozen=True)
class TranspileResult:
    circuit: QuantumCircuit
    initial_layout: tuple[int, ...]
    final_layout: tuple[int, ...]
    metrics: CircuitMetrics
    transpiler_name: str

    def to_json(self) -> dict:
        return {
            "initial_layout": list(self.initial_layout),
            "final_layout": list(self.final_layout),
            "metrics": {
                "gate_count": self.metrics.gate_count,
                "two_qubit_count": self.metrics.two_qubit_count,
                "depth": self.metrics.depth,
            },
            "transpiler_name": self.transpiler_name,
        }


def conformance_violations(circuit: QuantumCircuit, device: DeviceSpec) -> list[str]:
    """Structural check: basis-gate membership and edge-respecting 2q gates."""
    allowed = set(device.basis_gates) | {"measure", "barrier"}
    problems = []
    for g in circuit.gates:
        if g.name not in allowed:
            problems.append(f"gate {g.name} outside basis {sorted(device.basis_gates)}")
        if g.name in TWO_QUBIT_GATES and not device.topology.has_edge(*g.qubits):
            problems.append(f"{g.name} on {g.qubits} is not a topology edge")
    return problems


_PI = math.pi


def _rewrite_gate(g: Gate) -> list[Gate]:
    """Fixed rewrite table into {rz, sx, x, cx}, exact up to global phase."""
    q = g.qubits[0]
    if g.name in ("x", "sx", "cx"):
        return [g]
    if g.name == "rz":
        return [g]
    if g.name == "z":
        return [Gate("rz", (q,), (_PI,))]
    if g.name == "s":
        return [Gate("rz", (q,), (_PI / 2,))]
    if g.name == "sdg":
        return [Gate("rz", (q,), (-_PI / 2,))]
    if g.name == "t":
        return [Gate("rz", (q,), (_PI / 4,))]
    if g.name == "tdg":
        return [Gate("rz", (q,), (-_PI / 4,))]
    if g.name == "h":
        return [Gate("rz", (q,), (_PI / 2,)), Gate("sx", (q,)), Gate("rz", (q,), (_PI / 2,))]
    if g.name == "y":
        # Y = i X Z: apply Z then X
        return [Gate("rz", (q,), (_PI,)), Gate("x", (q,))]
    if g.name == "rx":
        # RX(t) = H RZ(t) H
        h_seq = _rewrite_gate(Gate("h", (q,)))
        return h_seq + [Gate("rz", (q,), g.params)] + h_seq
    if g.name == "ry":
        # RY(t) = S RX(t) SDG: apply sdg, rx, s
        return (
            [Gate("rz", (q,), (-_PI / 2,))]
            + _rewrite_gate(Gate("rx", (q,), g.params))
            + [Gate("rz", (q,), (_PI / 2,))]
        )
    if g.name == "cz":
        a, b = g.qubits
        h_b = _rewrite_gate(Gate("h", (b,)))
        return h_b + [Gate("cx", (a, b))] + h_b
    if g.name == "swap":
        a, b = g.qubits
        return [Gate("cx", (a, b)), Gate("cx", (b, a)), Gate("cx", (a, b))]
    raise TranspilerError(f"no rewrite rule for {g.name}")


def _norm_angle(theta: float) -> float:
    return theta % (2 * _PI)


def _is_zero_angle(theta: float, tol: float = 1e-12) -> bool:
    r = _norm_angle(theta)
    return r < tol or (2 * _PI - r) < tol


def _touches(g: Gate, n_qubits: int) -> tuple[int, ...]:
    if g.name == "barrier" and not g.qubits:
        return tuple(range(n_qubits))
    return g.qubits


def peephole(gates, n_qubits: int) -> list[Gate]:
    """Cancel adjacent identical cx pairs, merge consecutive rz, drop rz(0)."""
    out: list[Gate] = []

    def last_touching(qubits) -> int:
        for j in range(len(out) - 1, -1, -1):
            if any(q in qubits for q in _touches(out[j], n_qubits)):
                return j
        return -1

    for g in gates:
        if g.name == "rz":
            if _is_zero_angle(g.params[0]):
                continue
            j = last_touching(g.qubits)
            if j >= 0 and out[j].name == "rz" and out[j].qubits == g.qubits:
                merged = out[j].params[0] + g.params[0]
                out.pop(j)
                if not _is_zero_angle(merged):
                    out.insert(j, Gate("rz", g.qubits, (merged,)))
                continue
            out.append(g)
        elif g.name == "cx":
            j = last_touching(g.qubits)
            if j >= 0 and out[j] == g:
                out.pop(j)
                continue
            out.append(g)
        else:
            out.append(g)
    return out


def default_transpiler(circuit: QuantumCircuit, device: DeviceSpec, options=None) -> TranspileResult:
    """Basis rewrite -> trivial layout -> BFS SWAP routing -> peephole."""
    options = options or {}
    n_virtual = circuit.n_qubits
    n_phys = device.n_qubits
    missing = {"rz", "sx", "x", "cx"} - set(device.basis_gates)
    if missing:
        raise TranspilerError(f"default pipeline targets rz/sx/x/cx; device lacks {sorted(missing)}")

    layout = list(range(n_virtual))  # virtual -> physical
    occupant = {p: v for v, p in enumerate(layout)}  # physical -> virtual
    topo = device.topology
    body: list[Gate] = []
    deferred_measures: list[Gate] = []

    def emit_swap(pa: int, pb: int):
        body.extend([Gate("cx", (pa, pb)), Gate("cx", (pb, pa)), Gate("cx", (pa, pb))])
        va, vb = occupant.get(pa), occupant.get(pb)
        if va is not None:
            layout[va] = pb
        if vb is not None:
            layout[vb] = pa
        occupant[pa], occupant[pb] = vb, va

    for g in circuit.gates:
        if g.name == "measure":
            deferred_measures.append(g)
            continue
        if g.name == "barrier":
            body.append(Gate("barrier", tuple(layout[v] for v in g.qubits)))
            continue
        for rg in _rewrite_gate(g):
            if rg.name == "cx":
                pa, pb = layout[rg.qubits[0]], layout[rg.qubits[1]]
                if not topo.has_edge(pa, pb):
                    path = topo.shortest_path(pa, pb)
                    if path is None:
                        raise RoutingFailure(f"no path between physical qubits {pa} and {pb}")
                    for i in range(len(path) - 2):
                        emit_swap(path[i], path[i + 1])
                    pa, pb = layout[rg.qubits[0]], layout[rg.qubits[1]]
                body.append(Gate("cx", (pa, pb)))
            else:
                body.append(Gate(rg.name, (layout[rg.qubits[0]],), rg.params))

    if options.get("optimize", True):
        body = peephole(body, n_phys)

    final_layout = tuple(layout)
    for g in deferred_measures:
        body.append(Gate("measure", (layout[g.qubits[0]],), clbit=g.clbit))

    out = QuantumCircuit(n_phys, circuit.n_clbits, tuple(body))
    return TranspileResult(
        circuit=out,
        initial_layout=tuple(range(n_virtual)),
        final_layout=final_layout,
        metrics=circuit_metrics(out),
        transpiler_name="default",
    )


def identity_transpiler(circuit: QuantumCircuit, device: DeviceSpec, options=None) -> TranspileResult:
    """Pass-through; valid only when the circuit already conforms to the device."""
    problems = conformance_violations(circuit, device)
    if problems:
        raise NotConformant("; ".join(problems))
    trivial = tuple(range(circuit.n_qubits))
    return TranspileResult(
        circuit=circuit,
        initial_layout=trivial,
        final_layout=trivial,
        metrics=circuit_metrics(circuit),
        transpiler_name="identity",
    )


class TranspilerRegistry:
    """Write-once-at-startup name -> transpiler function table."""

    def __init__(self, with_builtins: bool = True):
        self._transpilers: dict[str, object] = {}
        self._lock = threading.Lock()
        if with_builtins:
            self.register("default", default_transpiler)
            self.register("identity", identity_transpiler)

    def register(self, name: str, transpiler) -> None:
        with self._lock:
            if name in self._transpilers:
                raise DuplicateName(f"transpiler {name!r} already registered")
            self._transpilers[name] = transpiler

    def names(self) -> list[str]:
        return sorted(self._transpilers)

    def get(self, name: str):
        try:
            return self._transpilers[name]
        except KeyError:
            raise UnknownTranspiler(f"no transpiler named {name!r}") from None


DEFAULT_REGISTRY = TranspilerRegistry()


def register_transpiler(name: str, transpiler) -> None:
    DEFAULT_REGISTRY.register(name, transpiler)


def transpile(
    circuit: QuantumCircuit,
    device: DeviceSpec,
    name: str = "default",
    options=None,
    registry: TranspilerRegistry | None = None,
) -> TranspileResult:
    registry = registry or DEFAULT_REGISTRY
    if circuit.n_qubits > device.n_qubits:
        raise CircuitTooLarge(
            f"circuit has {circuit.n_qubits} qubits, device {device.id} has {device.n_qubits}"
        )
    fn = registry.get(name)
    result = fn(circuit, device, options)
    if result.transpiler_name != name:
        result = TranspileResult(
            circuit=result.circuit,
            initial_layout=result.initial_layout,
            final_layout=result.final_layout,
            metrics=result.metrics,
            transpiler_name=name,
        )
    problems = conformance_violations(result.circuit, device)
    if len(set(result.initial_layout)) != len(result.initial_layout):
        problems.append("initial layout not injective")
    if len(set(result.final_layout)) != len(result.final_layout):
        problems.append("final layout not injective")
    if problems:
        raise NotConformant(f"{name} produced a non-conformant result: " + "; ".join(problems))
    return result


_OBJECTIVE_KEYS = ("two_qubit_count", "depth", "gate_count")


@dataclass
class CompareReport:
    ranked: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    @property
    def best(self) -> TranspileResult:
        return self.ranked[0]


def compare(
    circuit: QuantumCircuit,
    device: DeviceSpec,
    names,
    objective: str = "two_qubit_count",
    options=None,
    registry: TranspilerRegistry | None = None,
) -> CompareReport:
    """Run several transpilers and rank their results (ascending objective).

    A failing transpiler is recorded in `failures` without aborting the
    comparison; AllTranspilersFailed is raised only when nothing succeeds.
    """
    if objective not in _OBJECTIVE_KEYS:
        raise TranspilerError(f"unknown objective {objective!r}")
    report = CompareReport()
    for name in names:
        try:
            report.ranked.append(transpile(circuit, device, name, options, registry))
        except Exception as exc:  # fault isolation: any plugin error is recorded
            report.failures[name] = f"{type(exc).__name__}: {exc}"
    if not report.ranked:
        raise AllTranspilersFailed(f"all of {list(names)} failed: {report.failures}")
    key_order = (objective,) + tuple(k for k in _OBJECTIVE_KEYS if k != objective)
    report.ranked.sort(key=lambda r: tuple(getattr(r.metrics, k) for k in key_order))
    return report

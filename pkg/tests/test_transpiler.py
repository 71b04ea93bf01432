import math

import numpy as np
import pytest

from qstack.circuits import Gate, QuantumCircuit, Topology, cx, h, measure, rz
from qstack.simulator import unitary
from qstack.transpiler import (
    AllTranspilersFailed,
    CircuitTooLarge,
    DuplicateName,
    NotConformant,
    RoutingFailure,
    TranspilerRegistry,
    UnknownTranspiler,
    compare,
    conformance_violations,
    peephole,
    transpile,
)

import helpers


def _dev(n, topology=None):
    return helpers.make_device(f"d{n}", topology or Topology.line(n))


class TestRegistry:
    def test_builtins_present(self):
        reg = TranspilerRegistry()
        assert reg.names() == ["default", "identity"]

    def test_duplicate_name(self):
        reg = TranspilerRegistry()
        with pytest.raises(DuplicateName):
            reg.register("default", lambda c, d, o: None)

    def test_plugin_slot(self):
        reg = TranspilerRegistry()
        reg.register("external", lambda c, d, o: transpile(c, d, "default", o, reg))
        result = transpile(QuantumCircuit(1, 0, (h(0),)), _dev(1), "external", registry=reg)
        assert result.transpiler_name == "external"

    def test_unknown(self):
        with pytest.raises(UnknownTranspiler):
            transpile(QuantumCircuit(1), _dev(1), "nonesuch")


class TestDefaultPipeline:
    def test_h_decomposition(self):
        res = transpile(QuantumCircuit(1, 0, (h(0),)), _dev(1))
        names = [(g.name, g.params) for g in res.circuit.gates]
        assert names == [
            ("rz", (math.pi / 2,)), ("sx", ()), ("rz", (math.pi / 2,)),
        ]
        assert helpers.circuit_fidelity(QuantumCircuit(1, 0, (h(0),)), res) > 1 - 1e-12

    def test_every_gate_rewrites_exactly(self):
        # each supported gate alone, against an all-to-all device
        rng = np.random.default_rng(5)
        for name in helpers.UNITARY_GATES:
            if name == "barrier":
                continue
            from qstack.circuits import GATE_SIGNATURES

            arity, n_params = GATE_SIGNATURES[name]
            qubits = tuple(range(arity))
            params = tuple(rng.uniform(-6, 6) for _ in range(n_params))
            c = QuantumCircuit(2, 0, (Gate(name, qubits if arity > 1 else (0,), params),))
            res = transpile(c, _dev(2, Topology.full(2)))
            assert helpers.circuit_fidelity(c, res) > 1 - 1e-12, name

    def test_routing_cx_across_line(self):
        c = QuantumCircuit(3, 0, (cx(0, 2),))
        res = transpile(c, _dev(3))
        assert res.metrics.two_qubit_count == 4  # one SWAP (3 cx) + the cx
        assert helpers.circuit_fidelity(c, res) > 1 - 1e-12
        assert not conformance_violations(res.circuit, _dev(3))

    def test_measures_deferred_and_remapped(self):
        c = QuantumCircuit(3, 2, (cx(0, 2), measure(0, 0), measure(2, 1)))
        res = transpile(c, _dev(3))
        measures = res.circuit.measurements
        assert [g.clbit for g in measures] == [0, 1]
        assert measures[0].qubits[0] == res.final_layout[0]
        assert measures[1].qubits[0] == res.final_layout[2]
        # measures come last
        assert all(g.name == "measure" for g in res.circuit.gates[-2:])

    def test_routing_failure_on_disconnected(self):
        topo = Topology(3, frozenset({(0, 1)}))
        with pytest.raises(RoutingFailure):
            transpile(QuantumCircuit(3, 0, (cx(0, 2),)), _dev(3, topo))

    def test_circuit_too_large(self):
        with pytest.raises(CircuitTooLarge):
            transpile(QuantumCircuit(3), _dev(2))

    def test_barrier_passthrough(self):
        c = QuantumCircuit(2, 0, (h(0), Gate("barrier", (0, 1)), h(0)))
        res = transpile(c, _dev(2))
        assert any(g.name == "barrier" for g in res.circuit.gates)


class TestIdentityTranspiler:
    def test_conformant_passthrough(self):
        c = QuantumCircuit(2, 1, (Gate("sx", (0,)), cx(0, 1), measure(0, 0)))
        res = transpile(c, _dev(2), "identity")
        assert res.circuit == c
        assert res.initial_layout == res.final_layout == (0, 1)

    def test_nonconformant_rejected(self):
        with pytest.raises(NotConformant):
            transpile(QuantumCircuit(1, 0, (h(0),)), _dev(1), "identity")
        with pytest.raises(NotConformant):
            transpile(QuantumCircuit(3, 0, (cx(0, 2),)), _dev(3), "identity")


class TestPeephole:
    def test_adjacent_cx_pairs_cancel(self):
        gates = [cx(0, 1), cx(0, 1)]
        assert peephole(gates, 2) == []

    def test_oriented_cx_pairs_survive(self):
        gates = [cx(0, 1), cx(1, 0)]
        assert peephole(gates, 2) == gates

    def test_rz_merge_and_drop(self):
        gates = [rz(0, 0.4), rz(0, -0.4)]
        assert peephole(gates, 1) == []
        gates = [rz(0, 0.25), rz(0, 0.5)]
        assert peephole(gates, 1) == [rz(0, 0.75)]
        assert peephole([rz(0, 2 * math.pi)], 1) == []

    def test_cascade_through_zero_rz(self):
        gates = [cx(0, 1), rz(1, 0.7), rz(1, -0.7), cx(0, 1)]
        assert peephole(gates, 2) == []

    def test_intervening_gate_blocks_cancellation(self):
        gates = [cx(0, 1), rz(1, 0.5), cx(0, 1)]
        assert peephole(gates, 2) == gates

    def test_barrier_blocks_optimization(self):
        gates = [cx(0, 1), Gate("barrier", ()), cx(0, 1)]
        assert peephole(gates, 2) == gates

    def test_peephole_preserves_unitary(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            n = int(rng.integers(2, 5))
            c = helpers.random_circuit(rng, n, 15, allow_barrier=False)
            res = transpile(c, _dev(n, Topology.full(n)))
            res_raw = transpile(c, _dev(n, Topology.full(n)), options={"optimize": False})
            u_opt = unitary(res.circuit.without_measurements())
            u_raw = unitary(res_raw.circuit.without_measurements())
            fid = abs(np.trace(u_opt.conj().T @ u_raw)) / 2 ** res.circuit.n_qubits
            assert fid > 1 - 1e-9


class TestSemanticPreservation:
    def test_random_circuits_random_topologies(self):
        rng = np.random.default_rng(77)
        for _ in range(40):
            n = int(rng.integers(2, 6))
            c = helpers.random_circuit(rng, n, int(rng.integers(1, 21)), allow_barrier=False)
            topo = helpers.random_connected_topology(rng, n)
            dev = helpers.make_device("r", topo)
            res = transpile(c, dev)
            assert not conformance_violations(res.circuit, dev)
            assert helpers.circuit_fidelity(c, res) >= 1 - 1e-9


class TestCompare:
    def test_single(self):
        report = compare(QuantumCircuit(1, 0, (h(0),)), _dev(1), ["default"])
        assert len(report.ranked) == 1 and not report.failures

    def test_identity_wins_on_conformant_input(self):
        c = QuantumCircuit(2, 0, (Gate("sx", (0,)), cx(0, 1)))
        report = compare(c, _dev(2), ["default", "identity"])
        best = report.best
        ident = next(r for r in report.ranked if r.transpiler_name == "identity")
        assert best.metrics.two_qubit_count <= ident.metrics.two_qubit_count

    def test_fault_isolation(self):
        reg = TranspilerRegistry()

        def broken(circuit, device, options):
            raise RuntimeError("boom")

        reg.register("broken", broken)
        report = compare(QuantumCircuit(1, 0, (h(0),)), _dev(1), ["default", "broken"], registry=reg)
        assert [r.transpiler_name for r in report.ranked] == ["default"]
        assert "broken" in report.failures and "boom" in report.failures["broken"]

    def test_all_failed(self):
        reg = TranspilerRegistry()
        reg.register("nope", lambda c, d, o: (_ for _ in ()).throw(RuntimeError("x")))
        with pytest.raises(AllTranspilersFailed):
            compare(QuantumCircuit(1, 0, (h(0),)), _dev(1), ["nope"], registry=reg)

    def test_objective_ordering_deterministic(self):
        c = QuantumCircuit(2, 0, (Gate("sx", (0,)), cx(0, 1)))
        r1 = compare(c, _dev(2), ["default", "identity"])
        r2 = compare(c, _dev(2), ["default", "identity"])
        assert [r.transpiler_name for r in r1.ranked] == [r.transpiler_name for r in r2.ranked]

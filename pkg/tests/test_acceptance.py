"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
in the terminal summary at its pinned tolerance."""

import json
import threading
import time

import numpy as np
import pytest
from click.testing import CliRunner

from qstack.circuits import QuantumCircuit, Topology, cx, h, measure, x
from qstack.cli import main as cli_main
from qstack.devices import ConfusionMatrix
from qstack.engine.core import Engine, EngineConfig
from qstack.engine.storage import Storage
from qstack.mitigation import build_mitigator
from qstack.multiprog import combine, split_counts
from qstack.qasm import emit_qasm, parse_qasm
from qstack.simulator import calibrate_readout, clbit_distribution, sample
from qstack.transpiler import conformance_violations, transpile

import helpers
from conftest import ADMIN_KEY

QASM_COIN_FLIP = 'OPENQASM 3;\nqubit[1] q;\nbit[1] c;\nh q[0];\nc[0] = measure q[0];\n'
QASM_CX_PREP = "OPENQASM 3;\nqubit[2] q;\ncx q[0], q[1];\n"
QASM_TINY = QASM_COIN_FLIP


def test_cli_sampling_end_to_end(criterion, live_server, tmp_path):
    with criterion("Sampling end-to-end via CLI: uniform coin counts in [450, 550], < 5 s"):
        qasm_file = tmp_path / "coin.qasm"
        qasm_file.write_text(QASM_COIN_FLIP)
        started = time.monotonic()
        result = CliRunner().invoke(cli_main, [
            "sample", "--qasm", str(qasm_file), "--device", "sim2",
            "--shots", "1000", "--seed", "12", "--name", "coin-flip",
            "--description", "uniform one-qubit sample", "--wait", "--json",
        ], env={"QSTACK_URL": live_server.url, "QSTACK_API_KEY": ADMIN_KEY})
        elapsed = time.monotonic() - started
        assert result.exit_code == 0, result.output
        job = json.loads(result.output)
        assert job["status"] == "succeeded"
        counts = job["result"]["counts"]
        assert set(counts) == {"0", "1"}
        assert 450 <= counts["0"] <= 550
        assert 450 <= counts["1"] <= 550
        assert elapsed < 5.0


def test_estimation_end_to_end(criterion, live_server, tmp_path):
    with criterion("Estimation end-to-end: two-term value within +-0.2 of 0"):
        qasm_file = tmp_path / "prep.qasm"
        qasm_file.write_text(QASM_CX_PREP)
        op_file = tmp_path / "operator.json"
        op_file.write_text(json.dumps([["X 0 X 1", 1.5], ["Y 0 Z 1", 1.2]]))
        result = CliRunner().invoke(cli_main, [
            "estimate", "--qasm", str(qasm_file), "--operator", str(op_file),
            "--device", "sim2", "--shots", "1000", "--seed", "33",
            "--name", "two-term-estimate", "--wait", "--json",
        ], env={"QSTACK_URL": live_server.url, "QSTACK_API_KEY": ADMIN_KEY})
        assert result.exit_code == 0, result.output
        job = json.loads(result.output)
        assert job["status"] == "succeeded"
        assert abs(job["result"]["value"] - 0.0) <= 0.2
        assert len(job["result"]["per_group"]) == 2


def test_transpiler_semantic_preservation(criterion):
    with criterion("Transpiler: 200 random circuits, fidelity >= 1-1e-9, conformant, < 60 s"):
        rng = np.random.default_rng(1404)
        started = time.monotonic()
        for _ in range(200):
            n = int(rng.integers(2, 6))
            circuit = helpers.random_circuit(rng, n, int(rng.integers(1, 21)),
                                             allow_barrier=False)
            topology = helpers.random_connected_topology(rng, n)
            device = helpers.make_device("accept", topology)
            result = transpile(circuit, device)
            assert conformance_violations(result.circuit, device) == []
            assert helpers.circuit_fidelity(circuit, result) >= 1 - 1e-9
        assert time.monotonic() - started < 60.0


def test_multiprogramming_factorization(criterion):
    with criterion("Multi-programming: 50 pairs factorize within 1e-10, shots conserved"):
        rng = np.random.default_rng(905)
        for _ in range(50):
            n1, n2 = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            device = helpers.make_device("mp", Topology.line(n1 + n2 + 1))
            c1 = helpers.random_circuit(rng, n1, 6, measure_all=True, allow_barrier=False)
            c2 = helpers.random_circuit(rng, n2, 6, measure_all=True, allow_barrier=False)
            combined, plan = combine([c1, c2], device)

            dist = clbit_distribution(combined)
            subs = [clbit_distribution(c) for c in (c1, c2)]
            width = plan.combined_n_clbits
            import itertools

            for picks in itertools.product(*[d.items() for d in subs]):
                chars = ["0"] * width
                expected = 1.0
                for (sub_key, p), sub in zip(picks, plan.sub_plans):
                    expected *= p
                    n_i = len(sub.clbit_map)
                    for j, m in enumerate(sub.clbit_map):
                        chars[width - 1 - m] = sub_key[n_i - 1 - j]
                assert abs(dist.get("".join(chars), 0.0) - expected) < 1e-10

            counts = sample(combined, 2000, int(rng.integers(1 << 31)), device, noise=False)
            for part in split_counts(counts, plan):
                assert sum(part.counts.values()) == 2000
                assert part.shots == 2000


def test_mitigation_algebra(criterion):
    with criterion("Mitigation algebra: inverse recovers p within 1e-9; worked example exact"):
        rng = np.random.default_rng(77)
        for m in range(1, 9):
            for _ in range(3):
                p = rng.dirichlet(np.ones(2 ** m))
                mats = [ConfusionMatrix(rng.uniform(0, 0.45), rng.uniform(0, 0.45))
                        for _ in range(m)]
                mitigator = build_mitigator(mats)
                recovered = mitigator.apply_inverse_vector(mitigator.apply_forward_vector(p))
                assert np.max(np.abs(recovered - p)) < 1e-9
        worked = build_mitigator([ConfusionMatrix(0.02, 0.05)])
        assert worked.matrices[0].det == pytest.approx(0.930)
        raw = worked.apply_inverse_vector(np.array([980 / 1000, 20 / 1000]))
        assert raw[0] == 1.0 and raw[1] == 0.0


def test_mitigation_efficacy(criterion):
    with criterion("Mitigation efficacy: Bell <ZZ> unmitigated ~=0.864+-0.01, mitigated within 0.02 of 1"):
        device = helpers.line_device("bell2", 2, eps=[(0.02, 0.05), (0.02, 0.05)])
        bell = QuantumCircuit(2, 2, (h(0), cx(0, 1), measure(0, 0), measure(1, 1)))
        mitigator = build_mitigator(calibrate_readout(device, 100_000, 404))

        def zz(weights):
            return sum(w if key.count("1") % 2 == 0 else -w for key, w in weights.items())

        for seed in range(5):
            counts = sample(bell, 100_000, seed, device, noise=True)
            unmitigated = zz(counts.probabilities())
            mitigated = zz(mitigator.apply(counts).raw)
            assert abs(unmitigated - 0.864) <= 0.01
            assert abs(mitigated - 1.0) <= 0.02


def test_queue_semantics(criterion, tmp_path):
    with criterion("Queue: 100 jobs x 8 submitters strict FIFO, single-flight, session exclusive"):
        storage = Storage(str(tmp_path / "queue.sqlite"))
        engine = Engine(storage, config=EngineConfig(calibration_shots=1000,
                                                     poll_interval=0.002))
        engine.register_device({
            "id": "q1", "n_qubits": 1, "edges": [],
            "basis_gates": ["rz", "sx", "x", "cx"],
            "readout_errors": [{"eps01": 0.0, "eps10": 0.0}],
        })
        users = [storage.create_user(f"u{i}") for i in range(8)]
        engine.ensure_worker("q1")

        def submit_batch(user, k):
            for i in range(k):
                engine.submit(user, {
                    "device_id": "q1", "job_type": "sampling", "shots": 5,
                    "payload": {"qasm": QASM_TINY}, "options": {"seed": i},
                })

        threads = [threading.Thread(target=submit_batch, args=(u, 13 if i < 4 else 12))
                   for i, u in enumerate(users)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        total = 4 * 13 + 4 * 12  # 100 jobs
        deadline = time.time() + 60
        while time.time() < deadline:
            jobs = storage.list_jobs(device_id="q1")
            if sum(j.status in ("succeeded", "failed") for j in jobs) == total:
                break
            time.sleep(0.05)
        jobs = storage.list_jobs(device_id="q1")
        assert sum(j.status == "succeeded" for j in jobs) == total

        log = storage.exec_log("q1")
        by_seq = sorted((j.queue_seq, j.id) for j in jobs)
        assert [entry["job_id"] for entry in log] == [jid for _, jid in by_seq]
        for previous, current in zip(log, log[1:]):
            assert current["started_at"] >= previous["ended_at"]  # single-flight

        # session exclusivity against concurrent external submitters
        owner = users[0]
        job, lease, token = engine.open_session(owner, "q1", ttl_seconds=30)
        while storage.get_session(lease.id).state != "active":
            time.sleep(0.01)
        stop_external = threading.Event()
        external_ids = []

        def external_spam():
            i = 0
            while not stop_external.is_set() and i < 20:
                external_ids.append(engine.submit(users[1], {
                    "device_id": "q1", "job_type": "sampling", "shots": 5,
                    "payload": {"qasm": QASM_TINY}, "options": {"seed": i},
                }).id)
                i += 1
                time.sleep(0.005)

        spammer = threading.Thread(target=external_spam)
        spammer.start()
        sub_ids = [engine.session_submit(lease.id, {
            "job_type": "sampling", "shots": 5, "payload": {"qasm": QASM_TINY},
            "options": {"seed": i},
        }, token=token).id for i in range(5)]
        engine.close_session(lease.id, caller=owner)
        stop_external.set()
        spammer.join()
        deadline = time.time() + 60
        while time.time() < deadline:
            if all(storage.get_job(j).status == "succeeded" for j in external_ids):
                break
            time.sleep(0.05)

        fresh = storage.get_session(lease.id)
        window = (fresh.activated_at, fresh.closed_at)
        for entry in storage.exec_log("q1"):
            inside = window[0] <= entry["started_at"] < window[1]
            if entry["job_id"] in sub_ids:
                assert inside
            elif inside:
                assert entry["job_id"] in sub_ids  # zero interleaved externals
        engine.stop_workers()
        storage.close()


def test_durability_across_restart(criterion, tmp_path):
    with criterion("Durability: restart leaves legal states, running failed, results kept"):
        path = str(tmp_path / "durable.sqlite")
        storage = Storage(path)
        engine = Engine(storage, config=EngineConfig(calibration_shots=1000))
        engine.register_device({
            "id": "d1", "n_qubits": 1, "edges": [],
            "basis_gates": ["rz", "sx", "x", "cx"],
            "readout_errors": [{"eps01": 0.0, "eps10": 0.0}],
        })
        user = storage.create_user("u")

        def submit(seed):
            return engine.submit(user, {
                "device_id": "d1", "job_type": "sampling", "shots": 25,
                "payload": {"qasm": QASM_TINY}, "options": {"seed": seed},
            }).id

        finished = [submit(i) for i in range(8)]
        for _ in finished:
            engine.worker_step("d1")
        running_id = submit(100)
        queued_ids = [submit(101), submit(102)]
        cancelled_id = submit(103)
        engine.cancel(cancelled_id, user)
        storage.acquire_next_job("d1")  # running at crash time
        results_before = {j: storage.get_job(j).result for j in finished}
        storage.close()  # crash

        storage2 = Storage(path)
        Engine(storage2, config=EngineConfig(calibration_shots=1000))
        legal = {"submitted", "queued", "running", "succeeded", "failed", "cancelled"}
        for job in storage2.list_jobs():
            assert job.status in legal and job.status != "running"
            if job.status == "succeeded":
                assert job.result is not None
            if job.status == "failed":
                assert job.error_message
        crashed = storage2.get_job(running_id)
        assert crashed.status == "failed" and crashed.error_message == "host restarted"
        for jid in queued_ids:
            assert storage2.get_job(jid).status == "queued"
        assert storage2.get_job(cancelled_id).status == "cancelled"
        for jid, result in results_before.items():
            assert storage2.get_job(jid).result == result
        storage2.close()


def test_parser_roundtrip_500(criterion):
    with criterion("Parser round-trip: 500 random circuits parse(emit(c)) == c"):
        rng = np.random.default_rng(512)
        for _ in range(500):
            n = int(rng.integers(1, 7))
            circuit = helpers.random_circuit(rng, n, int(rng.integers(0, 20)),
                                             measure_all=bool(rng.integers(2)))
            assert parse_qasm(emit_qasm(circuit)) == circuit

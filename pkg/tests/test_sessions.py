import sys
import time

import pytest

from qstack.engine.core import (
    Engine,
    EngineConfig,
    Forbidden,
    ForbiddenSubJobType,
    LeaseExpired,
    SessionNotActive,
)
from qstack.engine.storage import Storage

QASM = 'OPENQASM 3;\nqubit[1] q;\nbit[1] c;\nh q[0];\nc[0] = measure q[0];\n'

DEV = {
    "id": "sdev", "n_qubits": 2, "edges": [[0, 1]],
    "basis_gates": ["rz", "sx", "x", "cx"],
    "readout_errors": [{"eps01": 0.0, "eps10": 0.0}] * 2,
}


@pytest.fixture
def engine(tmp_path):
    store = Storage(str(tmp_path / "s.sqlite"))
    eng = Engine(store, config=EngineConfig(calibration_shots=2000, poll_interval=0.005))
    eng.register_device(DEV)
    yield eng
    eng.stop_workers()
    store.close()


@pytest.fixture
def user(engine):
    return engine.storage.create_user("alice")


def _sub(seed=1, shots=50):
    return {"job_type": "sampling", "shots": shots,
            "payload": {"qasm": QASM}, "options": {"seed": seed}}


class TestLeaseLifecycle:
    def test_activation_at_queue_head(self, engine, user):
        job, lease, token = engine.open_session(user, "sdev", ttl_seconds=60)
        assert lease.state == "pending"
        with pytest.raises(SessionNotActive):
            engine.session_submit(lease.id, _sub(), token=token)
        engine.worker_step("sdev")
        assert engine.storage.get_session(lease.id).state == "active"
        assert engine.storage.get_job(job.id).status == "running"

    def test_subjobs_run_immediately_in_order(self, engine, user):
        job, lease, token = engine.open_session(user, "sdev", ttl_seconds=60)
        engine.worker_step("sdev")
        sub_ids = [engine.session_submit(lease.id, _sub(seed=i), token=token).id for i in range(5)]
        fresh = engine.storage.get_session(lease.id)
        assert fresh.sub_jobs == sub_ids
        for jid in sub_ids:
            assert engine.storage.get_job(jid).status == "succeeded"
        engine.close_session(lease.id, caller=user)
        done = engine.storage.get_job(job.id)
        assert done.status == "succeeded"
        assert done.result["sub_jobs"] == sub_ids

    def test_external_jobs_wait_for_close(self, engine, user):
        _, lease, token = engine.open_session(user, "sdev", ttl_seconds=60)
        engine.worker_step("sdev")
        external = engine.submit(user, {"device_id": "sdev", "job_type": "sampling",
                                        "shots": 20, "payload": {"qasm": QASM},
                                        "options": {"seed": 4}})
        assert engine.worker_step("sdev") is None  # lease holds the device
        assert engine.storage.get_job(external.id).status == "queued"
        sub = engine.session_submit(lease.id, _sub(), token=token)
        engine.close_session(lease.id, caller=user)
        engine.worker_step("sdev")
        assert engine.storage.get_job(external.id).status == "succeeded"
        # exclusivity on the execution log: sub-job ran inside the lease
        # window, the external one strictly after release
        fresh = engine.storage.get_session(lease.id)
        log = {e["job_id"]: e for e in engine.storage.exec_log("sdev")}
        assert log[sub.id]["started_at"] >= fresh.activated_at
        assert log[sub.id]["ended_at"] <= fresh.closed_at
        assert log[external.id]["started_at"] >= fresh.closed_at

    def test_subjob_after_close_rejected(self, engine, user):
        _, lease, token = engine.open_session(user, "sdev", ttl_seconds=60)
        engine.worker_step("sdev")
        engine.close_session(lease.id, caller=user)
        with pytest.raises(LeaseExpired):
            engine.session_submit(lease.id, _sub(), token=token)

    def test_ttl_expiry_resumes_fifo(self, engine, user):
        job, lease, token = engine.open_session(user, "sdev", ttl_seconds=0.05)
        engine.worker_step("sdev")
        external = engine.submit(user, {"device_id": "sdev", "job_type": "sampling",
                                        "shots": 20, "payload": {"qasm": QASM},
                                        "options": {"seed": 4}})
        time.sleep(0.1)
        engine.worker_step("sdev")  # expires the lease, then resumes the queue
        assert engine.storage.get_session(lease.id).state == "expired"
        assert engine.storage.get_job(job.id).status == "succeeded"
        assert engine.storage.get_job(job.id).result["state"] == "expired"
        # queue resumed: either already processed or processable now
        engine.worker_step("sdev")
        assert engine.storage.get_job(external.id).status == "succeeded"
        with pytest.raises(LeaseExpired):
            engine.session_submit(lease.id, _sub(), token=token)

    def test_nested_sessions_forbidden(self, engine, user):
        _, lease, token = engine.open_session(user, "sdev", ttl_seconds=60)
        engine.worker_step("sdev")
        with pytest.raises(ForbiddenSubJobType):
            engine.session_submit(lease.id, {"job_type": "session", "payload": {}}, token=token)
        with pytest.raises(ForbiddenSubJobType):
            engine.session_submit(lease.id, {"job_type": "multi_manual", "payload": {}}, token=token)

    def test_foreign_caller_rejected(self, engine, user):
        mallory = engine.storage.create_user("mallory")
        _, lease, token = engine.open_session(user, "sdev", ttl_seconds=60)
        engine.worker_step("sdev")
        with pytest.raises(Forbidden):
            engine.session_submit(lease.id, _sub(), caller=mallory)
        with pytest.raises(Forbidden):
            engine.session_submit(lease.id, _sub(), token="wrong-token")

    def test_close_pending_session_cancels_job(self, engine, user):
        blocker = engine.submit(user, {"device_id": "sdev", "job_type": "sampling",
                                       "shots": 20, "payload": {"qasm": QASM},
                                       "options": {"seed": 1}})
        job, lease, _ = engine.open_session(user, "sdev", ttl_seconds=60)
        engine.close_session(lease.id, caller=user)
        assert engine.storage.get_session(lease.id).state == "closed"
        assert engine.storage.get_job(job.id).status == "cancelled"
        engine.worker_step("sdev")
        assert engine.storage.get_job(blocker.id).status == "succeeded"
        # the cancelled session job never activates
        assert engine.worker_step("sdev") is None


class TestOpenSessionRace:
    def test_worker_never_sees_session_job_without_lease(self, engine, user):
        # with an idle queue and a hot worker, the session job is dequeued
        # almost immediately after insert; job and lease land in one
        # transaction so activation can never find the lease missing
        engine.ensure_worker("sdev")
        try:
            for _ in range(15):
                job, lease, token = engine.open_session(user, "sdev", ttl_seconds=30)
                deadline = time.time() + 10
                state = None
                while time.time() < deadline:
                    state = engine.storage.get_session(lease.id).state
                    if state == "active":
                        break
                    time.sleep(0.002)
                assert state == "active", f"lease stuck in {state}"
                sub = engine.session_submit(lease.id, _sub(), token=token)
                assert sub.status == "succeeded"
                engine.close_session(lease.id, caller=user)
        finally:
            engine.stop_workers()


class TestHostedPrograms:
    def _run_session_program(self, engine, user, manifest):
        job, lease, _ = engine.open_session(user, "sdev", ttl_seconds=60, manifest=manifest)
        engine.worker_step("sdev")  # runs the program to completion
        return engine.storage.get_job(job.id), engine.storage.get_session(lease.id)

    def test_spawn_failure(self, engine, user):
        manifest = {"command": ["/nonexistent/binary"], "timeout_s": 5}
        job, lease = self._run_session_program(engine, user, manifest)
        assert job.status == "failed"
        assert "SpawnFailure" in job.error_message
        assert lease.state == "closed"

    def test_wall_clock_timeout(self, engine, user):
        manifest = {"command": [sys.executable, "-c", "import time; time.sleep(30)"],
                    "timeout_s": 0.3}
        t0 = time.time()
        job, lease = self._run_session_program(engine, user, manifest)
        assert time.time() - t0 < 10
        assert job.status == "failed"
        assert "WallClockTimeout" in job.error_message
        assert lease.state == "closed"
        # device is usable again
        ext = engine.submit(user, {"device_id": "sdev", "job_type": "sampling",
                                   "shots": 10, "payload": {"qasm": QASM},
                                   "options": {"seed": 2}})
        engine.worker_step("sdev")
        assert engine.storage.get_job(ext.id).status == "succeeded"

    def test_program_exit_code_recorded(self, engine, user):
        manifest = {"command": [sys.executable, "-c", "print('hi'); raise SystemExit(0)"],
                    "timeout_s": 10}
        job, lease = self._run_session_program(engine, user, manifest)
        assert job.status == "succeeded"
        assert job.result["exit_code"] == 0
        assert "hi" in job.result["stdout"]
        assert lease.state == "closed"

    def test_failing_program_marks_job_failed(self, engine, user):
        manifest = {"command": [sys.executable, "-c", "raise SystemExit(3)"], "timeout_s": 10}
        job, lease = self._run_session_program(engine, user, manifest)
        assert job.status == "failed"
        assert "code 3" in job.error_message
        assert lease.state == "closed"

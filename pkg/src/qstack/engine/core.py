"""Job lifecycle engine: per-device FIFO queues, execution pipelines, sessions.

One logical executor per device, serialized by a per-device lock; job state
transitions go through storage atomically, so API readers never observe a
torn record. Sessions queue like ordinary jobs, take the device exclusively
once they reach the queue head, and release it on close, expiry, or when
their hosted program exits.
"""

from __future__ import annotations

import hashlib
import os
import secrets
import subprocess
import threading
import time

from ..circuits import Topology
from ..devices import ConfusionMatrix, DeviceSpec, device_from_json, device_to_json
from ..estimation import estimate
from ..mitigation import build_mitigator, matrices_for_measures
from ..multiprog import combine, split_counts
from ..operators import parse_operator
from ..qasm import emit_qasm, parse_qasm
from ..simulator import RNG_ALGORITHM, calibrate_readout, sample
from ..transpiler import DEFAULT_REGISTRY, TranspilerRegistry, transpile
from .models import Job, SessionLease, User, now_iso
from .storage import IllegalTransition, Storage, new_id


class EngineError(Exception):
    pass


class ValidationFailed(EngineError):
    def __init__(self, message: str, job: Job | None = None):
        super().__init__(message)
        self.job = job


class UnknownDevice(EngineError):
    pass


class DeviceUnavailable(EngineError):
    pass


class DeviceBusy(EngineError):
    pass


class NotFound(EngineError):
    pass


class Forbidden(EngineError):
    pass


class NotCancellable(EngineError):
    pass


class LeaseConflict(EngineError):
    pass


class LeaseExpired(EngineError):
    pass


class SessionNotActive(EngineError):
    pass


class ForbiddenSubJobType(EngineError):
    pass


class SpawnFailure(EngineError):
    pass


class WallClockTimeout(EngineError):
    pass


class EngineConfig:
    def __init__(
        self,
        noise: bool = True,
        poll_interval: float = 0.02,
        base_url: str | None = None,
        default_session_ttl: float = 300.0,
        default_program_timeout: float = 600.0,
        calibration_shots: int = 100_000,
        calibration_seed: int = 20_452,
    ):
        self.noise = noise
        self.poll_interval = poll_interval
        self.base_url = base_url
        self.default_session_ttl = default_session_ttl
        self.default_program_timeout = default_program_timeout
        self.calibration_shots = calibration_shots
        self.calibration_seed = calibration_seed


def _errmsg(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def hash_secret(secret: str) -> str:
    return hashlib.sha256(secret.encode()).hexdigest()


class Engine:
    def __init__(self, storage: Storage, registry: TranspilerRegistry | None = None,
                 config: EngineConfig | None = None):
        self.storage = storage
        self.registry = registry or DEFAULT_REGISTRY
        self.config = config or EngineConfig()
        self._exec_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._stop = threading.Event()
        self._workers: dict[str, threading.Thread] = {}
        self.recover()

    # -- recovery --------------------------------------------------------------

    def recover(self) -> None:
        """After a restart: running jobs failed, active leases expired."""
        self.storage.fail_running_jobs("host restarted")
        self.storage.expire_active_sessions()

    def _lock_for(self, device_id: str) -> threading.Lock:
        with self._locks_guard:
            if device_id not in self._exec_locks:
                self._exec_locks[device_id] = threading.Lock()
            return self._exec_locks[device_id]

    # -- devices ---------------------------------------------------------------

    def _device(self, device_id: str) -> DeviceSpec:
        doc = self.storage.get_device(device_id)
        if doc is None:
            raise UnknownDevice(f"no device {device_id!r}")
        return device_from_json(doc)

    def register_device(self, spec_json: dict, calibrate: bool = True) -> DeviceSpec:
        device = device_from_json(spec_json)
        if calibrate:
            device = self.refresh_calibration(device)
        self.storage.put_device(device.id, device_to_json(device))
        return device

    def refresh_calibration(self, device: DeviceSpec) -> DeviceSpec:
        matrices = calibrate_readout(
            device, self.config.calibration_shots, self.config.calibration_seed
        )
        return device.with_calibration(matrices, now_iso())

    def update_device(self, device_id: str, patch: dict) -> DeviceSpec:
        device = self._device(device_id)
        doc = device_to_json(device)
        for key in ("status", "readout_errors", "basis_gates", "edges"):
            if key in patch:
                doc[key] = patch[key]
        device = device_from_json(doc)
        if patch.get("recalibrate"):
            device = self.refresh_calibration(device)
        self.storage.put_device(device.id, device_to_json(device))
        return device

    def delete_device(self, device_id: str) -> None:
        if self.storage.get_device(device_id) is None:
            raise NotFound(f"no device {device_id!r}")
        pending = self.storage.count_pending_jobs(device_id)
        if pending:
            raise DeviceBusy(f"device {device_id} has {pending} queued or running job(s)")
        self.storage.delete_device(device_id)

    # -- submission --------------------------------------------------------------

    def _normalized_options(self, options: dict | None) -> dict:
        options = dict(options or {})
        transpiler = options.get("transpiler") or {}
        if isinstance(transpiler, str):
            transpiler = {"name": transpiler}
        options["transpiler"] = {
            "name": transpiler.get("name", "default"),
            "options": transpiler.get("options") or {},
        }
        mitigation = options.get("mitigation")
        if mitigation:
            if mitigation.get("readout") != "pseudo_inverse":
                raise ValidationFailed(f"unknown mitigation method {mitigation!r}")
            options["mitigation"] = {"readout": "pseudo_inverse"}
        else:
            options["mitigation"] = None
        if options.get("seed") is None:
            options["seed"] = secrets.randbits(32)
        else:
            options["seed"] = int(options["seed"])
        return options

    def _validate_payload(self, job_type: str, payload: dict, shots, device: DeviceSpec) -> None:
        if job_type == "sampling":
            if not isinstance(shots, int) or shots < 1:
                raise ValidationFailed(f"shots must be a positive integer, got {shots!r}")
            circuit = parse_qasm(payload["qasm"])
            if circuit.n_qubits > device.n_qubits:
                raise ValidationFailed(
                    f"circuit needs {circuit.n_qubits} qubits, device has {device.n_qubits}"
                )
            if not circuit.measurements:
                raise ValidationFailed("sampling circuit measures no qubits")
        elif job_type == "estimation":
            if not isinstance(shots, int) or shots < 1:
                raise ValidationFailed(f"shots must be a positive integer, got {shots!r}")
            circuit = parse_qasm(payload["qasm"])
            if circuit.measurements:
                raise ValidationFailed("estimation circuit must not contain measurements")
            observable = parse_operator(payload["operator"])
            if observable.n_qubits > circuit.n_qubits:
                raise ValidationFailed(
                    f"operator acts on qubit {observable.n_qubits - 1}, circuit has {circuit.n_qubits}"
                )
            if circuit.n_qubits > device.n_qubits:
                raise ValidationFailed(
                    f"circuit needs {circuit.n_qubits} qubits, device has {device.n_qubits}"
                )
        elif job_type == "multi_manual":
            if not isinstance(shots, int) or shots < 1:
                raise ValidationFailed(f"shots must be a positive integer, got {shots!r}")
            texts = payload.get("circuits")
            if not texts:
                raise ValidationFailed("multi_manual payload needs a non-empty circuits array")
            circuits = [parse_qasm(t) for t in texts]
            for i, c in enumerate(circuits):
                if not c.gates:
                    raise ValidationFailed(f"sub-circuit {i} has no gates")
                if not c.measurements:
                    raise ValidationFailed(f"sub-circuit {i} measures no qubits")
            total = sum(c.n_qubits for c in circuits)
            if total > device.n_qubits:
                raise ValidationFailed(
                    f"{total} qubits requested across circuits, device has {device.n_qubits}"
                )
        elif job_type == "session":
            manifest = payload.get("manifest")
            if manifest is not None:
                command = manifest.get("command")
                if not command or not isinstance(command, list):
                    raise ValidationFailed("session manifest needs a command argv list")
            ttl = payload.get("ttl_seconds", self.config.default_session_ttl)
            if not ttl or ttl <= 0:
                raise ValidationFailed(f"session ttl must be positive, got {ttl!r}")
        else:
            raise ValidationFailed(f"unknown job type {job_type!r}")

    def _prepare_job(self, owner: User, draft: dict) -> Job:
        """Device checks, option normalization, and payload validation.

        Invalid payloads are stored as failed job records before the
        ValidationFailed propagates; valid jobs come back unqueued.
        """
        device = self._device(draft["device_id"])
        if device.status != "available":
            raise DeviceUnavailable(f"device {device.id} is {device.status}")
        job_type = draft.get("job_type", "sampling")
        options = self._normalized_options(draft.get("options"))
        job = Job(
            id=new_id("j"),
            owner=owner.id,
            device_id=device.id,
            job_type=job_type,
            status="submitted",
            name=draft.get("name", ""),
            description=draft.get("description", ""),
            shots=draft.get("shots"),
            payload=draft.get("payload") or {},
            options=options,
        )
        try:
            self._validate_payload(job_type, job.payload, job.shots, device)
        except (ValidationFailed, ValueError, KeyError, TypeError) as exc:
            job.status = "failed"
            job.error_message = _errmsg(exc) if not isinstance(exc, ValidationFailed) else str(exc)
            job.ended_at = now_iso()
            self.storage.insert_job_record(job)
            raise ValidationFailed(job.error_message, job=job) from exc
        return job

    def submit(self, owner: User, draft: dict) -> Job:
        """Validate and enqueue a job; invalid payloads are stored as failed."""
        return self.storage.insert_queued_job(self._prepare_job(owner, draft))

    # -- execution pipelines ------------------------------------------------------

    def _transpile_options(self, job: Job):
        tr = job.options["transpiler"]
        return tr["name"], tr["options"]

    def _run_sampling(self, job: Job, device: DeviceSpec) -> dict:
        circuit = parse_qasm(job.payload["qasm"])
        name, opts = self._transpile_options(job)
        tr = transpile(circuit, device, name, opts, self.registry)
        seed = job.options["seed"]
        counts = sample(tr.circuit, job.shots, seed, device, noise=self.config.noise)
        result = {
            "counts": dict(counts.counts),
            "shots": job.shots,
            "seed": seed,
            "rng": RNG_ALGORITHM,
            "transpiled_qasm": emit_qasm(tr.circuit),
            **tr.to_json(),
        }
        if job.options.get("mitigation"):
            quasi = build_mitigator(matrices_for_measures(device, tr.circuit)).apply(counts)
            result["counts_raw"] = dict(counts.counts)
            result["quasi_distribution"] = quasi.raw
            result["counts_mitigated"] = {k: w * job.shots for k, w in quasi.clipped().items()}
        return result

    def _run_estimation(self, job: Job, device: DeviceSpec) -> dict:
        circuit = parse_qasm(job.payload["qasm"])
        observable = parse_operator(job.payload["operator"])
        name, opts = self._transpile_options(job)
        seed = job.options["seed"]
        outcome = estimate(
            circuit, observable, job.shots, device, seed,
            noise=self.config.noise,
            mitigation=bool(job.options.get("mitigation")),
            transpiler_name=name,
            transpiler_options=opts,
            registry=self.registry,
        )
        result = outcome.to_json()
        result["seed"] = seed
        result["shots"] = job.shots
        return result

    def _run_multi(self, job: Job, device: DeviceSpec) -> dict:
        circuits = [parse_qasm(t) for t in job.payload["circuits"]]
        combined, plan = combine(circuits, device)
        # restrict routing to intra-region edges so the router cannot leak
        # a sub-circuit across its allocated patch
        region_of: dict[int, int] = {}
        for idx, sub in enumerate(plan.sub_plans):
            for p in sub.qubit_map:
                region_of[p] = idx
        pinned_edges = frozenset(
            (a, b) for a, b in device.topology.edges
            if a in region_of and region_of.get(a) == region_of.get(b)
        )
        pinned = DeviceSpec(
            id=device.id, n_qubits=device.n_qubits,
            topology=Topology(device.n_qubits, pinned_edges),
            basis_gates=device.basis_gates, readout_errors=device.readout_errors,
            status=device.status, calibrated_at=device.calibrated_at,
            calibration=device.calibration,
        )
        name, opts = self._transpile_options(job)
        tr = transpile(combined, pinned, name, opts, self.registry)
        seed = job.options["seed"]
        counts = sample(tr.circuit, job.shots, seed, device, noise=self.config.noise)
        parts = split_counts(counts, plan)
        result = {
            "results": [dict(p.counts) for p in parts],
            "combined_counts": dict(counts.counts),
            "plan": plan.to_json(),
            "shots": job.shots,
            "seed": seed,
            "rng": RNG_ALGORITHM,
            "transpiled_qasm": emit_qasm(tr.circuit),
            **tr.to_json(),
        }
        if job.options.get("mitigation"):
            phys_by_clbit = {g.clbit: g.qubits[0] for g in tr.circuit.measurements}
            mitigated = []
            for sub, part in zip(plan.sub_plans, parts):
                mats = []
                for m in sub.clbit_map:
                    q = phys_by_clbit.get(m)
                    mats.append(device.calibration[q] if q is not None else ConfusionMatrix.identity())
                quasi = build_mitigator(mats).apply(part)
                mitigated.append({k: w * job.shots for k, w in quasi.clipped().items()})
            result["results_raw"] = result["results"]
            result["results_mitigated"] = mitigated
        return result

    def _execute_payload(self, job: Job, device: DeviceSpec) -> dict:
        if job.job_type == "sampling":
            return self._run_sampling(job, device)
        if job.job_type == "estimation":
            return self._run_estimation(job, device)
        if job.job_type == "multi_manual":
            return self._run_multi(job, device)
        raise EngineError(f"job type {job.job_type} is not directly executable")

    # -- worker -------------------------------------------------------------------

    def worker_step(self, device_id: str) -> str | None:
        """Process at most one unit of work for a device; returns the job id.

        External queued jobs wait while a session lease is active. Session
        jobs activate their lease at the queue head; a manifest-backed
        session runs its program to completion within this call.
        """
        lock = self._lock_for(device_id)
        program_job: tuple[Job, SessionLease] | None = None
        with lock:
            now = time.time()
            for lease in self.storage.expire_stale_sessions(device_id, now):
                self._finalize_session_job(lease, "expired")
            if self.storage.active_session(device_id) is not None:
                return None
            job = self.storage.acquire_next_job(device_id)
            if job is None:
                return None
            if job.job_type == "session":
                lease = self._activate_session(job)
                if lease is not None and job.payload.get("manifest"):
                    program_job = (job, lease)
            else:
                try:
                    device = self._device(job.device_id)
                except EngineError as exc:
                    self.storage.transition_job(
                        job.id, "failed", error_message=_errmsg(exc), ended_at=now_iso()
                    )
                    return job.id
                t0 = time.time()
                try:
                    result = self._execute_payload(job, device)
                    t1 = time.time()
                    self.storage.transition_job(
                        job.id, "succeeded", result=result, ended_at=now_iso()
                    )
                except Exception as exc:
                    t1 = time.time()
                    self.storage.transition_job(
                        job.id, "failed", error_message=_errmsg(exc), ended_at=now_iso()
                    )
                self.storage.append_exec(job.id, device_id, t0, t1)
        if program_job is not None:
            self._run_program(*program_job)
        return job.id

    def _worker_loop(self, device_id: str):
        while not self._stop.is_set():
            try:
                done = self.worker_step(device_id)
            except Exception:
                done = None
            if done is None:
                self._stop.wait(self.config.poll_interval)

    def ensure_worker(self, device_id: str) -> None:
        with self._locks_guard:
            th = self._workers.get(device_id)
            if th is not None and th.is_alive():
                return
            th = threading.Thread(target=self._worker_loop, args=(device_id,), daemon=True)
            self._workers[device_id] = th
            th.start()

    def start_workers(self) -> None:
        for doc in self.storage.list_devices():
            self.ensure_worker(doc["id"])

    def stop_workers(self) -> None:
        self._stop.set()
        for th in self._workers.values():
            th.join(timeout=5)
        self._workers.clear()
        self._stop = threading.Event()

    # -- cancellation ----------------------------------------------------------------

    def cancel(self, job_id: str, caller: User) -> Job:
        job = self.storage.get_job(job_id)
        if job is None:
            raise NotFound(f"no job {job_id}")
        if job.owner != caller.id and caller.role != "admin":
            raise Forbidden("only the owner or an admin may cancel a job")
        try:
            return self.storage.transition_job(
                job_id, "cancelled", expect=("submitted", "queued"), ended_at=now_iso()
            )
        except IllegalTransition:
            raise NotCancellable(f"job {job_id} is {job.status} and cannot be cancelled") from None

    # -- sessions ----------------------------------------------------------------------

    def open_session(self, owner: User, device_id: str, ttl_seconds: float | None = None,
                     manifest: dict | None = None, name: str = "", description: str = "") -> tuple[Job, SessionLease, str]:
        """Queue a session job; the lease activates when it reaches the head.

        Returns (job, lease, token): the token authorizes sub-job
        submission for this lease only.
        """
        ttl = ttl_seconds or self.config.default_session_ttl
        token = secrets.token_hex(16)
        session_id = new_id("s")
        payload = {"session_id": session_id, "ttl_seconds": ttl, "manifest": manifest}
        if manifest is not None:
            payload["session_token"] = token  # the hosted program needs the plaintext
        job = self._prepare_job(owner, {
            "device_id": device_id,
            "job_type": "session",
            "name": name,
            "description": description,
            "payload": payload,
        })
        lease = SessionLease(
            id=session_id, owner=owner.id, device_id=device_id, state="pending",
            ttl_seconds=float(ttl), job_id=job.id, token_hash=hash_secret(token),
        )
        # one transaction: a worker must never see the job without its lease
        self.storage.insert_queued_job_with_session(job, lease)
        return job, lease, token

    def _activate_session(self, job: Job) -> SessionLease | None:
        session_id = job.payload["session_id"]
        lease = self.storage.get_session(session_id)
        if lease is None or lease.state != "pending":
            # closed before reaching the head: nothing to hold
            state = lease.state if lease else "missing"
            try:
                self.storage.transition_job(
                    job.id, "succeeded",
                    result={"state": state, "sub_jobs": lease.sub_jobs if lease else []},
                    ended_at=now_iso(),
                )
            except IllegalTransition:
                pass
            return None
        now = time.time()
        return self.storage.update_session(
            session_id, expect_state=("pending",),
            state="active", activated_at=now, last_activity=now,
        )

    def _finalize_session_job(self, lease: SessionLease, state: str) -> None:
        try:
            self.storage.transition_job(
                lease.job_id, "succeeded",
                result={"state": state, "sub_jobs": lease.sub_jobs}, ended_at=now_iso(),
            )
        except IllegalTransition:
            pass  # manifest runner owns the job record

    def authorize_session(self, lease: SessionLease, caller: User | None, token: str | None) -> None:
        if token is not None and hash_secret(token) == lease.token_hash:
            return
        if caller is not None and (caller.id == lease.owner or caller.role == "admin"):
            return
        raise Forbidden("caller does not hold this session")

    def session_submit(self, session_id: str, draft: dict, caller: User | None = None,
                       token: str | None = None) -> Job:
        """Run a sampling/estimation sub-job immediately under an active lease."""
        lease = self.storage.get_session(session_id)
        if lease is None:
            raise NotFound(f"no session {session_id}")
        self.authorize_session(lease, caller, token)
        if lease.state == "pending":
            raise SessionNotActive(f"session {session_id} has not reached the queue head")
        if lease.state in ("closed", "expired"):
            raise LeaseExpired(f"session {session_id} is {lease.state}")
        job_type = draft.get("job_type", "sampling")
        if job_type not in ("sampling", "estimation"):
            raise ForbiddenSubJobType(f"session sub-jobs may not be {job_type!r}")
        device = self._device(lease.device_id)
        options = self._normalized_options(draft.get("options"))
        job = Job(
            id=new_id("j"),
            owner=lease.owner,
            device_id=lease.device_id,
            job_type=job_type,
            status="submitted",
            name=draft.get("name", ""),
            description=draft.get("description", ""),
            shots=draft.get("shots"),
            payload=draft.get("payload") or {},
            options={**options, "session_id": session_id},
        )
        try:
            self._validate_payload(job_type, job.payload, job.shots, device)
        except (ValidationFailed, ValueError, KeyError, TypeError) as exc:
            job.status = "failed"
            job.error_message = _errmsg(exc) if not isinstance(exc, ValidationFailed) else str(exc)
            job.ended_at = now_iso()
            self.storage.insert_job_record(job)
            raise ValidationFailed(job.error_message, job=job) from exc

        lock = self._lock_for(lease.device_id)
        with lock:
            lease = self.storage.get_session(session_id)
            if lease.state != "active":
                raise LeaseExpired(f"session {session_id} is {lease.state}")
            self.storage.update_session(session_id, last_activity=time.time())
            self.storage.insert_job_record(job)
            self.storage.transition_job(job.id, "queued")
            job = self.storage.transition_job(job.id, "running", started_at=now_iso())
            t0 = time.time()
            try:
                result = self._execute_payload(job, device)
                t1 = time.time()
                job = self.storage.transition_job(
                    job.id, "succeeded", result=result, ended_at=now_iso()
                )
            except Exception as exc:
                t1 = time.time()
                job = self.storage.transition_job(
                    job.id, "failed", error_message=_errmsg(exc), ended_at=now_iso()
                )
            self.storage.append_exec(job.id, lease.device_id, t0, t1)
            self.storage.update_session(
                session_id, last_activity=time.time(), sub_jobs=lease.sub_jobs + [job.id]
            )
        return job

    def close_session(self, session_id: str, caller: User | None = None,
                      token: str | None = None) -> SessionLease:
        lease = self.storage.get_session(session_id)
        if lease is None:
            raise NotFound(f"no session {session_id}")
        self.authorize_session(lease, caller, token)
        lock = self._lock_for(lease.device_id)
        with lock:
            lease = self.storage.get_session(session_id)
            if lease.state in ("closed", "expired"):
                raise LeaseExpired(f"session {session_id} is already {lease.state}")
            now = time.time()
            if lease.state == "pending":
                lease = self.storage.update_session(
                    session_id, expect_state=("pending",), state="closed", closed_at=now
                )
                try:
                    self.storage.transition_job(lease.job_id, "cancelled", ended_at=now_iso())
                except IllegalTransition:
                    pass
                return lease
            lease = self.storage.update_session(
                session_id, expect_state=("active",), state="closed", closed_at=now
            )
            if not self.storage.get_job(lease.job_id).payload.get("manifest"):
                self._finalize_session_job(lease, "closed")
            return lease

    # -- hosted programs ------------------------------------------------------------

    def _run_program(self, job: Job, lease: SessionLease) -> None:
        """Launch the session's program; the lease is released when it exits."""
        manifest = job.payload["manifest"]
        timeout = manifest.get("timeout_s") or self.config.default_program_timeout
        env = dict(os.environ)
        env.update({str(k): str(v) for k, v in (manifest.get("env") or {}).items()})
        if self.config.base_url:
            env["SESSION_URL"] = f"{self.config.base_url}/sessions/{lease.id}"
        env["SESSION_TOKEN"] = job.payload.get("session_token", "")
        env["SESSION_ID"] = lease.id
        env["SESSION_DEVICE"] = lease.device_id

        failure: str | None = None
        report: dict = {}
        try:
            proc = subprocess.Popen(
                [str(a) for a in manifest["command"]],
                env=env, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
            )
        except OSError as exc:
            failure = f"SpawnFailure: {exc}"
        else:
            try:
                stdout, stderr = proc.communicate(timeout=timeout)
                report = {
                    "exit_code": proc.returncode,
                    "stdout": stdout[-4000:],
                    "stderr": stderr[-4000:],
                }
                if proc.returncode != 0:
                    failure = f"program exited with code {proc.returncode}: {stderr[-500:]}"
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.communicate()
                failure = f"WallClockTimeout: program exceeded {timeout}s"

        with self._lock_for(lease.device_id):
            try:
                fresh = self.storage.update_session(
                    lease.id, expect_state=("active",), state="closed", closed_at=time.time()
                )
            except IllegalTransition:
                fresh = self.storage.get_session(lease.id)
            report["sub_jobs"] = fresh.sub_jobs
            report["state"] = fresh.state
            try:
                if failure is None:
                    self.storage.transition_job(
                        job.id, "succeeded", result=report, ended_at=now_iso()
                    )
                else:
                    self.storage.transition_job(
                        job.id, "failed", error_message=failure, ended_at=now_iso()
                    )
            except IllegalTransition:
                pass

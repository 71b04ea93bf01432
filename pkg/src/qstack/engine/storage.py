"""Durable embedded store for the whole stack (users, devices, jobs, sessions).

Backed by a single SQLite file in WAL mode behind one connection and one
process-wide lock: every mutation is a serialized transaction, so job state
transitions are atomic and readers never observe torn records. The store is
the serialization point the engine's linearizability rests on.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import uuid
from contextlib import contextmanager

from .models import ALLOWED_TRANSITIONS, ApiKey, Job, SessionLease, User, now_iso

_SCHEMA = """
CREATE TABLE IF NOT EXISTS users (
    id TEXT PRIMARY KEY,
    display_name TEXT NOT NULL,
    role TEXT NOT NULL,
    status TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS api_keys (
    key_id TEXT PRIMARY KEY,
    secret_hash TEXT NOT NULL,
    owner TEXT NOT NULL,
    created_at TEXT NOT NULL,
    revoked INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS devices (
    id TEXT PRIMARY KEY,
    spec TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS jobs (
    id TEXT PRIMARY KEY,
    owner TEXT NOT NULL,
    device_id TEXT NOT NULL,
    job_type TEXT NOT NULL,
    status TEXT NOT NULL,
    name TEXT NOT NULL DEFAULT '',
    description TEXT NOT NULL DEFAULT '',
    shots INTEGER,
    payload TEXT NOT NULL,
    options TEXT NOT NULL,
    result TEXT,
    error_message TEXT,
    queue_seq INTEGER,
    submitted_at TEXT,
    started_at TEXT,
    ended_at TEXT
);
CREATE INDEX IF NOT EXISTS jobs_queue ON jobs (device_id, status, queue_seq);
CREATE TABLE IF NOT EXISTS sessions (
    id TEXT PRIMARY KEY,
    owner TEXT NOT NULL,
    device_id TEXT NOT NULL,
    state TEXT NOT NULL,
    ttl_seconds REAL NOT NULL,
    job_id TEXT NOT NULL,
    token_hash TEXT NOT NULL,
    activated_at REAL,
    last_activity REAL,
    closed_at REAL,
    sub_jobs TEXT NOT NULL DEFAULT '[]'
);
CREATE TABLE IF NOT EXISTS exec_log (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    job_id TEXT NOT NULL,
    device_id TEXT NOT NULL,
    started_at REAL NOT NULL,
    ended_at REAL NOT NULL
);
"""


class StorageError(RuntimeError):
    pass


class IllegalTransition(StorageError):
    pass


def new_id(prefix: str = "") -> str:
    return (prefix + "-" if prefix else "") + uuid.uuid4().hex[:12]


class Storage:
    def __init__(self, path: str):
        self.path = str(path)
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.RLock()
        with self._lock:
            self._conn.executescript("PRAGMA journal_mode=WAL;")
            self._conn.executescript(_SCHEMA)
            self._conn.commit()

    def close(self):
        with self._lock:
            self._conn.commit()
            self._conn.close()

    @contextmanager
    def _tx(self):
        with self._lock:
            try:
                yield self._conn
                self._conn.commit()
            except Exception:
                self._conn.rollback()
                raise

    # -- users ---------------------------------------------------------------

    def create_user(self, display_name: str, role: str = "user", user_id: str | None = None) -> User:
        user = User(
            id=user_id or new_id("u"), display_name=display_name,
            role=role, status="active", created_at=now_iso(),
        )
        with self._tx() as c:
            c.execute(
                "INSERT INTO users VALUES (?,?,?,?,?)",
                (user.id, user.display_name, user.role, user.status, user.created_at),
            )
        return user

    def get_user(self, user_id: str) -> User | None:
        with self._lock:
            row = self._conn.execute("SELECT * FROM users WHERE id=?", (user_id,)).fetchone()
        return User(**dict(row)) if row else None

    def list_users(self) -> list[User]:
        with self._lock:
            rows = self._conn.execute("SELECT * FROM users ORDER BY created_at, id").fetchall()
        return [User(**dict(r)) for r in rows]

    def set_user_status(self, user_id: str, status: str) -> bool:
        with self._tx() as c:
            cur = c.execute("UPDATE users SET status=? WHERE id=?", (status, user_id))
        return cur.rowcount > 0

    # -- api keys ------------------------------------------------------------

    def insert_api_key(self, key: ApiKey) -> None:
        with self._tx() as c:
            c.execute(
                "INSERT INTO api_keys VALUES (?,?,?,?,?)",
                (key.key_id, key.secret_hash, key.owner, key.created_at, int(key.revoked)),
            )

    def get_api_key(self, key_id: str) -> ApiKey | None:
        with self._lock:
            row = self._conn.execute("SELECT * FROM api_keys WHERE key_id=?", (key_id,)).fetchone()
        if row is None:
            return None
        return ApiKey(
            key_id=row["key_id"], secret_hash=row["secret_hash"], owner=row["owner"],
            created_at=row["created_at"], revoked=bool(row["revoked"]),
        )

    def find_api_key_by_hash(self, secret_hash: str) -> ApiKey | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM api_keys WHERE secret_hash=?", (secret_hash,)
            ).fetchone()
        if row is None:
            return None
        return ApiKey(
            key_id=row["key_id"], secret_hash=row["secret_hash"], owner=row["owner"],
            created_at=row["created_at"], revoked=bool(row["revoked"]),
        )

    def list_api_keys(self, owner: str) -> list[ApiKey]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM api_keys WHERE owner=? ORDER BY created_at, key_id", (owner,)
            ).fetchall()
        return [
            ApiKey(key_id=r["key_id"], secret_hash=r["secret_hash"], owner=r["owner"],
                   created_at=r["created_at"], revoked=bool(r["revoked"]))
            for r in rows
        ]

    def revoke_api_key(self, key_id: str) -> bool:
        with self._tx() as c:
            cur = c.execute("UPDATE api_keys SET revoked=1 WHERE key_id=?", (key_id,))
        return cur.rowcount > 0

    # -- devices -------------------------------------------------------------

    def put_device(self, device_id: str, spec_json: dict) -> None:
        with self._tx() as c:
            c.execute(
                "INSERT INTO devices (id, spec) VALUES (?,?) "
                "ON CONFLICT(id) DO UPDATE SET spec=excluded.spec",
                (device_id, json.dumps(spec_json)),
            )

    def get_device(self, device_id: str) -> dict | None:
        with self._lock:
            row = self._conn.execute("SELECT spec FROM devices WHERE id=?", (device_id,)).fetchone()
        return json.loads(row["spec"]) if row else None

    def list_devices(self) -> list[dict]:
        with self._lock:
            rows = self._conn.execute("SELECT spec FROM devices ORDER BY id").fetchall()
        return [json.loads(r["spec"]) for r in rows]

    def delete_device(self, device_id: str) -> bool:
        with self._tx() as c:
            cur = c.execute("DELETE FROM devices WHERE id=?", (device_id,))
        return cur.rowcount > 0

    # -- jobs ----------------------------------------------------------------

    def _enqueue(self, c, job: Job) -> Job:
        job.status = "submitted"
        job.submitted_at = job.submitted_at or now_iso()
        c.execute(
            "INSERT INTO jobs (id, owner, device_id, job_type, status, name, description,"
            " shots, payload, options, result, error_message, queue_seq, submitted_at,"
            " started_at, ended_at) VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
            (
                job.id, job.owner, job.device_id, job.job_type, job.status, job.name,
                job.description, job.shots, json.dumps(job.payload), json.dumps(job.options),
                None, None, None, job.submitted_at, None, None,
            ),
        )
        row = c.execute(
            "SELECT COALESCE(MAX(queue_seq), 0) + 1 AS nxt FROM jobs WHERE device_id=?",
            (job.device_id,),
        ).fetchone()
        job.queue_seq = row["nxt"]
        job.status = "queued"
        c.execute(
            "UPDATE jobs SET status='queued', queue_seq=? WHERE id=?",
            (job.queue_seq, job.id),
        )
        return job

    def insert_queued_job(self, job: Job) -> Job:
        """Persist a fresh job and enqueue it atomically.

        The record passes through submitted -> queued inside one
        transaction; queue_seq is the strict per-device arrival order.
        """
        with self._tx() as c:
            return self._enqueue(c, job)

    def insert_queued_job_with_session(self, job: Job, lease: SessionLease) -> Job:
        """Enqueue a session job and create its lease in one transaction.

        A device worker polling the queue must never observe the job
        without the lease row, or it would activate a missing session.
        """
        with self._tx() as c:
            self._enqueue(c, job)
            c.execute(
                "INSERT INTO sessions VALUES (?,?,?,?,?,?,?,?,?,?,?)",
                (
                    lease.id, lease.owner, lease.device_id, lease.state, lease.ttl_seconds,
                    lease.job_id or job.id, lease.token_hash, lease.activated_at,
                    lease.last_activity, lease.closed_at, json.dumps(lease.sub_jobs),
                ),
            )
        return job

    def insert_job_record(self, job: Job) -> Job:
        """Persist a job outside the queue (validation failures, session sub-jobs)."""
        with self._tx() as c:
            job.submitted_at = job.submitted_at or now_iso()
            c.execute(
                "INSERT INTO jobs (id, owner, device_id, job_type, status, name, description,"
                " shots, payload, options, result, error_message, queue_seq, submitted_at,"
                " started_at, ended_at) VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                (
                    job.id, job.owner, job.device_id, job.job_type, job.status, job.name,
                    job.description, job.shots, json.dumps(job.payload), json.dumps(job.options),
                    json.dumps(job.result) if job.result is not None else None,
                    job.error_message, None, job.submitted_at, job.started_at, job.ended_at,
                ),
            )
        return job

    def get_job(self, job_id: str) -> Job | None:
        with self._lock:
            row = self._conn.execute("SELECT * FROM jobs WHERE id=?", (job_id,)).fetchone()
        return Job.from_row(row) if row else None

    def list_jobs(self, owner: str | None = None, status: str | None = None,
                  device_id: str | None = None) -> list[Job]:
        clauses, args = [], []
        if owner is not None:
            clauses.append("owner=?")
            args.append(owner)
        if status is not None:
            clauses.append("status=?")
            args.append(status)
        if device_id is not None:
            clauses.append("device_id=?")
            args.append(device_id)
        where = (" WHERE " + " AND ".join(clauses)) if clauses else ""
        with self._lock:
            rows = self._conn.execute(
                f"SELECT * FROM jobs{where} ORDER BY submitted_at, id", args
            ).fetchall()
        return [Job.from_row(r) for r in rows]

    def count_pending_jobs(self, device_id: str) -> int:
        with self._lock:
            row = self._conn.execute(
                "SELECT COUNT(*) AS n FROM jobs WHERE device_id=? AND status IN"
                " ('submitted','queued','running')",
                (device_id,),
            ).fetchone()
        return row["n"]

    def transition_job(self, job_id: str, to_status: str, *, expect: tuple = (), **fields) -> Job:
        """Atomically move a job along a legal lifecycle edge and update fields."""
        with self._tx() as c:
            row = c.execute("SELECT * FROM jobs WHERE id=?", (job_id,)).fetchone()
            if row is None:
                raise StorageError(f"job {job_id} not found")
            current = row["status"]
            if expect and current not in expect:
                raise IllegalTransition(f"job {job_id} is {current}, expected one of {expect}")
            if to_status not in ALLOWED_TRANSITIONS.get(current, set()):
                raise IllegalTransition(f"job {job_id}: {current} -> {to_status} is not legal")
            sets, args = ["status=?"], [to_status]
            for column, value in fields.items():
                sets.append(f"{column}=?")
                if column in ("payload", "options", "result"):
                    args.append(json.dumps(value) if value is not None else None)
                else:
                    args.append(value)
            args.append(job_id)
            c.execute(f"UPDATE jobs SET {', '.join(sets)} WHERE id=?", args)
            row = c.execute("SELECT * FROM jobs WHERE id=?", (job_id,)).fetchone()
        return Job.from_row(row)

    def acquire_next_job(self, device_id: str) -> Job | None:
        """Dequeue the FIFO head: queued -> running, stamped started_at."""
        with self._tx() as c:
            row = c.execute(
                "SELECT * FROM jobs WHERE device_id=? AND status='queued'"
                " ORDER BY queue_seq LIMIT 1",
                (device_id,),
            ).fetchone()
            if row is None:
                return None
            c.execute(
                "UPDATE jobs SET status='running', started_at=? WHERE id=?",
                (now_iso(), row["id"]),
            )
            row = c.execute("SELECT * FROM jobs WHERE id=?", (row["id"],)).fetchone()
        return Job.from_row(row)

    def fail_running_jobs(self, message: str) -> list[str]:
        """Crash recovery: every running job becomes failed with `message`."""
        with self._tx() as c:
            rows = c.execute("SELECT id FROM jobs WHERE status='running'").fetchall()
            ids = [r["id"] for r in rows]
            c.execute(
                "UPDATE jobs SET status='failed', error_message=?, ended_at=? WHERE status='running'",
                (message, now_iso()),
            )
        return ids

    # -- sessions ------------------------------------------------------------

    def insert_session(self, lease: SessionLease) -> None:
        with self._tx() as c:
            c.execute(
                "INSERT INTO sessions VALUES (?,?,?,?,?,?,?,?,?,?,?)",
                (
                    lease.id, lease.owner, lease.device_id, lease.state, lease.ttl_seconds,
                    lease.job_id, lease.token_hash, lease.activated_at, lease.last_activity,
                    lease.closed_at, json.dumps(lease.sub_jobs),
                ),
            )

    def get_session(self, session_id: str) -> SessionLease | None:
        with self._lock:
            row = self._conn.execute("SELECT * FROM sessions WHERE id=?", (session_id,)).fetchone()
        return SessionLease.from_row(row) if row else None

    def active_session(self, device_id: str) -> SessionLease | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM sessions WHERE device_id=? AND state='active'", (device_id,)
            ).fetchone()
        return SessionLease.from_row(row) if row else None

    def update_session(self, session_id: str, *, expect_state: tuple = (), **fields) -> SessionLease:
        with self._tx() as c:
            row = c.execute("SELECT * FROM sessions WHERE id=?", (session_id,)).fetchone()
            if row is None:
                raise StorageError(f"session {session_id} not found")
            if expect_state and row["state"] not in expect_state:
                raise IllegalTransition(
                    f"session {session_id} is {row['state']}, expected one of {expect_state}"
                )
            sets, args = [], []
            for column, value in fields.items():
                sets.append(f"{column}=?")
                args.append(json.dumps(value) if column == "sub_jobs" else value)
            args.append(session_id)
            c.execute(f"UPDATE sessions SET {', '.join(sets)} WHERE id=?", args)
            row = c.execute("SELECT * FROM sessions WHERE id=?", (session_id,)).fetchone()
        return SessionLease.from_row(row)

    def expire_stale_sessions(self, device_id: str, now: float) -> list[SessionLease]:
        """Expire active leases whose inactivity exceeded their ttl."""
        expired = []
        with self._tx() as c:
            rows = c.execute(
                "SELECT * FROM sessions WHERE device_id=? AND state='active'", (device_id,)
            ).fetchall()
            for row in rows:
                if row["last_activity"] is not None and now - row["last_activity"] > row["ttl_seconds"]:
                    c.execute(
                        "UPDATE sessions SET state='expired', closed_at=? WHERE id=?",
                        (now, row["id"]),
                    )
                    fresh = c.execute("SELECT * FROM sessions WHERE id=?", (row["id"],)).fetchone()
                    expired.append(SessionLease.from_row(fresh))
        return expired

    def expire_active_sessions(self) -> list[str]:
        """Crash recovery: any lease active at shutdown is expired."""
        with self._tx() as c:
            rows = c.execute("SELECT id FROM sessions WHERE state='active'").fetchall()
            ids = [r["id"] for r in rows]
            c.execute("UPDATE sessions SET state='expired' WHERE state='active'")
        return ids

    # -- execution log ---------------------------------------------------------

    def append_exec(self, job_id: str, device_id: str, started_at: float, ended_at: float) -> None:
        with self._tx() as c:
            c.execute(
                "INSERT INTO exec_log (job_id, device_id, started_at, ended_at) VALUES (?,?,?,?)",
                (job_id, device_id, started_at, ended_at),
            )

    def exec_log(self, device_id: str | None = None) -> list[dict]:
        sql = "SELECT * FROM exec_log"
        args: tuple = ()
        if device_id is not None:
            sql += " WHERE device_id=?"
            args = (device_id,)
        sql += " ORDER BY seq"
        with self._lock:
            rows = self._conn.execute(sql, args).fetchall()
        return [dict(r) for r in rows]

    # -- whole-store snapshot (persistence tests) ------------------------------

    def dump(self) -> dict:
        tables = ("users", "api_keys", "devices", "jobs", "sessions", "exec_log")
        out = {}
        with self._lock:
            for table in tables:
                rows = self._conn.execute(f"SELECT * FROM {table}").fetchall()
                out[table] = sorted(tuple(r) for r in rows)
        return out

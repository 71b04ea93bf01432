"""Persistent record types: jobs, session leases, users, API keys."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

JOB_TYPES = ("sampling", "estimation", "multi_manual", "session")
JOB_STATUSES = ("submitted", "queued", "running", "succeeded", "failed", "cancelled")
TERMINAL_STATUSES = ("succeeded", "failed", "cancelled")

# legal lifecycle edges; terminal states have none
ALLOWED_TRANSITIONS = {
    "submitted": {"queued", "cancelled", "failed"},
    "queued": {"running", "cancelled"},
    "running": {"succeeded", "failed"},
}


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Job:
    id: str
    owner: str
    device_id: str
    job_type: str
    status: str
    name: str = ""
    description: str = ""
    shots: int | None = None
    payload: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    result: dict | None = None
    error_message: str | None = None
    queue_seq: int | None = None
    submitted_at: str | None = None
    started_at: str | None = None
    ended_at: str | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "owner": self.owner,
            "device_id": self.device_id,
            "job_type": self.job_type,
            "status": self.status,
            "name": self.name,
            "description": self.description,
            "shots": self.shots,
            "payload": self.payload,
            "options": self.options,
            "result": self.result,
            "error_message": self.error_message,
            "submitted_at": self.submitted_at,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
        }

    @staticmethod
    def from_row(row) -> "Job":
        return Job(
            id=row["id"],
            owner=row["owner"],
            device_id=row["device_id"],
            job_type=row["job_type"],
            status=row["status"],
            name=row["name"],
            description=row["description"],
            shots=row["shots"],
            payload=json.loads(row["payload"]),
            options=json.loads(row["options"]),
            result=json.loads(row["result"]) if row["result"] else None,
            error_message=row["error_message"],
            queue_seq=row["queue_seq"],
            submitted_at=row["submitted_at"],
            started_at=row["started_at"],
            ended_at=row["ended_at"],
        )


SESSION_STATES = ("pending", "active", "closed", "expired")


@dataclass
class SessionLease:
    id: str
    owner: str
    device_id: str
    state: str
    ttl_seconds: float
    job_id: str
    token_hash: str = ""
    activated_at: float | None = None
    last_activity: float | None = None
    closed_at: float | None = None
    sub_jobs: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "owner": self.owner,
            "device_id": self.device_id,
            "state": self.state,
            "ttl_seconds": self.ttl_seconds,
            "job_id": self.job_id,
            "activated_at": self.activated_at,
            "last_activity": self.last_activity,
            "closed_at": self.closed_at,
            "sub_jobs": list(self.sub_jobs),
        }

    @staticmethod
    def from_row(row) -> "SessionLease":
        return SessionLease(
            id=row["id"],
            owner=row["owner"],
            device_id=row["device_id"],
            state=row["state"],
            ttl_seconds=row["ttl_seconds"],
            job_id=row["job_id"],
            token_hash=row["token_hash"],
            activated_at=row["activated_at"],
            last_activity=row["last_activity"],
            closed_at=row["closed_at"],
            sub_jobs=json.loads(row["sub_jobs"]),
        )


@dataclass
class User:
    id: str
    display_name: str
    role: str  # user | admin
    status: str  # active | suspended | deleted
    created_at: str

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "role": self.role,
            "status": self.status,
            "created_at": self.created_at,
        }


@dataclass
class ApiKey:
    key_id: str
    secret_hash: str
    owner: str
    created_at: str
    revoked: bool = False

    def to_json(self) -> dict:
        # the secret itself is never stored or served
        return {
            "key_id": self.key_id,
            "owner": self.owner,
            "created_at": self.created_at,
            "revoked": self.revoked,
        }

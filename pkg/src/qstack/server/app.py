"""HTTP surface: jobs, devices, users, API keys, sessions, and transpilation.

The cloud layer and the device engine run in one process; device workers
are background threads owned by the app. Everything except /health and the
machine-readable /openapi description requires an API key.
"""

from __future__ import annotations

from contextlib import asynccontextmanager

from fastapi import Depends, FastAPI, Header, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from ..devices import device_from_json
from ..engine.core import (
    DeviceBusy,
    DeviceUnavailable,
    Engine,
    EngineConfig,
    EngineError,
    Forbidden,
    ForbiddenSubJobType,
    LeaseConflict,
    LeaseExpired,
    NotCancellable,
    NotFound,
    SessionNotActive,
    UnknownDevice,
    ValidationFailed,
    hash_secret,
)
from ..engine.models import User
from ..engine.storage import Storage
from ..qasm import emit_qasm, parse_qasm
from ..transpiler import transpile
from .auth import AuthError, mint_api_key, resolve_principal

_STATUS_OF = {
    ValidationFailed: 400,
    ForbiddenSubJobType: 400,
    UnknownDevice: 404,
    NotFound: 404,
    Forbidden: 403,
    DeviceUnavailable: 409,
    DeviceBusy: 409,
    NotCancellable: 409,
    LeaseConflict: 409,
    LeaseExpired: 409,
    SessionNotActive: 409,
}


class JobDraft(BaseModel):
    model_config = ConfigDict(extra="allow")
    device_id: str
    job_type: str = "sampling"
    name: str = ""
    description: str = ""
    shots: int | None = None
    payload: dict = {}
    options: dict | None = None


class SessionDraft(BaseModel):
    model_config = ConfigDict(extra="allow")
    device_id: str
    ttl_seconds: float | None = None
    manifest: dict | None = None
    name: str = ""
    description: str = ""


class UserDraft(BaseModel):
    display_name: str
    role: str = "user"


class DevicePatch(BaseModel):
    model_config = ConfigDict(extra="allow")
    status: str | None = None
    readout_errors: list | None = None
    recalibrate: bool = False


class TranspileRequest(BaseModel):
    qasm: str
    device_id: str | None = None
    device_json: dict | None = None
    transpiler_name: str = "default"
    options: dict | None = None


def create_app(
    storage_path: str,
    *,
    base_url: str | None = None,
    bootstrap_admin_key: str | None = None,
    seed_devices: list | None = None,
    engine_config: EngineConfig | None = None,
    run_workers: bool = True,
) -> FastAPI:
    storage = Storage(storage_path)
    config = engine_config or EngineConfig()
    config.base_url = base_url or config.base_url
    engine = Engine(storage, config=config)

    bootstrap_secret = None
    if not storage.list_users():
        admin = storage.create_user("administrator", role="admin", user_id="admin")
        _, bootstrap_secret = mint_api_key(storage, admin.id, secret=bootstrap_admin_key)
    for doc in seed_devices or []:
        if storage.get_device(doc["id"]) is None:
            engine.register_device(doc)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if run_workers:
            engine.start_workers()
        yield
        engine.stop_workers()
        storage.close()

    app = FastAPI(
        title="qstack cloud API",
        version="0.1.0",
        openapi_url="/openapi",
        docs_url=None,
        redoc_url=None,
        lifespan=lifespan,
    )
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.engine = engine
    app.state.storage = storage
    app.state.bootstrap_secret = bootstrap_secret

    @app.exception_handler(EngineError)
    async def engine_error_handler(request: Request, exc: EngineError):
        status = _STATUS_OF.get(type(exc), 500)
        body = {"detail": str(exc)}
        if isinstance(exc, ValidationFailed) and exc.job is not None:
            body["job_id"] = exc.job.id
        return JSONResponse(status_code=status, content=body)

    @app.exception_handler(AuthError)
    async def auth_error_handler(request: Request, exc: AuthError):
        return JSONResponse(status_code=exc.status_code, content={"detail": exc.detail})

    def require_user(authorization: str | None = Header(default=None)) -> User:
        return resolve_principal(storage, authorization)

    def require_admin(user: User = Depends(require_user)) -> User:
        if user.role != "admin":
            raise AuthError(403, "admin role required")
        return user

    # -- health & description ------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok"}

    # -- jobs ------------------------------------------------------------------

    @app.post("/jobs", status_code=201)
    def submit_job(draft: JobDraft, user: User = Depends(require_user)):
        job = engine.submit(user, draft.model_dump())
        return {"job_id": job.id, "job": job.to_json()}

    @app.get("/jobs")
    def list_jobs(
        owner: str | None = None,
        status: str | None = None,
        device_id: str | None = None,
        user: User = Depends(require_user),
    ):
        if user.role != "admin" or owner == "me":
            owner = user.id
        jobs = storage.list_jobs(owner=owner, status=status, device_id=device_id)
        return [j.to_json() for j in jobs]

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str, user: User = Depends(require_user)):
        job = storage.get_job(job_id)
        if job is None or (job.owner != user.id and user.role != "admin"):
            raise NotFound(f"no job {job_id}")  # existence is not leaked
        return job.to_json()

    @app.post("/jobs/{job_id}/cancel")
    def cancel_job(job_id: str, user: User = Depends(require_user)):
        job = engine.cancel(job_id, user)
        return job.to_json()

    # -- devices -----------------------------------------------------------------

    @app.get("/devices")
    def list_devices(user: User = Depends(require_user)):
        return storage.list_devices()

    @app.get("/devices/{device_id}")
    def get_device(device_id: str, user: User = Depends(require_user)):
        doc = storage.get_device(device_id)
        if doc is None:
            raise NotFound(f"no device {device_id}")
        return doc

    @app.post("/devices", status_code=201)
    def register_device(doc: dict, admin: User = Depends(require_admin)):
        calibrate = doc.pop("calibrate", True)
        try:
            device_from_json(doc)  # validate before side effects
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationFailed(f"bad device spec: {exc}") from exc
        device = engine.register_device(doc, calibrate=calibrate)
        if run_workers:
            engine.ensure_worker(device.id)
        return storage.get_device(device.id)

    @app.patch("/devices/{device_id}")
    def patch_device(device_id: str, patch: DevicePatch, admin: User = Depends(require_admin)):
        try:
            engine.update_device(device_id, patch.model_dump(exclude_none=True))
        except EngineError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationFailed(f"bad device patch: {exc}") from exc
        return storage.get_device(device_id)

    @app.delete("/devices/{device_id}", status_code=204)
    def delete_device(device_id: str, admin: User = Depends(require_admin)):
        engine.delete_device(device_id)
        return Response(status_code=204)

    # -- users & keys ---------------------------------------------------------------

    @app.get("/users")
    def list_users(admin: User = Depends(require_admin)):
        return [u.to_json() for u in storage.list_users()]

    @app.post("/users", status_code=201)
    def create_user(draft: UserDraft, admin: User = Depends(require_admin)):
        user = storage.create_user(draft.display_name, role=draft.role)
        return user.to_json()

    @app.post("/users/{user_id}/suspend")
    def suspend_user(user_id: str, admin: User = Depends(require_admin)):
        if not storage.set_user_status(user_id, "suspended"):
            raise NotFound(f"no user {user_id}")
        return storage.get_user(user_id).to_json()

    @app.delete("/users/{user_id}")
    def delete_user(user_id: str, admin: User = Depends(require_admin)):
        # deletion is a status flip; the record stays for audit
        if not storage.set_user_status(user_id, "deleted"):
            raise NotFound(f"no user {user_id}")
        return storage.get_user(user_id).to_json()

    @app.post("/users/{user_id}/apikeys", status_code=201)
    def create_api_key(user_id: str, user: User = Depends(require_user)):
        if user.id != user_id and user.role != "admin":
            raise Forbidden("cannot issue keys for another user")
        if storage.get_user(user_id) is None:
            raise NotFound(f"no user {user_id}")
        key, secret = mint_api_key(storage, user_id)
        return {"key_id": key.key_id, "secret": secret, "owner": user_id}

    @app.post("/apikeys/{key_id}/revoke")
    def revoke_api_key(key_id: str, user: User = Depends(require_user)):
        key = storage.get_api_key(key_id)
        if key is None:
            raise NotFound(f"no key {key_id}")
        if key.owner != user.id and user.role != "admin":
            raise Forbidden("cannot revoke another user's key")
        storage.revoke_api_key(key_id)
        return {"key_id": key_id, "revoked": True}

    # -- sessions ----------------------------------------------------------------------

    def session_caller(session_id: str, authorization: str | None):
        """Sessions accept either the owner's API key or the lease token."""
        lease = storage.get_session(session_id)
        if lease is None:
            raise NotFound(f"no session {session_id}")
        token = (authorization or "").removeprefix("Bearer ").strip()
        if token and hash_secret(token) == lease.token_hash:
            return lease, None, token
        user = resolve_principal(storage, authorization)
        return lease, user, None

    @app.post("/sessions", status_code=201)
    def open_session(draft: SessionDraft, user: User = Depends(require_user)):
        job, lease, token = engine.open_session(
            user, draft.device_id, ttl_seconds=draft.ttl_seconds,
            manifest=draft.manifest, name=draft.name, description=draft.description,
        )
        return {"session_id": lease.id, "job_id": job.id, "token": token,
                "session": lease.to_json()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str, authorization: str | None = Header(default=None)):
        lease, user, token = session_caller(session_id, authorization)
        if token is None:
            engine.authorize_session(lease, user, token)
        return lease.to_json()

    @app.post("/sessions/{session_id}/jobs")
    def session_job(session_id: str, draft: dict,
                    authorization: str | None = Header(default=None)):
        lease, user, token = session_caller(session_id, authorization)
        job = engine.session_submit(session_id, draft, caller=user, token=token)
        return job.to_json()

    @app.post("/sessions/{session_id}/close")
    def close_session(session_id: str, authorization: str | None = Header(default=None)):
        lease, user, token = session_caller(session_id, authorization)
        lease = engine.close_session(session_id, caller=user, token=token)
        return lease.to_json()

    # -- transpiler service ---------------------------------------------------------

    @app.post("/transpile")
    def transpile_endpoint(req: TranspileRequest, user: User = Depends(require_user)):
        if req.device_json is not None:
            device = device_from_json(req.device_json)
        elif req.device_id is not None:
            doc = storage.get_device(req.device_id)
            if doc is None:
                raise NotFound(f"no device {req.device_id}")
            device = device_from_json(doc)
        else:
            raise ValidationFailed("transpile request needs device_id or device_json")
        circuit = parse_qasm(req.qasm)
        try:
            result = transpile(circuit, device, req.transpiler_name, req.options, engine.registry)
        except Exception as exc:
            raise ValidationFailed(f"{type(exc).__name__}: {exc}") from exc
        return {"qasm": emit_qasm(result.circuit), **result.to_json()}

    return app

"""API-key authentication: opaque bearer secrets stored only as hashes."""

from __future__ import annotations

import secrets

from ..engine.core import hash_secret
from ..engine.models import ApiKey, User, now_iso
from ..engine.storage import Storage, new_id


def mint_api_key(storage: Storage, owner_id: str, secret: str | None = None) -> tuple[ApiKey, str]:
    """Create and store a key; the plaintext secret is returned exactly once."""
    secret = secret or f"qk_{secrets.token_hex(20)}"
    key = ApiKey(
        key_id=new_id("k"),
        secret_hash=hash_secret(secret),
        owner=owner_id,
        created_at=now_iso(),
    )
    storage.insert_api_key(key)
    return key, secret


class AuthError(Exception):
    def __init__(self, status_code: int, detail: str):
        self.status_code = status_code
        self.detail = detail
        super().__init__(detail)


def resolve_principal(storage: Storage, authorization: str | None) -> User:
    """Authorization header -> active user, or AuthError (401/403)."""
    if not authorization:
        raise AuthError(401, "missing Authorization header")
    token = authorization.removeprefix("Bearer ").strip()
    if not token:
        raise AuthError(401, "empty credential")
    wanted = hash_secret(token)
    key = storage.find_api_key_by_hash(wanted)
    if key is None or key.revoked:
        raise AuthError(401, "unknown or revoked API key")
    owner = storage.get_user(key.owner)
    if owner is None or owner.status == "deleted":
        raise AuthError(401, "key owner no longer exists")
    if owner.status == "suspended":
        raise AuthError(403, "account suspended")
    return owner

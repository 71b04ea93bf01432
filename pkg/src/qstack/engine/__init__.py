from .models import ApiKey, Job, SessionLease, User
from .core import Engine, EngineConfig, EngineError
from .storage import Storage

__all__ = [
    "ApiKey", "Engine", "EngineConfig", "EngineError", "Job",
    "SessionLease", "Storage", "User",
]

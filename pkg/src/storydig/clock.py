"""Timestamp and id generation, isolated so tests can pin both."""

from __future__ import annotations

import uuid
from datetime import datetime, timezone


def now_iso() -> str:
    """Current UTC time as an ISO-8601 string with a Z suffix."""
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def new_id(prefix: str) -> str:
    """Short unique id like `sc-3f9c2ab81d04`."""
    return f"{prefix}-{uuid.uuid4().hex[:12]}"

from __future__ import annotations

import itertools

import pytest

import storydig.clock


@pytest.fixture
def pinned_clock(monkeypatch):
    """Deterministic ids and timestamps for byte-comparison tests."""
    ids = itertools.count()
    ticks = itertools.count()
    monkeypatch.setattr(
        storydig.clock, "new_id", lambda prefix: f"{prefix}-{next(ids):012d}"
    )
    monkeypatch.setattr(
        storydig.clock,
        "now_iso",
        lambda: f"2026-01-01T00:00:{next(ticks) % 60:02d}.000000Z",
    )

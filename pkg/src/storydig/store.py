"""File-per-project persistence with atomic saves.

Each instrument lives in `<root>/<id>.story.json` (the canonical format from
fileformat.py). Saves write a temp file in the same directory and rename it
into place, so an interrupted save leaves the previous complete version on
disk; loaders and listings ignore `*.tmp` leftovers.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

from .errors import NotFound, StorageFailure
from .fileformat import deserialize, serialize
from .model import StoryInstrument

logger = logging.getLogger(__name__)

SUFFIX = ".story.json"
_TITLE_EXCERPT = 80


def project_title(premise_text: str, logline: str | None) -> str:
    """Listing title: the logline when present, else a premise excerpt."""
    if logline:
        return logline
    text = premise_text.strip()
    return text if len(text) <= _TITLE_EXCERPT else text[: _TITLE_EXCERPT - 1] + "…"


class ProjectStore:
    def __init__(self, root_dir: str | Path):
        self.root = Path(root_dir)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageFailure(f"cannot create store root {self.root}: {exc}") from exc

    def path_for(self, project_id: str) -> Path:
        return self.root / f"{project_id}{SUFFIX}"

    def save(self, instr: StoryInstrument) -> None:
        data = serialize(instr)
        target = self.path_for(instr.id)
        tmp = target.with_name(target.name + ".tmp")
        try:
            with open(tmp, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, target)
        except OSError as exc:
            tmp.unlink(missing_ok=True)
            raise StorageFailure(f"cannot save project {instr.id}: {exc}") from exc

    def load(self, project_id: str) -> StoryInstrument:
        target = self.path_for(project_id)
        try:
            data = target.read_bytes()
        except FileNotFoundError:
            raise NotFound(f"no project {project_id!r}", project_id=project_id) from None
        except OSError as exc:
            raise StorageFailure(f"cannot read project {project_id}: {exc}") from exc
        return deserialize(data)

    def delete(self, project_id: str) -> None:
        target = self.path_for(project_id)
        if not target.exists():
            raise NotFound(f"no project {project_id!r}", project_id=project_id)
        try:
            target.unlink()
        except OSError as exc:
            raise StorageFailure(f"cannot delete project {project_id}: {exc}") from exc

    def list(self) -> list[dict]:
        """(id, title, updated_at) per project, newest first.

        Unreadable files are skipped with a warning rather than failing the
        whole listing.
        """
        rows = []
        for path in self.root.glob(f"*{SUFFIX}"):
            try:
                doc = json.loads(path.read_text(encoding="utf-8"))
                rows.append(
                    {
                        "id": doc["id"],
                        "title": project_title(doc["premise"]["text"], doc["premise"].get("logline")),
                        "updated_at": doc["updated_at"],
                    }
                )
            except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
                logger.warning("skipping unreadable project file %s: %s", path.name, exc)
        rows.sort(key=lambda r: (r["updated_at"], r["id"]), reverse=True)
        return rows

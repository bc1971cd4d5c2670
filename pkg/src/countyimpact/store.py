"""On-disk dataset store shared by the pipeline commands.

Layout under the store root::

    corpus/ features/ models/ assessments/ reports/ manifests/

Each command writes a :class:`RunManifest` into ``manifests/`` listing sha256
digests of what it read and wrote. Every other file in the store should be
listed as an output of some manifest; :func:`orphans` reports the ones that
are not.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from filelock import FileLock, Timeout

log = logging.getLogger(__name__)

SUBDIRS = ("corpus", "features", "models", "assessments", "reports", "manifests")
LOCK_NAME = ".lock"


class StoreLocked(RuntimeError):
    pass


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    inputs: dict[str, str] = field(default_factory=dict)   # path -> sha256
    outputs: dict[str, str] = field(default_factory=dict)  # store-relative path -> sha256
    notes: dict = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    status: str = "ok"

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunManifest":
        return cls(**obj)


def _now() -> str:
    # metadata only, never used for logic
    return dt.datetime.now(dt.timezone.utc).replace(microsecond=0).isoformat()


class DatasetStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def dir(self, name: str) -> Path:
        if name not in SUBDIRS:
            raise ValueError(f"unknown store area {name!r}")
        return self.root / name

    def path(self, area: str, name: str) -> Path:
        return self.dir(area) / name

    def init(self) -> None:
        for d in SUBDIRS:
            (self.root / d).mkdir(parents=True, exist_ok=True)

    def lock(self, timeout: float = 0) -> FileLock:
        """Exclusive per-store lock; one command process at a time."""
        self.root.mkdir(parents=True, exist_ok=True)
        lock = FileLock(str(self.root / LOCK_NAME), timeout=timeout)
        try:
            lock.acquire()
        except Timeout:
            raise StoreLocked(f"store {self.root} is in use by another command") from None
        return lock

    # -- manifests --------------------------------------------------------------

    def begin(self, command: str, config_hash: str) -> RunManifest:
        return RunManifest(command, config_hash, started_at=_now())

    def record_inputs(self, manifest: RunManifest, paths: Iterable[Path]) -> None:
        for p in paths:
            p = Path(p)
            if p.is_dir():
                for q in sorted(x for x in p.rglob("*") if x.is_file()):
                    manifest.inputs[self._label(q)] = file_digest(q)
            elif p.exists():
                manifest.inputs[self._label(p)] = file_digest(p)

    def record_outputs(self, manifest: RunManifest, paths: Iterable[Path]) -> None:
        for p in paths:
            manifest.outputs[Path(p).resolve().relative_to(self.root.resolve()).as_posix()] = file_digest(p)

    def _label(self, p: Path) -> str:
        try:
            return "store:" + p.resolve().relative_to(self.root.resolve()).as_posix()
        except ValueError:
            return str(p.resolve())

    def finish(self, manifest: RunManifest, name: str | None = None, status: str = "ok") -> Path:
        manifest.finished_at = _now()
        manifest.status = status
        name = name or manifest.command
        path = self.path("manifests", _safe(name) + ".json")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")
        return path

    def manifests(self) -> list[RunManifest]:
        mdir = self.root / "manifests"
        if not mdir.is_dir():
            return []
        return [RunManifest.from_json(json.loads(p.read_text(encoding="utf-8"))) for p in sorted(mdir.glob("*.json"))]

    def producer_of(self, rel: str) -> RunManifest | None:
        for m in self.manifests():
            if rel in m.outputs:
                return m
        return None

    def check_upstream(self, rels: Iterable[str], config_hash: str) -> list[str]:
        """Warnings for upstream files made under a different config (or by hand)."""
        warnings = []
        for rel in rels:
            m = self.producer_of(rel)
            if m is None:
                warnings.append(f"{rel} is not recorded in any manifest")
            elif m.config_hash != config_hash:
                warnings.append(f"manifests disagree: {rel} was produced by '{m.command}' under config "
                                f"{m.config_hash[:12]}, current config is {config_hash[:12]}")
            elif (self.root / rel).exists() and file_digest(self.root / rel) != m.outputs[rel]:
                warnings.append(f"{rel} changed since '{m.command}' wrote it")
        for w in warnings:
            log.warning(w)
        return warnings

    def orphans(self) -> list[str]:
        """Store files not listed as an output of any manifest."""
        listed = set()
        for m in self.manifests():
            listed.update(m.outputs)
        out = []
        if not self.root.is_dir():
            return out
        for p in sorted(self.root.rglob("*")):
            if not p.is_file():
                continue
            rel = p.relative_to(self.root).as_posix()
            if rel == LOCK_NAME or rel.startswith("manifests/"):
                continue
            if rel not in listed:
                out.append(rel)
        return out


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", name).strip("-")

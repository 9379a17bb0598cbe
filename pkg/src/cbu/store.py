"""Append-only run storage and the content-addressed rollout cache.

Layout of a run directory::

    rollouts.jsonl   one line per (backend, prompt hash, sampling, index)
    prompts.jsonl    full prompt text per prompt hash, for collision checks
    scores.jsonl     ScoreRecords, rewritten deterministically per run
    report.json      EvaluationReport
    manifests/       one immutable manifest per subcommand invocation
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .errors import IntegrityError
from .model import Rollout, encode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CacheKey:
    backend_id: str
    prompt_hash: str
    sampling_digest: str
    index: int

    def __post_init__(self):
        if not (self.backend_id and self.prompt_hash and self.sampling_digest) or self.index < 0:
            raise ValueError(f"incomplete cache key {self}")

    @classmethod
    def for_request(cls, request) -> "CacheKey":
        return cls(request.backend_id, request.prompt_hash, request.sampling.digest, request.index)


def _canonical(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _scan_jsonl(path: Path):
    """Yield (offset, obj); a torn final line (no newline) is cut off."""
    if not path.exists():
        return
    data = path.read_bytes()
    end = data.rfind(b"\n") + 1
    if end < len(data):
        log.warning("%s: dropping torn trailing record at byte %d", path, end)
        with open(path, "r+b") as fh:
            fh.truncate(end)
        data = data[:end]
    offset = 0
    for raw in data.splitlines(keepends=True):
        if raw.strip():
            try:
                yield offset, json.loads(raw)
            except json.JSONDecodeError:
                raise IntegrityError(f"{path}: corrupt record", offset) from None
        offset += len(raw)


class RolloutStore:
    """Rollout cache over ``rollouts.jsonl``.  One writer, many readers."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.path = self.root / "rollouts.jsonl"
        self.prompt_path = self.root / "prompts.jsonl"
        self._lock = threading.Lock()
        self._records: dict[CacheKey, dict] = {}
        self._prompts: dict[str, str] = {}
        for offset, rec in _scan_jsonl(self.path):
            try:
                key = CacheKey(rec["backend_id"], rec["prompt_hash"], rec["sampling_digest"], rec["index"])
                Rollout.from_dict(rec)
            except (KeyError, TypeError, ValueError):
                raise IntegrityError(f"{self.path}: malformed rollout", offset) from None
            if key in self._records and self._records[key] != rec:
                raise IntegrityError(f"{self.path}: conflicting records for {key}", offset)
            self._records[key] = rec
        for offset, rec in _scan_jsonl(self.prompt_path):
            try:
                self._prompts[rec["prompt_hash"]] = rec["prompt"]
            except (KeyError, TypeError):
                raise IntegrityError(f"{self.prompt_path}: malformed prompt record", offset) from None

    def __len__(self):
        return len(self._records)

    @staticmethod
    def _record(key: CacheKey, rollout: Rollout) -> dict:
        if (rollout.backend_id, rollout.prompt_hash, rollout.index) != (key.backend_id, key.prompt_hash, key.index):
            raise IntegrityError(f"rollout does not match its key {key}")
        rec = rollout.to_dict()
        rec["sampling_digest"] = key.sampling_digest
        return rec

    def put_rollout(self, key: CacheKey, rollout: Rollout, prompt: Optional[str] = None) -> bool:
        """Store a rollout; returns False when an identical record was already there."""
        rec = self._record(key, rollout)
        with self._lock:
            old = self._records.get(key)
            if old is not None:
                if old != rec:
                    raise IntegrityError(f"conflicting rollout for {key}")
                return False
            if prompt is not None:
                known = self._prompts.get(key.prompt_hash)
                if known is None:
                    self._append(self.prompt_path, {"prompt_hash": key.prompt_hash, "prompt": prompt})
                    self._prompts[key.prompt_hash] = prompt
                elif known != prompt:
                    raise IntegrityError(f"prompt hash collision on {key.prompt_hash}")
            self._append(self.path, rec)
            self._records[key] = rec
            return True

    def get_rollout(self, key: CacheKey) -> Optional[Rollout]:
        rec = self._records.get(key)
        return None if rec is None else Rollout.from_dict(rec)

    def lookup(self, request) -> Optional[str]:
        key = CacheKey.for_request(request)
        rec = self._records.get(key)
        if rec is None:
            return None
        known = self._prompts.get(key.prompt_hash)
        if known is not None and known != request.prompt:
            raise IntegrityError(f"prompt hash collision on {key.prompt_hash}")
        return rec["completion"]

    @staticmethod
    def _append(path: Path, obj: dict):
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(_canonical(obj) + "\n")
            fh.flush()


# -- datasets and outputs ---------------------------------------------------
def read_jsonl(path, cls) -> list:
    out = []
    for offset, obj in _scan_jsonl(Path(path)):
        try:
            out.append(cls.from_dict(obj))
        except (KeyError, TypeError) as exc:
            raise IntegrityError(f"{path}: bad {cls.__name__} record ({exc})", offset) from None
    return out


def write_jsonl(path, records):
    """Deterministic rewrite via a temp file, so readers never see half a file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(encode(r) + "\n")
    os.replace(tmp, path)


def dump_json(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2, allow_nan=False) + "\n"


def export_report(report, path) -> Path:
    """Write a report (object with ``to_dict`` or a plain dict) as stable JSON."""
    path = Path(path)
    payload = report.to_dict() if hasattr(report, "to_dict") else report
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dump_json(payload), encoding="utf-8", newline="\n")
    os.replace(tmp, path)
    return path


@dataclass
class RunManifest:
    command: str
    backends: dict = field(default_factory=dict)
    template_digests: dict = field(default_factory=dict)
    T: Optional[int] = None
    seeds: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    created_at: str = ""
    run_id: str = ""

    def content(self) -> dict:
        return {
            "command": self.command,
            "backends": self.backends,
            "template_digests": self.template_digests,
            "T": self.T,
            "seeds": self.seeds,
            "flags": self.flags,
            "inputs": self.inputs,
        }

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "created_at": self.created_at, **self.content()}


def write_manifest(root, manifest: RunManifest) -> Path:
    """Write once; a rerun with identical content keeps the original file."""
    blob = json.dumps(manifest.content(), sort_keys=True, ensure_ascii=False)
    manifest.run_id = hashlib.sha256(blob.encode()).hexdigest()[:16]
    mdir = Path(root) / "manifests"
    mdir.mkdir(parents=True, exist_ok=True)
    path = mdir / f"{manifest.command}-{manifest.run_id}.json"
    if path.exists():
        return path
    manifest.created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    path.write_text(dump_json(manifest.to_dict()), encoding="utf-8")
    latest = Path(root) / "manifest.json"
    latest.write_text(dump_json(manifest.to_dict()), encoding="utf-8")
    return path


def template_digest_check(recorded: dict) -> dict:
    """Map template id -> 'ok' or 'modified' against the shipped assets."""
    from .templates import shipped_digests

    shipped = shipped_digests()
    return {tid: ("ok" if shipped.get(tid) == d else "modified") for tid, d in sorted(recorded.items())}

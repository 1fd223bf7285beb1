"""stowave v0.1 - Run Persistence

Every file of a run directory is written atomically and checksummed.

Storage layout:
    <output_dir>/
        <kind>.csv / *.csv    - data tables
        summary.json          - checks and headline numbers
        fields/*.field        - optional snapshot dumps
        manifest.json         - config hash, seed, timestamps, sha256 per file

Features:
  - Atomic writes (write to <name>.partial, fsync, rename); an aborted run
    leaves only .partial files behind
  - Byte-stable CSV: floats as repr-exact .17g strings
  - Canonical JSON hashing (sorted keys, compact separators)
  - Binary .field dumps: little-endian header (N, L, t) + N³ float64 values
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import struct
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .noise import TorusGrid

logger = logging.getLogger("stowave.persistence")

MANIFEST_NAME = "manifest.json"
PARTIAL_SUFFIX = ".partial"
_FIELD_HEADER = struct.Struct("<qdd")


class ChecksumMismatch(Exception):
    """Raised when files on disk disagree with their manifest."""

    def __init__(self, mismatches: dict[str, str]):
        self.mismatches = mismatches
        listing = ", ".join(f"{name} ({why})" for name, why in sorted(mismatches.items()))
        super().__init__(f"Manifest verification failed: {listing}")


# ════════════════════════════════════════════════════════
#  HASHING
# ════════════════════════════════════════════════════════

def canonical_json(content: Any) -> str:
    return json.dumps(content, sort_keys=True, separators=(",", ":"))


def content_hash(content: dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    return hashlib.sha256(canonical_json(content).encode("utf-8")).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ════════════════════════════════════════════════════════
#  ATOMIC WRITES
# ════════════════════════════════════════════════════════

def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + PARTIAL_SUFFIX)
    with open(partial, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(partial, path)
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def render_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default) + "\n"


def _json_default(obj: Any):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


# ── Field dumps ──────────────────────────────────────────

def encode_field(grid: TorusGrid, t: float, u: np.ndarray) -> bytes:
    if u.shape != grid.shape:
        raise ValueError(f"Field shape {u.shape} does not match {grid}")
    return _FIELD_HEADER.pack(grid.N, grid.L, t) + np.ascontiguousarray(u, dtype="<f8").tobytes(order="C")


def write_field(path: str | Path, grid: TorusGrid, t: float, u: np.ndarray) -> Path:
    return atomic_write_bytes(path, encode_field(grid, t, u))


def read_field(path: str | Path) -> tuple[TorusGrid, float, np.ndarray]:
    data = Path(path).read_bytes()
    N, L, t = _FIELD_HEADER.unpack_from(data, 0)
    expected = _FIELD_HEADER.size + 8 * N ** 3
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for N={N}, found {len(data)}")
    u = np.frombuffer(data, dtype="<f8", offset=_FIELD_HEADER.size).reshape((N, N, N))
    return TorusGrid(int(N), float(L)), float(t), u.astype(float)


# ════════════════════════════════════════════════════════
#  MANIFEST
# ════════════════════════════════════════════════════════

@dataclass
class RunManifest:
    config_hash: str
    version: str
    seed: int
    kind: str
    started_at: str = ""
    finished_at: str = ""
    files: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "seed": self.seed,
            "kind": self.kind,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "files": dict(sorted(self.files.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> RunManifest:
        return cls(
            config_hash=data["config_hash"],
            version=data.get("version", "unknown"),
            seed=int(data.get("seed", 0)),
            kind=data.get("kind", ""),
            started_at=data.get("started_at", ""),
            finished_at=data.get("finished_at", ""),
            files=dict(data.get("files", {})),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> RunManifest:
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def __str__(self):
        return f"Run {self.kind} seed={self.seed} config={self.config_hash[:12]} ({len(self.files)} files)"


class RunStore:
    """Single-writer view of one run directory.

    Usage:
        store = RunStore("runs/clt")
        store.write_csv("clt.csv", ["R", "w1"], rows)
        store.write_json("summary.json", summary)
        store.finalize(manifest)   # fills checksums, writes manifest.json
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._written: list[str] = []
        self._lock = threading.Lock()

    def _record(self, path: Path) -> Path:
        with self._lock:
            rel = path.relative_to(self.root).as_posix()
            if rel not in self._written:
                self._written.append(rel)
        logger.info(f"Wrote {path}")
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        return self._record(atomic_write_text(self.root / name, render_csv(header, rows)))

    def write_json(self, name: str, data: Any) -> Path:
        return self._record(atomic_write_text(self.root / name, render_json(data)))

    def write_field(self, name: str, grid: TorusGrid, t: float, u: np.ndarray) -> Path:
        return self._record(write_field(self.root / name, grid, t, u))

    @property
    def written(self) -> list[str]:
        return list(self._written)

    def finalize(self, manifest: RunManifest) -> RunManifest:
        manifest.files = {name: sha256_file(self.root / name) for name in self._written}
        atomic_write_text(self.root / MANIFEST_NAME, render_json(manifest.to_dict()))
        logger.info(f"Manifest: {manifest}")
        return manifest


def verify_manifest(run_dir: str | Path) -> RunManifest:
    """Recompute every checksum listed in the manifest; raise on any difference."""
    run_dir = Path(run_dir)
    manifest = RunManifest.from_file(run_dir / MANIFEST_NAME)
    mismatches: dict[str, str] = {}
    for name, digest in manifest.files.items():
        path = run_dir / name
        if not path.exists():
            mismatches[name] = "missing"
        elif sha256_file(path) != digest:
            mismatches[name] = "checksum differs"
    if mismatches:
        raise ChecksumMismatch(mismatches)
    return manifest

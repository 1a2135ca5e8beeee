"""Binary field snapshots and the run manifest.

Snapshot layout (little-endian): magic ``XFLW``, u32 version = 1, u32 d,
d x u32 cells per axis, d x f64 extent per axis, f64 time, then N^d f64
cell values row-major.  One file per field per checkpoint.

The manifest (JSON) records the config hash, artifact version, wall
times, the snapshot index (time -> field -> filename) and the abort
reason if the run died; every listed file must exist and parse.
"""

from __future__ import annotations

import hashlib
import json
import struct
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .grids import Grid, validate_field

__all__ = [
    "MAGIC",
    "SNAPSHOT_VERSION",
    "SnapshotError",
    "save_snapshot",
    "load_snapshot",
    "config_hash",
    "write_manifest",
    "load_manifest",
]

MAGIC = b"XFLW"
SNAPSHOT_VERSION = 1


class SnapshotError(ValueError):
    """Corrupt header, wrong version, or shape mismatch."""


def save_snapshot(path, grid: Grid, t: float, values: np.ndarray):
    values = validate_field(grid, values, "snapshot field")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", SNAPSHOT_VERSION, grid.d))
        fh.write(struct.pack(f"<{grid.d}I", *((grid.N,) * grid.d)))
        fh.write(struct.pack(f"<{grid.d}d", *((grid.L,) * grid.d)))
        fh.write(struct.pack("<d", float(t)))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def _read_exactly(fh, count, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise SnapshotError(f"truncated snapshot file while reading {what}")
    return buf


def load_snapshot(path):
    """Returns (grid, t, values); bit-exact f64 round trip."""
    with open(path, "rb") as fh:
        if _read_exactly(fh, 4, "magic") != MAGIC:
            raise SnapshotError(f"{path}: bad magic, not a field snapshot")
        version, d = struct.unpack("<II", _read_exactly(fh, 8, "version/d"))
        if version != SNAPSHOT_VERSION:
            raise SnapshotError(f"{path}: unsupported snapshot version {version}")
        if not (1 <= d <= 3):
            raise SnapshotError(f"{path}: implausible dimension {d}")
        ns = struct.unpack(f"<{d}I", _read_exactly(fh, 4 * d, "cell counts"))
        ls = struct.unpack(f"<{d}d", _read_exactly(fh, 8 * d, "extents"))
        if len(set(ns)) != 1 or len(set(ls)) != 1:
            raise SnapshotError(f"{path}: anisotropic grids are not supported")
        (t,) = struct.unpack("<d", _read_exactly(fh, 8, "time"))
        count = int(np.prod(ns))
        raw = _read_exactly(fh, 8 * count, "cell data")
        extra = fh.read(1)
    if extra:
        raise SnapshotError(f"{path}: trailing bytes after cell data")
    grid = Grid(d=d, N=ns[0], L=ls[0])  # rejects d = 3 and non-power-of-two N
    values = np.frombuffer(raw, dtype="<f8").astype(float).reshape(grid.shape)
    return grid, t, values


# ---------------------------------------------------------------------------
# manifest


def config_hash(config_text: str) -> str:
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(out_dir, config_text: str, snapshot_index,
                   started: str | None = None, finished: str | None = None,
                   abort_reason: str | None = None):
    out = Path(out_dir)
    manifest = {
        "artifact_version": __version__,
        "config_hash": config_hash(config_text),
        "started": started or _utc_now(),
        "finished": finished or _utc_now(),
        "snapshots": snapshot_index,
        "abort_reason": abort_reason,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                       encoding="utf-8")
    return manifest


def load_manifest(traj_dir, verify: bool = True):
    traj = Path(traj_dir)
    manifest = json.loads((traj / "manifest.json").read_text(encoding="utf-8"))
    if verify:
        cfg_path = traj / "config.ini"
        if not cfg_path.exists():
            raise SnapshotError("manifest present but config.ini missing")
        text = cfg_path.read_text(encoding="utf-8")
        if config_hash(text) != manifest["config_hash"]:
            raise SnapshotError("config.ini does not match the manifest hash")
        for entry in manifest["snapshots"]:
            for fname in entry["files"].values():
                fpath = traj / fname
                if not fpath.exists():
                    raise SnapshotError(f"snapshot listed in manifest missing: {fname}")
    return manifest

"""Binary table files and JSON sidecars.

A table file is the 4-byte magic ``TPD1``, three little-endian ``u32``
dimensions ``(H, S, A)`` and then ``H * S * A`` little-endian float64 values
in row-major order.  Two-dimensional tables (Q-values, policies) are stored
with ``H = 1``.  Metadata lives next to the table in ``<stem>.json``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from tpd.errors import ArtifactFormatError
from tpd.fhtd import FhgvfTable, policy_hash
from tpd.mdp import Policy

MAGIC = b"TPD1"
_HEADER = struct.Struct("<4sIII")


def write_table(path: str | Path, values: np.ndarray) -> Path:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    if values.ndim != 3:
        raise ArtifactFormatError(f"tables must be 2-D or 3-D, got shape {values.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *values.shape))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return path


def read_table(path: str | Path) -> np.ndarray:
    """Load a table as an ``(H, S, A)`` float64 array."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ArtifactFormatError(f"cannot read table {path}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise ArtifactFormatError(f"{path}: truncated header")
    magic, h, s, a = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ArtifactFormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * h * s * a
    if len(data) != expected:
        raise ArtifactFormatError(f"{path}: expected {expected} bytes for {(h, s, a)}, found {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(h, s, a).astype(np.float64)


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def write_sidecar(path: str | Path, metadata: dict) -> Path:
    out = sidecar_path(path)
    out.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    return out


def read_sidecar(path: str | Path) -> dict:
    p = sidecar_path(path)
    try:
        return json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactFormatError(f"cannot read metadata {p}: {exc}") from exc


def save_fhgvf(table: FhgvfTable, path: str | Path, *, seed: int | None = None,
               provenance: str = "learned", extra: dict | None = None) -> Path:
    write_table(path, table.values)
    meta = {
        "kind": "fhgvf",
        "outcome": table.outcome_name,
        "horizon": table.horizon,
        "discount": table.discount,
        "seed": seed,
        "steps": int(table.steps),
        "policy_hash": policy_hash(table.target_policy) if table.target_policy is not None else None,
        "provenance": provenance,
        "shape": list(table.values.shape),
    }
    meta.update(extra or {})
    write_sidecar(path, meta)
    if table.visits is not None and provenance == "learned":
        write_table(Path(path).with_suffix(".visits.tpd"), table.visits.astype(np.float64))
    return Path(path)


def load_fhgvf(path: str | Path, policy: Policy | None = None) -> FhgvfTable:
    values = read_table(path)
    meta = read_sidecar(path)
    if meta.get("kind") != "fhgvf" or list(values.shape) != meta.get("shape", list(values.shape)):
        raise ArtifactFormatError(f"{path}: metadata does not describe this FHGVF table")
    visits_path = Path(path).with_suffix(".visits.tpd")
    visits = read_table(visits_path)[0].astype(np.int64) if visits_path.exists() else None
    return FhgvfTable(meta["outcome"], values, float(meta["discount"]), policy, visits, int(meta.get("steps", 0)))


def save_policy(policy: Policy, path: str | Path, extra: dict | None = None) -> Path:
    write_table(path, policy.probs)
    meta = {"kind": "policy", "policy_hash": policy_hash(policy), "shape": list(policy.probs.shape)}
    meta.update(extra or {})
    write_sidecar(path, meta)
    return Path(path)


def load_policy(path: str | Path) -> Policy:
    table = read_table(path)
    if table.shape[0] != 1:
        raise ArtifactFormatError(f"{path}: a policy table has H = 1, found {table.shape[0]}")
    try:
        return Policy(table[0])
    except ValueError as exc:
        raise ArtifactFormatError(f"{path}: {exc}") from exc

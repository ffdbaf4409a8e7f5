"""File formats shared with the metrics engine, implemented here from their
published layouts: the manifest CSV schema and the CXGB embedding container.

The bridge talks to the engine only through these files (and the engine's
`validate` subcommand); it imports nothing from it.
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BridgeError

LABEL_NAMES = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Enlarged Cardiomediastinum",
    "Fracture",
    "Lung Lesion",
    "Lung Opacity",
    "No Finding",
    "Pleural Effusion",
    "Pleural Other",
    "Pneumonia",
    "Pneumothorax",
    "Support Devices",
)

_MAGIC = b"CXGB"
_VERSION = 1


@dataclass(slots=True)
class ManifestRow:
    sample_id: str
    image_path: str
    split: str
    prompt_id: str
    prompt_text: Optional[str] = None
    seed: Optional[int] = None
    model_id: Optional[str] = None


def read_manifest(path: str | Path) -> list[ManifestRow]:
    """Read the engine's manifest CSV; labels are not needed on this side."""
    rows: list[ManifestRow] = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for name in ("sample_id", "image_path", "split", "prompt_id"):
            if name not in fields:
                raise BridgeError(f"{path}: manifest misses column {name!r}")
        for row in reader:
            seed = row.get("seed", "")
            rows.append(ManifestRow(
                sample_id=row["sample_id"],
                image_path=row["image_path"],
                split=row["split"],
                prompt_id=row["prompt_id"],
                prompt_text=row.get("prompt_text") or None,
                seed=int(seed) if seed not in ("", None) else None,
                model_id=row.get("model_id") or None,
            ))
    return rows


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write via a same-directory temp file and rename, so readers never
    observe a half-written file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_cxgb(path: str | Path, values: np.ndarray, sample_ids: list[str]) -> None:
    """Serialize an n-by-d float matrix with aligned ids to the CXGB layout:
    magic, u32 LE version, u64 LE n and d, float32 LE row-major values, then
    (u16 LE length, UTF-8) id entries."""
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2 or values.shape[0] != len(sample_ids):
        raise BridgeError(f"shape {values.shape} inconsistent with {len(sample_ids)} ids")
    parts = [
        _MAGIC,
        struct.pack("<I", _VERSION),
        struct.pack("<QQ", values.shape[0], values.shape[1]),
        values.tobytes(),
    ]
    for sid in sample_ids:
        raw = sid.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise BridgeError(f"sample id too long: {sid[:32]!r}...")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    atomic_write_bytes(Path(path), b"".join(parts))


def read_cxgb(path: str | Path) -> tuple[np.ndarray, list[str]]:
    """Read back a CXGB file (used for self-checks; the engine is the
    authoritative validator)."""
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise BridgeError(f"{path}: bad magic")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _VERSION:
        raise BridgeError(f"{path}: unsupported version {version}")
    n, d = struct.unpack_from("<QQ", data, 8)
    offset = 24
    values = np.frombuffer(data, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
    offset += n * d * 4
    ids = []
    for _ in range(n):
        (length,) = struct.unpack_from("<H", data, offset)
        offset += 2
        ids.append(data[offset:offset + length].decode("utf-8"))
        offset += length
    return values.copy(), ids


def write_score_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    atomic_write_text(Path(path), buf.getvalue())

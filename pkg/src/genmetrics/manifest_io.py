"""On-disk formats: sample manifests (CSV), embedding containers (CXGB),
and grayscale image loading for pixel-space comparisons.

All parsing is pure given an immutable file and safe to run concurrently on
distinct paths.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    BadLabelValueError,
    BadMagicError,
    BadSplitValueError,
    DataError,
    DecodeFailureError,
    DuplicateSampleIdError,
    IdCountMismatchError,
    MissingColumnError,
    TruncatedFileError,
    VersionUnsupportedError,
    ZeroDimensionError,
)

# Canonical 14-way condition set, in the fixed column order used by every
# stratified report. Stratum indices are stable against this tuple.
LABEL_NAMES: tuple[str, ...] = (
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

SPLITS = ("train", "test", "synthetic")

_MAGIC = b"CXGB"
_VERSION = 1


@dataclass(slots=True)
class SampleRecord:
    sample_id: str
    image_path: str
    split: str
    labels: tuple[bool, ...]
    prompt_id: str
    prompt_text: Optional[str] = None
    seed: Optional[int] = None
    model_id: Optional[str] = None


@dataclass
class SampleManifest:
    records: list[SampleRecord]
    label_names: tuple[str, ...] = LABEL_NAMES

    def __post_init__(self):
        seen: set[str] = set()
        width = len(self.label_names)
        for rec in self.records:
            if rec.sample_id in seen:
                raise DuplicateSampleIdError(rec.sample_id)
            seen.add(rec.sample_id)
            if len(rec.labels) != width:
                raise DataError(
                    f"record {rec.sample_id!r} has {len(rec.labels)} labels, expected {width}"
                )
            if rec.split not in SPLITS:
                raise BadSplitValueError(rec.split, -1)

    def __len__(self) -> int:
        return len(self.records)

    def sample_ids(self) -> list[str]:
        return [r.sample_id for r in self.records]

    def label_matrix(self) -> np.ndarray:
        """Records-by-labels boolean matrix in record order."""
        return np.array([r.labels for r in self.records], dtype=bool).reshape(
            len(self.records), len(self.label_names)
        )


_REQUIRED_COLUMNS = ("sample_id", "image_path", "split", "prompt_id")
_OPTIONAL_COLUMNS = ("seed", "model_id", "prompt_text")


def parse_manifest(path: str | Path) -> SampleManifest:
    """Parse a manifest CSV into a SampleManifest, preserving row order.

    The header must name sample_id, image_path, split, prompt_id and one
    column per condition in LABEL_NAMES; seed, model_id and prompt_text are
    optional. Label cells must be 0 or 1.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumnError("sample_id") from None
        col = {name: i for i, name in enumerate(header)}
        for name in _REQUIRED_COLUMNS:
            if name not in col:
                raise MissingColumnError(name)
        for name in LABEL_NAMES:
            if name not in col:
                raise MissingColumnError(name)

        label_idx = [col[name] for name in LABEL_NAMES]
        records: list[SampleRecord] = []
        seen: set[str] = set()
        for rownum, row in enumerate(reader, start=1):
            if not row:
                continue
            sample_id = row[col["sample_id"]]
            if sample_id in seen:
                raise DuplicateSampleIdError(sample_id)
            seen.add(sample_id)
            split = row[col["split"]]
            if split not in SPLITS:
                raise BadSplitValueError(split, rownum)
            labels = []
            for name, idx in zip(LABEL_NAMES, label_idx):
                cell = row[idx].strip()
                if cell == "0":
                    labels.append(False)
                elif cell == "1":
                    labels.append(True)
                else:
                    raise BadLabelValueError(name, cell, rownum)
            seed: Optional[int] = None
            if "seed" in col and row[col["seed"]].strip():
                try:
                    seed = int(row[col["seed"]])
                except ValueError:
                    raise DataError(f"seed must be an integer, got {row[col['seed']]!r} at data row {rownum}")
            model_id = row[col["model_id"]] or None if "model_id" in col else None
            prompt_text = row[col["prompt_text"]] or None if "prompt_text" in col else None
            records.append(
                SampleRecord(
                    sample_id=sample_id,
                    image_path=row[col["image_path"]],
                    split=split,
                    labels=tuple(labels),
                    prompt_id=row[col["prompt_id"]],
                    prompt_text=prompt_text,
                    seed=seed,
                    model_id=model_id,
                )
            )
    return SampleManifest(records=records)


# --- embedding container -----------------------------------------------------


@dataclass
class EmbeddingMatrix:
    """n-by-d feature matrix with aligned sample ids.

    Values are stored in float32 (the container's storage precision); every
    metric promotes to float64 before accumulating.
    """

    values: np.ndarray
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise DataError(f"embedding values must be 2-D, got shape {self.values.shape}")
        if len(self.sample_ids) != self.values.shape[0]:
            raise IdCountMismatchError(
                f"{len(self.sample_ids)} sample ids for {self.values.shape[0]} rows"
            )
        seen: set[str] = set()
        for sid in self.sample_ids:
            if sid in seen:
                raise DuplicateSampleIdError(sid)
            seen.add(sid)
        if not np.isfinite(self.values).all():
            raise DataError("embedding values must all be finite")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def as_float64(self) -> np.ndarray:
        return self.values.astype(np.float64)

    def select(self, ids: Sequence[str]) -> "EmbeddingMatrix":
        """Row-subset by sample id, in the order given."""
        index = {sid: i for i, sid in enumerate(self.sample_ids)}
        rows = [index[i] for i in ids]
        return EmbeddingMatrix(values=self.values[rows], sample_ids=list(ids))


def write_embeddings(m: EmbeddingMatrix, path: str | Path) -> None:
    """Serialize to the CXGB container.

    Layout: magic "CXGB", u32 LE version, u64 LE n, u64 LE d, n*d float32 LE
    row-major, then one (u16 LE byte length, UTF-8 bytes) entry per row id.
    """
    path = Path(path)
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", _VERSION))
    buf.write(struct.pack("<QQ", m.n, m.d))
    buf.write(np.ascontiguousarray(m.values, dtype="<f4").tobytes())
    for sid in m.sample_ids:
        raw = sid.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise DataError(f"sample id too long to encode: {sid[:32]!r}...")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
    path.write_bytes(buf.getvalue())


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read a CXGB container; inverse of write_embeddings, bit-exact."""
    data = Path(path).read_bytes()
    view = memoryview(data)
    if len(view) < 4 or bytes(view[:4]) != _MAGIC:
        raise BadMagicError(f"{path}: not a CXGB file")
    if len(view) < 24:
        raise TruncatedFileError(f"{path}: header truncated")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != _VERSION:
        raise VersionUnsupportedError(f"{path}: version {version} unsupported")
    n, d = struct.unpack_from("<QQ", view, 8)
    offset = 24
    nbytes = n * d * 4
    if len(view) < offset + nbytes:
        raise TruncatedFileError(f"{path}: value block truncated")
    values = np.frombuffer(view, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
    offset += nbytes
    ids: list[str] = []
    for _ in range(n):
        if offset == len(view):
            raise IdCountMismatchError(f"{path}: {len(ids)} id entries for n={n}")
        if offset + 2 > len(view):
            raise TruncatedFileError(f"{path}: id table truncated")
        (length,) = struct.unpack_from("<H", view, offset)
        offset += 2
        if offset + length > len(view):
            raise TruncatedFileError(f"{path}: id table truncated")
        ids.append(bytes(view[offset : offset + length]).decode("utf-8"))
        offset += length
    if offset != len(view):
        raise DataError(f"{path}: {len(view) - offset} trailing bytes after id table")
    return EmbeddingMatrix(values=values.copy(), sample_ids=ids)


# --- grayscale image loading --------------------------------------------------


@dataclass
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) float64 in [0, 1]


def load_gray_image(path: str | Path, target_side: int) -> GrayImage:
    """Decode a PNG/JPEG, convert to luminance, bilinear-resize to a square
    of target_side pixels, and scale intensities to [0, 1]."""
    if target_side < 1:
        raise ZeroDimensionError(f"target_side must be >= 1, got {target_side}")
    try:
        with Image.open(path) as img:
            img.load()
            if img.width < 1 or img.height < 1:
                raise ZeroDimensionError(f"{path}: zero-sized image")
            # 16-bit grayscale keeps its depth; everything else goes through
            # 8-bit luminance before the float conversion.
            if img.mode in ("I", "I;16", "I;16L", "I;16B"):
                scale = 65535.0
                fimg = img.convert("I").convert("F")
            else:
                scale = 255.0
                fimg = img.convert("L").convert("F")
            fimg = fimg.resize((target_side, target_side), Image.BILINEAR)
            arr = np.asarray(fimg, dtype=np.float64) / scale
    except UnidentifiedImageError as exc:
        raise DecodeFailureError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise DecodeFailureError(f"{path}: {exc}") from exc
    np.clip(arr, 0.0, 1.0, out=arr)
    return GrayImage(width=target_side, height=target_side, pixels=arr)

"""Job runners: embedding extraction, image-text alignment scoring, and
pairwise re-identification scoring.

Every runner writes its output atomically plus a deterministic job record
(encoder name, preprocessing, input digests), so re-running an identical
job is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DecodeError, JobSpecError, PairResolutionError
from .formats import (
    ManifestRow,
    atomic_write_text,
    read_manifest,
    write_cxgb,
    write_score_csv,
)
from .registry import load_gray, resolve_encoder, resolve_reid_scorer, resolve_text_embedder

_PIXEL_SIDE = 224


@dataclass
class ExtractionJob:
    manifest: str
    encoder: str
    output: str
    images_root: Optional[str] = None
    batch_size: int = 32
    device: str = "cpu"


@dataclass
class AlignmentJob:
    manifest: str
    image_encoder: str
    text_embedder: str
    output: str
    images_root: Optional[str] = None
    batch_size: int = 32
    device: str = "cpu"


@dataclass
class ReidJob:
    real_manifest: str
    fake_manifest: str
    scorer: str
    output: str
    images_root: Optional[str] = None
    batch_size: int = 32
    device: str = "cpu"
    with_distances: bool = True


def _resolve_path(root: Optional[str], rel: str) -> Path:
    return Path(root) / rel if root else Path(rel)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_job_record(output: Path, kind: str, params: dict, inputs: list[Path]) -> None:
    record = {
        "job": kind,
        "params": params,
        "inputs": {str(p): _sha256(p) for p in sorted(inputs)},
    }
    atomic_write_text(output.with_suffix(output.suffix + ".record.json"),
                      json.dumps(record, indent=2, sort_keys=True) + "\n")


def run_extraction(job: ExtractionJob) -> Path:
    """One embedding row per manifest record, ids in manifest order.

    Rows whose image is missing or undecodable are skipped and listed in a
    failure report next to the output; n shrinks accordingly.
    """
    rows = read_manifest(job.manifest)
    encoder = resolve_encoder(job.encoder)
    kept_ids: list[str] = []
    kept_paths: list[Path] = []
    failures: list[dict] = []
    for row in rows:
        path = _resolve_path(job.images_root, row.image_path)
        if not path.is_file():
            failures.append({"sample_id": row.sample_id, "image_path": str(path),
                             "reason": "missing file"})
            continue
        kept_ids.append(row.sample_id)
        kept_paths.append(path)

    blocks: list[np.ndarray] = []
    clean_ids: list[str] = []
    for start in range(0, len(kept_paths), job.batch_size):
        batch_paths = kept_paths[start:start + job.batch_size]
        batch_ids = kept_ids[start:start + job.batch_size]
        try:
            blocks.append(encoder.embed_images(batch_paths))
            clean_ids.extend(batch_ids)
        except DecodeError:
            # fall back to per-image to pinpoint the bad ones
            for sid, p in zip(batch_ids, batch_paths):
                try:
                    blocks.append(encoder.embed_images([p]))
                    clean_ids.append(sid)
                except DecodeError as exc:
                    failures.append({"sample_id": sid, "image_path": str(p),
                                     "reason": str(exc)})

    values = np.concatenate(blocks, axis=0) if blocks else np.zeros((0, encoder.dim), "<f4")
    output = Path(job.output)
    write_cxgb(output, values, clean_ids)
    atomic_write_text(output.with_suffix(output.suffix + ".failures.json"),
                      json.dumps(failures, indent=2, sort_keys=True) + "\n")
    _write_job_record(
        output, "extract",
        {"encoder": encoder.name, "dim": encoder.dim,
         "preprocessing": encoder.preprocessing, "batch_size": job.batch_size,
         "device": job.device, "n": len(clean_ids), "n_failed": len(failures)},
        [Path(job.manifest)],
    )
    return output


def run_alignment(job: AlignmentJob) -> Path:
    """Cosine similarity between each record's image embedding and its
    prompt-text embedding; CSV with sample_id, alignment_score."""
    rows = [r for r in read_manifest(job.manifest)]
    encoder = resolve_encoder(job.image_encoder)
    text_embed = resolve_text_embedder(job.text_embedder)
    out_rows: list[list] = []
    for start in range(0, len(rows), job.batch_size):
        batch = rows[start:start + job.batch_size]
        image_vecs = encoder.embed_images(
            [_resolve_path(job.images_root, r.image_path) for r in batch]
        ).astype(np.float64)
        for row, vec in zip(batch, image_vecs):
            text_vec = text_embed(row.prompt_text or "")
            if text_vec.shape[0] != vec.shape[0]:
                raise JobSpecError(
                    f"text embedder dim {text_vec.shape[0]} != image encoder dim {vec.shape[0]}"
                )
            norm = np.linalg.norm(vec)
            score = float(vec @ text_vec / norm) if norm > 0 else 0.0
            out_rows.append([row.sample_id, repr(max(-1.0, min(1.0, score)))])
    output = Path(job.output)
    write_score_csv(output, ["sample_id", "alignment_score"], out_rows)
    _write_job_record(
        output, "align",
        {"image_encoder": encoder.name, "text_embedder": job.text_embedder,
         "batch_size": job.batch_size, "device": job.device, "n": len(out_rows)},
        [Path(job.manifest)],
    )
    return output


def run_reid(job: ReidJob) -> Path:
    """Score every (real, synthetic-seed) pair resolved by prompt_id; CSV
    with prompt_id, seed, reid_score, pixel_distance, latent_distance."""
    real_rows = read_manifest(job.real_manifest)
    fake_rows = read_manifest(job.fake_manifest)
    real_by_prompt: dict[str, ManifestRow] = {}
    for row in real_rows:
        if row.split != "synthetic" and row.prompt_id not in real_by_prompt:
            real_by_prompt[row.prompt_id] = row
    pairs: list[tuple[ManifestRow, ManifestRow]] = []
    for row in fake_rows:
        if row.split != "synthetic":
            continue
        if row.seed is None:
            raise PairResolutionError(f"synthetic record {row.sample_id!r} has no seed")
        real = real_by_prompt.get(row.prompt_id)
        if real is None:
            raise PairResolutionError(
                f"no real record for prompt {row.prompt_id!r} (synthetic {row.sample_id!r})"
            )
        pairs.append((real, row))

    scorer = resolve_reid_scorer(job.scorer)
    out_rows: list[list] = []
    for start in range(0, len(pairs), job.batch_size):
        batch = pairs[start:start + job.batch_size]
        real_paths = [_resolve_path(job.images_root, r.image_path) for r, _ in batch]
        fake_paths = [_resolve_path(job.images_root, f.image_path) for _, f in batch]
        scores = scorer.score_pairs(real_paths, fake_paths)
        feats_real = scorer.encoder.embed_images(real_paths).astype(np.float64)
        feats_fake = scorer.encoder.embed_images(fake_paths).astype(np.float64)
        for (real, fake), score, fr, ff, rp, fp in zip(
                batch, scores, feats_real, feats_fake, real_paths, fake_paths):
            if job.with_distances:
                pix = _pixel_distance(rp, fp)
                lat = _unit_distance(fr, ff)
                out_rows.append([real.prompt_id, fake.seed, repr(float(score)),
                                 repr(pix), repr(lat)])
            else:
                out_rows.append([real.prompt_id, fake.seed, repr(float(score)), "", ""])
    output = Path(job.output)
    write_score_csv(
        output,
        ["prompt_id", "seed", "reid_score", "pixel_distance", "latent_distance"],
        out_rows,
    )
    _write_job_record(
        output, "reid",
        {"scorer": job.scorer, "batch_size": job.batch_size, "device": job.device,
         "with_distances": job.with_distances, "n_pairs": len(out_rows)},
        [Path(job.real_manifest), Path(job.fake_manifest)],
    )
    return output


def _pixel_distance(a: Path, b: Path) -> float:
    diff = (load_gray(a, _PIXEL_SIDE) - load_gray(b, _PIXEL_SIDE)).ravel()
    return float(np.sqrt(diff @ diff))


def _unit_distance(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    diff = a / na - b / nb
    return float(np.sqrt(diff @ diff))


# --- job-spec JSON ------------------------------------------------------------------

_JOB_TYPES = {
    "extract": (ExtractionJob, run_extraction),
    "align": (AlignmentJob, run_alignment),
    "reid": (ReidJob, run_reid),
}


def run_job_file(path: str | Path) -> Path:
    """Run a job described by a small JSON document: {"type": ..., plus the
    job's fields}. Paths follow the engine's config conventions."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise JobSpecError(f"cannot read job spec {path}: {exc}") from exc
    if not isinstance(doc, dict) or "type" not in doc:
        raise JobSpecError("job spec must be a JSON object with a 'type' key")
    kind = doc.pop("type")
    if kind not in _JOB_TYPES:
        raise JobSpecError(f"unknown job type {kind!r}; expected one of {sorted(_JOB_TYPES)}")
    cls, runner = _JOB_TYPES[kind]
    try:
        job = cls(**doc)
    except TypeError as exc:
        raise JobSpecError(str(exc)) from exc
    return runner(job)

"""Re-identification risk statistics over multi-seed generations.

Each training prompt is regenerated under several random seeds; every
(real, synthetic-seed) pair carries a re-identification score from an
external scorer plus pixel- and latent-space distances. The audit keeps,
per prompt, the riskiest generation (max score, min distances) and then
aggregates across prompts.

Scores arrive via CSV; the engine can fill in missing distances itself from
images and embedding files, but never runs the scoring network.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DimensionMismatchError,
    EmptyInputError,
    MissingColumnError,
    ShapeMismatchError,
    ShortGroupWarning,
    ZeroVectorError,
)
from .manifest_io import GrayImage, SampleManifest, load_gray_image


@dataclass
class PrivacyPairRecord:
    """One (real image, synthetic generation) comparison."""

    prompt_id: str
    seed: int
    reid_score: float
    pixel_distance: Optional[float] = None
    latent_distance: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.reid_score <= 1.0):
            raise DataError(f"reid_score must lie in [0,1], got {self.reid_score}")
        for name, value in (("pixel_distance", self.pixel_distance),
                            ("latent_distance", self.latent_distance)):
            if value is not None and not (math.isfinite(value) and value >= 0.0):
                raise DataError(f"{name} must be finite and >= 0, got {value}")


@dataclass
class PrivacyConfig:
    delta: float = 0.85
    seeds_per_prompt: int = 10
    num_prompts: int = 2000
    # Aggregate rows average the per-prompt extrema by default (the
    # multi-seed protocol); set this to average every raw pair instead.
    aggregate_raw_pairs: bool = False

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta must lie in (0,1), got {self.delta}")
        if self.seeds_per_prompt < 1:
            raise ConfigError(f"seeds_per_prompt must be >= 1, got {self.seeds_per_prompt}")
        if self.num_prompts < 1:
            raise ConfigError(f"num_prompts must be >= 1, got {self.num_prompts}")


@dataclass
class PromptExtrema:
    prompt_id: str
    max_reid: float
    min_pixel: Optional[float]
    min_latent: Optional[float]
    n_seeds: int


@dataclass
class PrivacySummary:
    avg_reid: float
    avg_latent: Optional[float]
    avg_pixel: Optional[float]
    max_reid: float
    count_over_delta: int
    num_prompts: int
    per_prompt: list[PromptExtrema]


def pixel_distance(a: GrayImage, b: GrayImage) -> float:
    """L2 norm of the pixel-wise difference over [0,1]-scaled intensities."""
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeMismatchError(
            f"image shapes differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    diff = a.pixels.ravel() - b.pixels.ravel()
    return float(np.sqrt(diff @ diff))


def latent_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance after scaling both vectors to unit L2 norm."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("latent_distance needs nonzero vectors")
    diff = a / na - b / nb
    return float(np.sqrt(diff @ diff))


def per_prompt_extrema(records: list[PrivacyPairRecord], cfg: PrivacyConfig) -> list[PromptExtrema]:
    """Riskiest generation per prompt: max score, min distances over seeds.

    Prompts come out in first-appearance order. Groups holding fewer than
    cfg.seeds_per_prompt records are summarized anyway, with a
    ShortGroupWarning.
    """
    if not records:
        raise EmptyInputError("no privacy pair records")
    groups: dict[str, list[PrivacyPairRecord]] = {}
    for rec in records:
        groups.setdefault(rec.prompt_id, []).append(rec)
    out: list[PromptExtrema] = []
    for prompt_id, group in groups.items():
        if len(group) < cfg.seeds_per_prompt:
            warnings.warn(
                f"prompt {prompt_id!r} has {len(group)} of {cfg.seeds_per_prompt} expected seeds",
                ShortGroupWarning,
                stacklevel=2,
            )
        pixels = [r.pixel_distance for r in group if r.pixel_distance is not None]
        latents = [r.latent_distance for r in group if r.latent_distance is not None]
        out.append(
            PromptExtrema(
                prompt_id=prompt_id,
                max_reid=max(r.reid_score for r in group),
                min_pixel=min(pixels) if pixels else None,
                min_latent=min(latents) if latents else None,
                n_seeds=len(group),
            )
        )
    return out


def _mean(values: list[float]) -> Optional[float]:
    """Mean over a canonical (sorted) order, so record order cannot leak
    into the result even at the last ulp."""
    if not values:
        return None
    return float(np.sort(np.asarray(values, dtype=np.float64)).mean())


def summarize_privacy(per_prompt: list[PromptExtrema], cfg: PrivacyConfig) -> PrivacySummary:
    """Dataset-level aggregates over per-prompt extrema.

    count_over_delta uses a strict inequality: a prompt whose max score
    equals delta exactly is not counted.
    """
    if not per_prompt:
        raise EmptyInputError("no per-prompt extrema")
    max_scores = [p.max_reid for p in per_prompt]
    return PrivacySummary(
        avg_reid=_mean(max_scores),
        avg_latent=_mean([p.min_latent for p in per_prompt if p.min_latent is not None]),
        avg_pixel=_mean([p.min_pixel for p in per_prompt if p.min_pixel is not None]),
        max_reid=max(max_scores),
        count_over_delta=sum(1 for s in max_scores if s > cfg.delta),
        num_prompts=len(per_prompt),
        per_prompt=per_prompt,
    )


def audit_privacy(records: list[PrivacyPairRecord], cfg: PrivacyConfig) -> PrivacySummary:
    """Group, take extrema, and aggregate in one step.

    With cfg.aggregate_raw_pairs the Avg. rows are recomputed over every
    raw pair record instead of per-prompt extrema; max and the delta count
    stay per-prompt either way.
    """
    summary = summarize_privacy(per_prompt_extrema(records, cfg), cfg)
    if cfg.aggregate_raw_pairs:
        summary.avg_reid = _mean([r.reid_score for r in records])
        summary.avg_pixel = _mean([r.pixel_distance for r in records if r.pixel_distance is not None])
        summary.avg_latent = _mean([r.latent_distance for r in records if r.latent_distance is not None])
    return summary


# --- score files ---------------------------------------------------------------

_SCORE_COLUMNS = ("prompt_id", "seed", "reid_score")


def read_score_csv(path: str | Path) -> list[PrivacyPairRecord]:
    """Read a score CSV with header prompt_id, seed, reid_score and optional
    pixel_distance, latent_distance columns."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for name in _SCORE_COLUMNS:
            if name not in fields:
                raise MissingColumnError(name)
        records: list[PrivacyPairRecord] = []
        for rownum, row in enumerate(reader, start=1):
            try:
                records.append(
                    PrivacyPairRecord(
                        prompt_id=row["prompt_id"],
                        seed=int(row["seed"]),
                        reid_score=float(row["reid_score"]),
                        pixel_distance=_opt_float(row.get("pixel_distance")),
                        latent_distance=_opt_float(row.get("latent_distance")),
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path}: bad value at data row {rownum}: {exc}") from exc
    return records


def _opt_float(cell: Optional[str]) -> Optional[float]:
    if cell is None or cell.strip() == "":
        return None
    return float(cell)


def fill_pair_distances(
    records: list[PrivacyPairRecord],
    real_manifest: SampleManifest,
    fake_manifest: SampleManifest,
    real_embeddings=None,
    fake_embeddings=None,
    images_root: str | Path | None = None,
    target_side: int = 224,
) -> list[PrivacyPairRecord]:
    """Compute any missing pixel/latent distances from images and embeddings.

    The real member of each pair is the (unique) non-synthetic record with
    the pair's prompt_id; the synthetic member matches prompt_id and seed.
    Records already carrying a distance keep it.
    """
    real_by_prompt: dict[str, str] = {}
    for rec in real_manifest.records:
        if rec.split != "synthetic" and rec.prompt_id not in real_by_prompt:
            real_by_prompt[rec.prompt_id] = rec.sample_id
    fake_by_key: dict[tuple[str, int], str] = {}
    for rec in fake_manifest.records:
        if rec.split == "synthetic" and rec.seed is not None:
            fake_by_key[(rec.prompt_id, rec.seed)] = rec.sample_id

    real_paths = {r.sample_id: r.image_path for r in real_manifest.records}
    fake_paths = {r.sample_id: r.image_path for r in fake_manifest.records}
    root = Path(images_root) if images_root is not None else None
    image_cache: dict[str, GrayImage] = {}

    def image(sample_id: str, rel: str) -> GrayImage:
        if sample_id not in image_cache:
            p = root / rel if root is not None else Path(rel)
            image_cache[sample_id] = load_gray_image(p, target_side)
        return image_cache[sample_id]

    real_index = (
        {sid: i for i, sid in enumerate(real_embeddings.sample_ids)}
        if real_embeddings is not None else {}
    )
    fake_index = (
        {sid: i for i, sid in enumerate(fake_embeddings.sample_ids)}
        if fake_embeddings is not None else {}
    )

    out: list[PrivacyPairRecord] = []
    for rec in records:
        real_id = real_by_prompt.get(rec.prompt_id)
        fake_id = fake_by_key.get((rec.prompt_id, rec.seed))
        if real_id is None or fake_id is None:
            raise DataError(
                f"cannot resolve pair (prompt {rec.prompt_id!r}, seed {rec.seed}) against manifests"
            )
        pix = rec.pixel_distance
        lat = rec.latent_distance
        if pix is None and root is not None:
            pix = pixel_distance(image(real_id, real_paths[real_id]), image(fake_id, fake_paths[fake_id]))
        if lat is None and real_embeddings is not None and fake_embeddings is not None:
            lat = latent_distance(
                real_embeddings.values[real_index[real_id]],
                fake_embeddings.values[fake_index[fake_id]],
            )
        out.append(replace(rec, pixel_distance=pix, latent_distance=lat))
    return out

"""Per-condition stratified evaluation.

Every fidelity/coverage metric is recomputed independently on the samples
bearing each of the 14 condition labels; multi-label samples join every
stratum whose bit is set. Prevalence counts come from the same strata.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .distribution_stats import KidConfig, fit_gaussian, frechet_distance, kid
from .errors import IdAlignmentError
from .manifest_io import EmbeddingMatrix, SampleManifest
from .manifold_metrics import PrdcConfig, PrdcResult, prdc


@dataclass
class Stratum:
    label_name: str
    real_ids: list[str] = field(default_factory=list)
    fake_ids: list[str] = field(default_factory=list)

    @property
    def real_count(self) -> int:
        return len(self.real_ids)


@dataclass
class ConditionalConfig:
    # None keeps the per-metric floors: 2 samples for FID/KID, k+1 for PRDC.
    min_stratum: Optional[int] = None
    kid: KidConfig = field(default_factory=KidConfig)
    prdc: PrdcConfig = field(default_factory=PrdcConfig)


@dataclass
class StratumReport:
    label_name: str
    n_real: int
    n_fake: int
    skipped: bool = False
    reason: Optional[str] = None
    fid: Optional[float] = None
    kid_mean: Optional[float] = None
    kid_std: Optional[float] = None
    prdc: Optional[PrdcResult] = None


@dataclass
class ConditionalReport:
    per_label: list[StratumReport]

    def row(self, label_name: str) -> StratumReport:
        for r in self.per_label:
            if r.label_name == label_name:
                return r
        raise KeyError(label_name)


def stratify(manifest: SampleManifest) -> list[Stratum]:
    """One stratum per label name, in the manifest's fixed label order.

    Non-synthetic records land in real_ids, synthetic ones in fake_ids; a
    record joins every stratum whose label bit is set. Empty strata are kept.
    """
    strata = [Stratum(label_name=name) for name in manifest.label_names]
    for rec in manifest.records:
        target = "fake_ids" if rec.split == "synthetic" else "real_ids"
        for i, bit in enumerate(rec.labels):
            if bit:
                getattr(strata[i], target).append(rec.sample_id)
    return strata


def merge_strata(real_side: list[Stratum], fake_side: list[Stratum]) -> list[Stratum]:
    """Combine the real ids of one stratification with the fake ids of another."""
    return [
        Stratum(label_name=r.label_name, real_ids=r.real_ids, fake_ids=f.fake_ids)
        for r, f in zip(real_side, fake_side)
    ]


def prevalence_counts(manifest: SampleManifest) -> dict[str, int]:
    """Real-sample count per label; multi-label samples count in each."""
    return {s.label_name: s.real_count for s in stratify(manifest)}


def conditional_metrics(
    real: EmbeddingMatrix,
    fake: EmbeddingMatrix,
    real_manifest: SampleManifest,
    fake_manifest: SampleManifest,
    cfg: ConditionalConfig | None = None,
    threads: int = 1,
) -> ConditionalReport:
    """Restrict both embedding sets to each stratum and rerun FID, KID and
    PRDC there.

    Strata below the explicit min_stratum (or below 2 samples on either
    side) are skipped with a reason; PRDC is additionally left out where a
    side cannot support k+1 neighbors. The KID subset size is clamped to
    the stratum size.
    """
    cfg = cfg or ConditionalConfig()
    real_index = {sid: i for i, sid in enumerate(real.sample_ids)}
    fake_index = {sid: i for i, sid in enumerate(fake.sample_ids)}
    strata = merge_strata(stratify(real_manifest), stratify(fake_manifest))

    reports: list[StratumReport] = []
    for stratum in strata:
        for sid in stratum.real_ids:
            if sid not in real_index:
                raise IdAlignmentError(sid, "real embedding matrix")
        for sid in stratum.fake_ids:
            if sid not in fake_index:
                raise IdAlignmentError(sid, "fake embedding matrix")
        n_real = len(stratum.real_ids)
        n_fake = len(stratum.fake_ids)
        report = StratumReport(label_name=stratum.label_name, n_real=n_real, n_fake=n_fake)

        floor = cfg.min_stratum if cfg.min_stratum is not None else 2
        if n_real < floor or n_fake < floor:
            report.skipped = True
            report.reason = f"too few samples (n_real={n_real}, n_fake={n_fake}, min={floor})"
            reports.append(report)
            continue

        r = real.select(stratum.real_ids)
        f = fake.select(stratum.fake_ids)
        report.fid = frechet_distance(fit_gaussian(r), fit_gaussian(f))
        kid_cfg = cfg.kid
        clamp = min(kid_cfg.subset_size or 1000, n_real, n_fake)
        if kid_cfg.subset_size is None or kid_cfg.subset_size > clamp:
            kid_cfg = replace(kid_cfg, subset_size=clamp)
        kid_res = kid(r, f, kid_cfg)
        report.kid_mean = kid_res.mean
        report.kid_std = kid_res.std
        if n_real >= cfg.prdc.k + 1 and n_fake >= cfg.prdc.k + 1:
            report.prdc = prdc(r, f, cfg.prdc, threads=threads)
        reports.append(report)
    return ConditionalReport(per_label=reports)

from __future__ import annotations

import json

import numpy as np
import pytest

from encoder_bridge.errors import JobSpecError, ModelLoadError, PairResolutionError
from encoder_bridge.formats import read_cxgb, read_manifest, write_cxgb
from encoder_bridge.jobs import (
    AlignmentJob,
    ExtractionJob,
    ReidJob,
    run_alignment,
    run_extraction,
    run_job_file,
    run_reid,
)
from encoder_bridge.registry import resolve_encoder, resolve_reid_scorer, resolve_text_embedder

from .conftest_bridge import write_images, write_manifest


class TestRegistry:
    def test_projection_encoder_shape_and_norm(self, tmp_path):
        (name,) = write_images(tmp_path, 1)
        enc = resolve_encoder("gray-proj-32")
        out = enc.embed_images([tmp_path / name])
        assert out.shape == (1, 32)
        assert out.dtype == np.float32
        assert np.linalg.norm(out[0]) == pytest.approx(1.0, abs=1e-5)

    def test_encoder_deterministic(self, tmp_path):
        (name,) = write_images(tmp_path, 1)
        a = resolve_encoder("gray-proj-16").embed_images([tmp_path / name])
        b = resolve_encoder("gray-proj-16").embed_images([tmp_path / name])
        assert np.array_equal(a, b)

    def test_different_names_differ(self, tmp_path):
        (name,) = write_images(tmp_path, 1)
        a = resolve_encoder("gray-proj-16").embed_images([tmp_path / name])
        b = resolve_encoder("gray-proj-32").embed_images([tmp_path / name])
        assert a.shape != b.shape

    def test_unknown_encoder(self):
        with pytest.raises(ModelLoadError):
            resolve_encoder("resnet-900b")

    def test_bad_torchscript_path(self, tmp_path):
        bad = tmp_path / "weights.pt"
        bad.write_bytes(b"not a torchscript archive")
        with pytest.raises(ModelLoadError):
            resolve_encoder(f"torchscript:{bad}")

    def test_text_embedder_unit_norm(self):
        embed = resolve_text_embedder("hashed-bow-32")
        vec = embed("small right pleural effusion with atelectasis")
        assert vec.shape == (32,)
        assert np.linalg.norm(vec) == pytest.approx(1.0)
        assert np.array_equal(vec, embed("Small right pleural effusion, with atelectasis."))

    def test_reid_scorer_monotone_in_distance(self, tmp_path):
        names = write_images(tmp_path, 2)
        scorer = resolve_reid_scorer("siamese-gray-proj-32")
        same = scorer.score_pairs([tmp_path / names[0]], [tmp_path / names[0]])[0]
        diff = scorer.score_pairs([tmp_path / names[0]], [tmp_path / names[1]])[0]
        assert 0.0 <= diff <= 1.0
        assert same > diff


class TestExtraction:
    def test_ids_mirror_manifest_order(self, tmp_path):
        names = write_images(tmp_path / "img", 5)
        manifest = write_manifest(tmp_path / "m.csv", [
            {"sample_id": f"s{i}", "image_path": n} for i, n in enumerate(names)
        ])
        out = run_extraction(ExtractionJob(
            manifest=str(manifest), encoder="gray-proj-16",
            output=str(tmp_path / "e.cxgb"), images_root=str(tmp_path / "img"),
        ))
        values, ids = read_cxgb(out)
        assert ids == [f"s{i}" for i in range(5)]
        assert values.shape == (5, 16)

    def test_duplicate_paths_give_identical_rows(self, tmp_path):
        (name,) = write_images(tmp_path / "img", 1)
        manifest = write_manifest(tmp_path / "m.csv", [
            {"sample_id": "a", "image_path": name},
            {"sample_id": "b", "image_path": name},
        ])
        values, _ = read_cxgb(run_extraction(ExtractionJob(
            manifest=str(manifest), encoder="gray-proj-16",
            output=str(tmp_path / "e.cxgb"), images_root=str(tmp_path / "img"),
        )))
        assert np.array_equal(values[0], values[1])

    def test_missing_image_skipped_and_reported(self, tmp_path):
        names = write_images(tmp_path / "img", 2)
        manifest = write_manifest(tmp_path / "m.csv", [
            {"sample_id": "a", "image_path": names[0]},
            {"sample_id": "gone", "image_path": "missing.png"},
            {"sample_id": "b", "image_path": names[1]},
        ])
        out = run_extraction(ExtractionJob(
            manifest=str(manifest), encoder="gray-proj-16",
            output=str(tmp_path / "e.cxgb"), images_root=str(tmp_path / "img"),
        ))
        values, ids = read_cxgb(out)
        assert ids == ["a", "b"]
        assert values.shape[0] == 2
        failures = json.loads((tmp_path / "e.cxgb.failures.json").read_text())
        assert len(failures) == 1
        assert failures[0]["sample_id"] == "gone"

    def test_corrupt_image_skipped(self, tmp_path):
        names = write_images(tmp_path / "img", 1)
        (tmp_path / "img" / "bad.png").write_bytes(b"definitely not a png")
        manifest = write_manifest(tmp_path / "m.csv", [
            {"sample_id": "a", "image_path": names[0]},
            {"sample_id": "bad", "image_path": "bad.png"},
        ])
        out = run_extraction(ExtractionJob(
            manifest=str(manifest), encoder="gray-proj-16",
            output=str(tmp_path / "e.cxgb"), images_root=str(tmp_path / "img"),
        ))
        _, ids = read_cxgb(out)
        assert ids == ["a"]
        failures = json.loads((tmp_path / "e.cxgb.failures.json").read_text())
        assert failures[0]["sample_id"] == "bad"


class TestAlignment:
    def test_scores_in_range(self, tmp_path):
        names = write_images(tmp_path / "img", 4)
        manifest = write_manifest(tmp_path / "m.csv", [
            {"sample_id": f"s{i}", "image_path": n,
             "prompt_text": f"chest radiograph number {i} with findings"}
            for i, n in enumerate(names)
        ])
        out = run_alignment(AlignmentJob(
            manifest=str(manifest), image_encoder="gray-proj-32",
            text_embedder="hashed-bow-32", output=str(tmp_path / "align.csv"),
            images_root=str(tmp_path / "img"),
        ))
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "sample_id,alignment_score"
        assert len(lines) == 5
        for line in lines[1:]:
            score = float(line.split(",")[1])
            assert -1.0 <= score <= 1.0

    def test_dim_mismatch_rejected(self, tmp_path):
        names = write_images(tmp_path / "img", 1)
        manifest = write_manifest(tmp_path / "m.csv", [
            {"sample_id": "a", "image_path": names[0], "prompt_text": "text"},
        ])
        with pytest.raises(JobSpecError):
            run_alignment(AlignmentJob(
                manifest=str(manifest), image_encoder="gray-proj-32",
                text_embedder="hashed-bow-16", output=str(tmp_path / "align.csv"),
                images_root=str(tmp_path / "img"),
            ))


class TestReid:
    def _setup(self, tmp_path, seeds=2):
        names = write_images(tmp_path / "img", 2 + 2 * seeds)
        real_rows = [
            {"sample_id": "r0", "image_path": names[0], "split": "train", "prompt_id": "p0"},
            {"sample_id": "r1", "image_path": names[1], "split": "train", "prompt_id": "p1"},
        ]
        fake_rows = []
        idx = 2
        for p in ("p0", "p1"):
            for s in range(seeds):
                fake_rows.append({"sample_id": f"f-{p}-{s}", "image_path": names[idx],
                                  "split": "synthetic", "prompt_id": p, "seed": s})
                idx += 1
        real = write_manifest(tmp_path / "real.csv", real_rows)
        fake = write_manifest(tmp_path / "fake.csv", fake_rows)
        return real, fake

    def test_schema_and_ranges(self, tmp_path):
        real, fake = self._setup(tmp_path)
        out = run_reid(ReidJob(
            real_manifest=str(real), fake_manifest=str(fake),
            scorer="siamese-gray-proj-32", output=str(tmp_path / "scores.csv"),
            images_root=str(tmp_path / "img"),
        ))
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "prompt_id,seed,reid_score,pixel_distance,latent_distance"
        assert len(lines) == 5
        for line in lines[1:]:
            _, _, score, pix, lat = line.split(",")
            assert 0.0 <= float(score) <= 1.0
            assert float(pix) >= 0.0
            assert 0.0 <= float(lat) <= 2.0

    def test_unresolvable_prompt(self, tmp_path):
        real, fake = self._setup(tmp_path)
        rows = read_manifest(fake)
        extra = write_manifest(tmp_path / "fake2.csv", [
            {"sample_id": r.sample_id, "image_path": r.image_path, "split": "synthetic",
             "prompt_id": "p-unknown", "seed": r.seed} for r in rows
        ])
        with pytest.raises(PairResolutionError):
            run_reid(ReidJob(
                real_manifest=str(real), fake_manifest=str(extra),
                scorer="siamese-gray-proj-32", output=str(tmp_path / "s.csv"),
                images_root=str(tmp_path / "img"),
            ))


class TestJobFile:
    def test_run_extract_job(self, tmp_path):
        names = write_images(tmp_path / "img", 2)
        manifest = write_manifest(tmp_path / "m.csv", [
            {"sample_id": f"s{i}", "image_path": n} for i, n in enumerate(names)
        ])
        spec = tmp_path / "job.json"
        spec.write_text(json.dumps({
            "type": "extract", "manifest": str(manifest), "encoder": "gray-proj-16",
            "output": str(tmp_path / "e.cxgb"), "images_root": str(tmp_path / "img"),
        }))
        out = run_job_file(spec)
        _, ids = read_cxgb(out)
        assert ids == ["s0", "s1"]

    def test_bad_spec(self, tmp_path):
        spec = tmp_path / "job.json"
        spec.write_text(json.dumps({"type": "transmogrify"}))
        with pytest.raises(JobSpecError):
            run_job_file(spec)
        spec.write_text(json.dumps({"type": "extract", "bogus_field": 1}))
        with pytest.raises(JobSpecError):
            run_job_file(spec)


class TestFormats:
    def test_cxgb_round_trip(self, tmp_path, ):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(7, 5)).astype(np.float32)
        ids = [f"id{i}" for i in range(7)]
        path = tmp_path / "t.cxgb"
        write_cxgb(path, values, ids)
        back_values, back_ids = read_cxgb(path)
        assert back_ids == ids
        assert np.array_equal(back_values, values)

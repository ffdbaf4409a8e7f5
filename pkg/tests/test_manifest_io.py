from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from genmetrics.errors import (
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
from genmetrics.manifest_io import (
    LABEL_NAMES,
    EmbeddingMatrix,
    load_gray_image,
    parse_manifest,
    read_embeddings,
    write_embeddings,
)

from .conftest import write_manifest_csv


class TestParseManifest:
    def test_three_rows(self, tmp_path):
        path = write_manifest_csv(tmp_path / "m.csv", [
            {"sample_id": "a", "split": "train", "labels": [1] + [0] * 13},
            {"sample_id": "b", "split": "test", "labels": [0] * 14},
            {"sample_id": "c", "split": "synthetic", "seed": 3, "labels": [0, 1] + [0] * 12},
        ])
        manifest = parse_manifest(path)
        assert len(manifest) == 3
        assert manifest.records[0].sample_id == "a"
        assert manifest.records[0].labels[0] is True
        assert manifest.records[2].seed == 3
        assert manifest.records[1].seed is None
        assert manifest.label_names == LABEL_NAMES

    def test_order_preserved(self, tmp_path):
        ids = [f"r{i}" for i in range(25)]
        path = write_manifest_csv(tmp_path / "m.csv", [{"sample_id": i} for i in ids])
        assert parse_manifest(path).sample_ids() == ids

    def test_missing_split_column(self, tmp_path):
        path = tmp_path / "m.csv"
        header = "sample_id,image_path,prompt_id," + ",".join(LABEL_NAMES)
        path.write_text(header + "\n" + "a,a.png,p1," + ",".join("0" * 14) + "\n")
        with pytest.raises(MissingColumnError) as exc:
            parse_manifest(path)
        assert exc.value.column == "split"

    def test_missing_label_column(self, tmp_path):
        path = tmp_path / "m.csv"
        header = "sample_id,image_path,split,prompt_id," + ",".join(LABEL_NAMES[:-1])
        path.write_text(header + "\n")
        with pytest.raises(MissingColumnError) as exc:
            parse_manifest(path)
        assert exc.value.column == "Support Devices"

    def test_non_binary_label(self, tmp_path):
        path = write_manifest_csv(tmp_path / "m.csv", [
            {"sample_id": "a", "labels": [2] + [0] * 13},
        ])
        with pytest.raises(BadLabelValueError):
            parse_manifest(path)

    def test_duplicate_sample_id(self, tmp_path):
        path = write_manifest_csv(tmp_path / "m.csv", [
            {"sample_id": "a"}, {"sample_id": "a"},
        ])
        with pytest.raises(DuplicateSampleIdError):
            parse_manifest(path)

    def test_bad_split(self, tmp_path):
        path = write_manifest_csv(tmp_path / "m.csv", [
            {"sample_id": "a", "split": "validation"},
        ])
        with pytest.raises(BadSplitValueError):
            parse_manifest(path)


class TestEmbeddingRoundTrip:
    def test_small_round_trip_bit_exact(self, tmp_path, rng):
        m = EmbeddingMatrix(values=rng.normal(size=(2, 3)), sample_ids=["x", "y"])
        path = tmp_path / "e.cxgb"
        write_embeddings(m, path)
        back = read_embeddings(path)
        assert back.sample_ids == m.sample_ids
        assert back.values.dtype == np.float32
        assert np.array_equal(
            back.values.view(np.uint32), m.values.view(np.uint32)
        )

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.integers(1, 40),
        d=st.integers(1, 40),
        seed=st.integers(0, 2**31),
        unicode_ids=st.booleans(),
    )
    def test_round_trip_property(self, tmp_path_factory, n, d, seed, unicode_ids):
        rng = np.random.default_rng(seed)
        prefix = "идентификатор-" if unicode_ids else "id-"
        m = EmbeddingMatrix(
            values=rng.normal(size=(n, d)) * 10.0 ** rng.integers(-3, 4),
            sample_ids=[f"{prefix}{i}" for i in range(n)],
        )
        path = tmp_path_factory.mktemp("rt") / "e.cxgb"
        write_embeddings(m, path)
        back = read_embeddings(path)
        assert back.sample_ids == m.sample_ids
        assert (back.n, back.d) == (n, d)
        assert np.array_equal(back.values.view(np.uint32), m.values.view(np.uint32))

    def test_large_shape(self, tmp_path, rng):
        m = EmbeddingMatrix(
            values=rng.normal(size=(1000, 64)), sample_ids=[f"s{i}" for i in range(1000)]
        )
        path = tmp_path / "big.cxgb"
        write_embeddings(m, path)
        back = read_embeddings(path)
        assert np.array_equal(back.values.view(np.uint32), m.values.view(np.uint32))


class TestEmbeddingErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "e.cxgb"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(BadMagicError):
            read_embeddings(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "e.cxgb"
        path.write_bytes(b"CXGB" + struct.pack("<I", 99) + struct.pack("<QQ", 0, 0))
        with pytest.raises(VersionUnsupportedError):
            read_embeddings(path)

    def test_truncated_values(self, tmp_path):
        m = EmbeddingMatrix(values=np.ones((4, 4)), sample_ids=list("abcd"))
        path = tmp_path / "e.cxgb"
        write_embeddings(m, path)
        data = path.read_bytes()
        path.write_bytes(data[: 24 + 10])
        with pytest.raises(TruncatedFileError):
            read_embeddings(path)

    def test_id_count_mismatch(self, tmp_path):
        # header claims n=10 but only 5 id entries follow
        buf = b"CXGB" + struct.pack("<I", 1) + struct.pack("<QQ", 10, 1)
        buf += np.zeros(10, dtype="<f4").tobytes()
        for i in range(5):
            raw = f"id{i}".encode()
            buf += struct.pack("<H", len(raw)) + raw
        path = tmp_path / "e.cxgb"
        path.write_bytes(buf)
        with pytest.raises(IdCountMismatchError):
            read_embeddings(path)

    def test_truncated_id_entry(self, tmp_path):
        buf = b"CXGB" + struct.pack("<I", 1) + struct.pack("<QQ", 1, 1)
        buf += np.zeros(1, dtype="<f4").tobytes()
        buf += struct.pack("<H", 8) + b"abc"  # claims 8 bytes, holds 3
        path = tmp_path / "e.cxgb"
        path.write_bytes(buf)
        with pytest.raises(TruncatedFileError):
            read_embeddings(path)

    def test_trailing_bytes(self, tmp_path):
        m = EmbeddingMatrix(values=np.ones((1, 1)), sample_ids=["a"])
        path = tmp_path / "e.cxgb"
        write_embeddings(m, path)
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(DataError):
            read_embeddings(path)

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            EmbeddingMatrix(values=np.array([[np.nan]]), sample_ids=["a"])

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DuplicateSampleIdError):
            EmbeddingMatrix(values=np.zeros((2, 1)), sample_ids=["a", "a"])


class TestGrayImage:
    def test_black_png_resized(self, tmp_path):
        path = tmp_path / "black.png"
        Image.new("L", (512, 512), 0).save(path)
        img = load_gray_image(path, 224)
        assert (img.width, img.height) == (224, 224)
        assert img.pixels.shape == (224, 224)
        assert np.all(img.pixels == 0.0)

    def test_white_png_is_one(self, tmp_path):
        path = tmp_path / "white.png"
        Image.new("L", (64, 64), 255).save(path)
        img = load_gray_image(path, 32)
        assert np.all(img.pixels == 1.0)

    def test_rgb_jpeg_loads(self, tmp_path):
        path = tmp_path / "c.jpg"
        Image.new("RGB", (100, 80), (200, 30, 60)).save(path)
        img = load_gray_image(path, 50)
        assert img.pixels.shape == (50, 50)
        assert img.pixels.min() >= 0.0 and img.pixels.max() <= 1.0

    def test_idempotent_at_target_size(self, tmp_path, rng):
        arr = rng.integers(0, 256, size=(96, 96)).astype(np.uint8)
        path = tmp_path / "g.png"
        Image.fromarray(arr, mode="L").save(path)
        img = load_gray_image(path, 96)
        assert np.max(np.abs(img.pixels - arr / 255.0)) <= 1.0 / 255.0

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.png"
        path.write_bytes(b"not an image at all")
        with pytest.raises(DecodeFailureError):
            load_gray_image(path, 32)

    def test_zero_target(self, tmp_path):
        path = tmp_path / "black.png"
        Image.new("L", (8, 8), 0).save(path)
        with pytest.raises(ZeroDimensionError):
            load_gray_image(path, 0)

    def test_16bit_png(self, tmp_path):
        arr = np.full((16, 16), 65535, dtype=np.uint16)
        path = tmp_path / "d.png"
        Image.fromarray(arr).save(path)
        img = load_gray_image(path, 16)
        assert np.allclose(img.pixels, 1.0)

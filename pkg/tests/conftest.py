from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from genmetrics.manifest_io import LABEL_NAMES, EmbeddingMatrix

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

MANIFEST_HEADER = ["sample_id", "image_path", "split", "prompt_id", "seed",
                   "model_id", "prompt_text", *LABEL_NAMES]


def make_matrix(values, ids=None) -> EmbeddingMatrix:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if ids is None:
        ids = [f"s{i}" for i in range(values.shape[0])]
    return EmbeddingMatrix(values=values, sample_ids=list(ids))


def random_matrix(rng, n, d, ids=None, scale=1.0) -> EmbeddingMatrix:
    return make_matrix(rng.normal(scale=scale, size=(n, d)), ids)


def write_manifest_csv(path: Path, rows: list[dict]) -> Path:
    """rows hold sample_id/image_path/split/prompt_id (+ optional seed,
    model_id, prompt_text) and a `labels` list of 14 ints."""
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for row in rows:
            labels = row.get("labels", [0] * len(LABEL_NAMES))
            writer.writerow([
                row["sample_id"],
                row.get("image_path", f"{row['sample_id']}.png"),
                row.get("split", "train"),
                row.get("prompt_id", f"p-{row['sample_id']}"),
                row.get("seed", ""),
                row.get("model_id", ""),
                row.get("prompt_text", ""),
                *labels,
            ])
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)

"""Encoder registry.

Encoders are referenced by name and resolved here, so swapping the
radiograph encoder (or comparing two of them) is a matter of running two
extraction jobs with different names. Built-ins:

- ``gray-proj-<dim>`` — decode to grayscale 64x64, scale to [0,1], flatten,
  apply a fixed Gaussian random projection seeded from the encoder name,
  L2-normalize. Fully deterministic, no weights to download; the default
  stand-in wherever a pretrained radiograph encoder is not available.
- ``hashed-bow-<dim>`` — text side: hashed bag-of-words with signed
  buckets, L2-normalized. Pairs with any image encoder of the same dim for
  cosine alignment scoring.
- ``torchscript:<path>`` — loads a TorchScript image encoder in eval mode
  for real pretrained weights; requires torch.

``register_encoder`` plugs in anything else.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, ModelLoadError

_INPUT_SIDE = 64


def _seed_from_name(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def load_gray(path: str | Path, side: int) -> np.ndarray:
    """Grayscale [0,1] float array at side x side, bilinear."""
    try:
        with Image.open(path) as img:
            img.load()
            gray = img.convert("L").convert("F").resize((side, side), Image.BILINEAR)
            return np.asarray(gray, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc


@dataclass
class ImageEncoder:
    name: str
    dim: int
    preprocessing: dict
    _embed: Callable[[list[str | Path]], np.ndarray]

    def embed_images(self, paths: list[str | Path]) -> np.ndarray:
        """One L2-normalized d-vector per path, float32, row order = input
        order. Deterministic in eval mode: equal paths give equal rows."""
        return self._embed(paths)


def _make_projection_encoder(name: str, dim: int) -> ImageEncoder:
    rng = np.random.default_rng(_seed_from_name(name))
    weights = rng.standard_normal((_INPUT_SIDE * _INPUT_SIDE, dim)) / np.sqrt(dim)

    def embed(paths: list[str | Path]) -> np.ndarray:
        flat = np.stack([load_gray(p, _INPUT_SIDE).ravel() for p in paths])
        out = flat @ weights
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return (out / norms).astype(np.float32)

    preprocessing = {"grayscale": True, "resize": [_INPUT_SIDE, _INPUT_SIDE],
                     "interpolation": "bilinear", "scale": "[0,1]",
                     "projection_seed": "sha256(name)"}
    return ImageEncoder(name=name, dim=dim, preprocessing=preprocessing, _embed=embed)


def _make_torchscript_encoder(name: str, weights_path: str) -> ImageEncoder:
    try:
        import torch
    except ImportError as exc:  # pragma: no cover
        raise ModelLoadError("torchscript encoders need torch installed") from exc
    try:
        module = torch.jit.load(weights_path, map_location="cpu")
    except (OSError, RuntimeError, ValueError) as exc:
        raise ModelLoadError(f"cannot load TorchScript weights {weights_path}: {exc}") from exc
    module.eval()
    side = 224

    def embed(paths: list[str | Path]) -> np.ndarray:
        batch = np.stack([load_gray(p, side) for p in paths])[:, None, :, :]
        with torch.no_grad():
            out = module(torch.from_numpy(batch).float()).numpy()
        if out.ndim != 2:
            raise ModelLoadError(f"{name}: expected (n, d) output, got {out.shape}")
        return out.astype(np.float32)

    try:
        with torch.no_grad():
            probe = module(torch.zeros(1, 1, side, side))
    except RuntimeError as exc:
        raise ModelLoadError(f"{name}: probe forward failed: {exc}") from exc
    preprocessing = {"grayscale": True, "resize": [side, side],
                     "interpolation": "bilinear", "scale": "[0,1]"}
    return ImageEncoder(name=name, dim=int(probe.shape[-1]),
                        preprocessing=preprocessing, _embed=embed)


_CUSTOM: dict[str, Callable[[], ImageEncoder]] = {}


def register_encoder(name: str, factory: Callable[[], ImageEncoder]) -> None:
    _CUSTOM[name] = factory


def resolve_encoder(name: str) -> ImageEncoder:
    if name in _CUSTOM:
        return _CUSTOM[name]()
    m = re.fullmatch(r"gray-proj-(\d+)", name)
    if m:
        return _make_projection_encoder(name, int(m.group(1)))
    if name.startswith("torchscript:"):
        return _make_torchscript_encoder(name, name.split(":", 1)[1])
    raise ModelLoadError(f"unknown encoder {name!r}")


# --- text side -------------------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9]+")


def resolve_text_embedder(name: str):
    m = re.fullmatch(r"hashed-bow-(\d+)", name)
    if not m:
        raise ModelLoadError(f"unknown text embedder {name!r}")
    dim = int(m.group(1))

    def embed(text: str) -> np.ndarray:
        vec = np.zeros(dim, dtype=np.float64)
        for token in _TOKEN.findall(text.lower()):
            digest = hashlib.sha256(token.encode()).digest()
            bucket = int.from_bytes(digest[:4], "little") % dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    return embed


# --- pairwise re-identification scorer ---------------------------------------------


@dataclass
class ReidScorer:
    """Siamese-style head: features from a shared image encoder, then a
    calibrated sigmoid over their distance. Identical inputs score
    sigmoid(alpha * tau) > 0.5; far-apart inputs fall toward 0."""

    encoder: ImageEncoder
    alpha: float = 6.0
    tau: float = 0.5

    def score_pairs(self, real_paths: list, fake_paths: list) -> np.ndarray:
        a = self.encoder.embed_images(real_paths).astype(np.float64)
        b = self.encoder.embed_images(fake_paths).astype(np.float64)
        dists = np.linalg.norm(a - b, axis=1)
        return 1.0 / (1.0 + np.exp(-self.alpha * (self.tau - dists)))


def resolve_reid_scorer(name: str) -> ReidScorer:
    m = re.fullmatch(r"siamese-(gray-proj-\d+)", name)
    if not m:
        raise ModelLoadError(f"unknown re-identification scorer {name!r}")
    return ReidScorer(encoder=resolve_encoder(m.group(1)))

"""Precision, Recall, Density and Coverage between a real and a synthetic
embedding set, via exact k-nearest-neighbor balls.

Pairwise distances are evaluated in blocks (no approximate index) so memory
stays bounded at benchmark scale. Blocks may run on a thread pool; every
reduction is an integer count or a boolean OR over a fixed partition, so the
results are identical for any worker count. Comparisons happen in the
squared-distance domain, which is order-equivalent and avoids square-root
rounding at the ball boundary; boundary hits count as inside.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError, TooFewPointsError
from .manifest_io import EmbeddingMatrix

_BLOCK_TARGET = 4_000_000  # floats per distance block


@dataclass
class PrdcConfig:
    k: int = 5  # neighbor count; distance is always Euclidean

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")


@dataclass
class PrdcResult:
    precision: float
    recall: float
    density: float
    coverage: float


def _blocks(n: int, other: int) -> list[tuple[int, int]]:
    size = max(1, _BLOCK_TARGET // max(other, 1))
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _run_blocks(tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def _sq_dists(a: np.ndarray, b: np.ndarray, b_norms: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, rows of a vs rows of b, clamped at 0."""
    a_norms = np.einsum("ij,ij->i", a, a)
    d2 = a_norms[:, None] + b_norms[None, :] - 2.0 * (a @ b.T)
    np.clip(d2, 0.0, None, out=d2)
    return d2


def _knn_sq_radii(x: np.ndarray, k: int, threads: int) -> np.ndarray:
    n = x.shape[0]
    if n < k + 1:
        raise TooFewPointsError(f"need at least k+1={k + 1} points, got {n}")
    norms = np.einsum("ij,ij->i", x, x)
    out = np.empty(n, dtype=np.float64)

    def task(lo: int, hi: int):
        def run():
            d2 = _sq_dists(x[lo:hi], x, norms)
            d2[np.arange(hi - lo), np.arange(lo, hi)] = np.inf  # drop self-pairs
            out[lo:hi] = np.partition(d2, k - 1, axis=1)[:, k - 1]

        return run

    _run_blocks([task(lo, hi) for lo, hi in _blocks(n, n)], threads)
    return out


def knn_radii(points: EmbeddingMatrix, k: int, threads: int = 1) -> np.ndarray:
    """Distance from each point to its k-th nearest neighbor, excluding the
    point itself; duplicate points count individually."""
    return np.sqrt(_knn_sq_radii(points.as_float64(), k, threads))


def prdc(real: EmbeddingMatrix, fake: EmbeddingMatrix, cfg: PrdcConfig | None = None,
         threads: int = 1) -> PrdcResult:
    """Mode-coverage metrics over k-NN balls (boundary inclusive):

        precision = share of fake points inside some real ball
        recall    = share of real points inside some fake ball
        density   = mean number of real balls holding each fake point, / k
        coverage  = share of real balls holding at least one fake point
    """
    cfg = cfg or PrdcConfig()
    if real.d != fake.d:
        raise DimensionMismatchError(f"dimension mismatch: {real.d} vs {fake.d}")
    rv = real.as_float64()
    fv = fake.as_float64()
    k = cfg.k
    r2_real = _knn_sq_radii(rv, k, threads)
    r2_fake = _knn_sq_radii(fv, k, threads)
    n, m = rv.shape[0], fv.shape[0]
    r_norms = np.einsum("ij,ij->i", rv, rv)
    f_norms = np.einsum("ij,ij->i", fv, fv)

    # pass over fake rows: counts against real balls + coverage of real balls
    fake_in_counts = np.empty(m, dtype=np.int64)
    fake_blocks = _blocks(m, n)
    covered_parts: list[np.ndarray] = [None] * len(fake_blocks)  # type: ignore[list-item]

    def fake_task(idx: int, lo: int, hi: int):
        def run():
            d2 = _sq_dists(fv[lo:hi], rv, r_norms)
            inside = d2 <= r2_real[None, :]
            fake_in_counts[lo:hi] = inside.sum(axis=1)
            covered_parts[idx] = inside.any(axis=0)

        return run

    _run_blocks([fake_task(i, lo, hi) for i, (lo, hi) in enumerate(fake_blocks)], threads)
    covered = np.logical_or.reduce(covered_parts)

    # pass over real rows: membership in fake balls
    real_in_any = np.empty(n, dtype=bool)

    def real_task(lo: int, hi: int):
        def run():
            d2 = _sq_dists(rv[lo:hi], fv, f_norms)
            real_in_any[lo:hi] = (d2 <= r2_fake[None, :]).any(axis=1)

        return run

    _run_blocks([real_task(lo, hi) for lo, hi in _blocks(n, m)], threads)

    return PrdcResult(
        precision=float((fake_in_counts > 0).sum()) / m,
        recall=float(real_in_any.sum()) / n,
        density=float(fake_in_counts.sum()) / (k * m),
        coverage=float(covered.sum()) / n,
    )

"""Gaussian moment fitting and the two distributional fidelity metrics:
the Frechet distance between fitted Gaussians and the polynomial-kernel
unbiased squared MMD (reported as mean/std over random subsets).

Everything accumulates in float64. Reductions are delegated to numpy's
pairwise summation over a fixed index order, so results do not depend on
worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatchError,
    NonFiniteInputError,
    SqrtFailureError,
    SubsetTooLargeError,
    TooFewSamplesError,
)
from .manifest_io import EmbeddingMatrix

# Covariance is auto-regularized when its smallest eigenvalue drops below
# _PSD_FLOOR_REL * trace; the added ridge is _AUTO_EPS_REL * mean(diag).
_PSD_FLOOR_REL = 1e-10
_AUTO_EPS_REL = 1e-6
_SQRT_CLAMP_REL = 1e-8


@dataclass
class GaussianStats:
    """Fitted mean and covariance of an embedding set."""

    mean: np.ndarray
    covariance: np.ndarray
    n: int
    regularization_epsilon: float = 0.0

    @property
    def d(self) -> int:
        return self.mean.shape[0]


@dataclass
class KidConfig:
    kernel_degree: int = 3
    kernel_gamma: Union[float, str] = "auto"  # "auto" resolves to 1/d
    kernel_coef: float = 1.0
    subset_size: int | None = None  # None resolves to min(1000, n)
    num_subsets: int = 100
    rng_seed: int = 42

    def __post_init__(self):
        if self.subset_size is not None and self.subset_size < 2:
            raise ConfigError(f"subset_size must be >= 2, got {self.subset_size}")
        if self.num_subsets < 1:
            raise ConfigError(f"num_subsets must be >= 1, got {self.num_subsets}")


class KidResult(NamedTuple):
    mean: float
    std: float


@dataclass
class FidelityResult:
    fid: float
    kid_mean: float
    kid_std: float

    def __post_init__(self):
        # numerical slack: the identity case may land a hair below zero
        if self.fid < -1e-8:
            raise SqrtFailureError(f"fid must be >= 0, got {self.fid}")
        if self.kid_std < 0.0:
            raise SqrtFailureError(f"kid_std must be >= 0, got {self.kid_std}")


def fit_gaussian(m: EmbeddingMatrix, epsilon: Union[float, str] = "auto") -> GaussianStats:
    """Fit mean and unbiased (n-1) sample covariance in float64.

    epsilon is added to the diagonal. Pass "auto" to apply the ridge
    1e-6 * mean(diag) only when the covariance is numerically rank
    deficient (smallest eigenvalue < 1e-10 * trace), which is inevitable
    for strata with fewer samples than feature dimensions.
    """
    x = m.as_float64()
    if x.shape[0] < 2:
        raise TooFewSamplesError(f"need at least 2 samples, got {x.shape[0]}")
    if not np.isfinite(x).all():
        raise NonFiniteInputError("embedding values must be finite")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    cov = (cov + cov.T) / 2.0
    if epsilon == "auto":
        eps = 0.0
        trace = float(np.trace(cov))
        smallest = float(np.linalg.eigvalsh(cov)[0])
        if smallest < _PSD_FLOOR_REL * trace:
            eps = _AUTO_EPS_REL * float(np.diag(cov).mean())
    else:
        eps = float(epsilon)
    if eps:
        cov = cov + eps * np.eye(cov.shape[0])
    return GaussianStats(mean=mean, covariance=cov, n=x.shape[0], regularization_epsilon=eps)


def _sqrt_psd(sym: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition,
    clamping the tiny negative eigenvalues a PSD input may carry."""
    eigvals, eigvecs = np.linalg.eigh(sym)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Frechet distance between two Gaussians:

        ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))

    The cross trace is computed from the eigenvalues of the symmetric
    product S_a^(1/2) S_b S_a^(1/2), which is similar to S_a S_b but stays
    in symmetric territory. Negative eigenvalues smaller in magnitude than
    1e-8 * trace are clamped to zero; anything below that raises.
    """
    if a.d != b.d:
        raise DimensionMismatchError(f"dimension mismatch: {a.d} vs {b.d}")
    diff = a.mean - b.mean
    root_a = _sqrt_psd(a.covariance)
    inner = root_a @ b.covariance @ root_a
    inner = (inner + inner.T) / 2.0
    eigvals = np.linalg.eigvalsh(inner)
    tol = _SQRT_CLAMP_REL * max(float(np.trace(inner)), 0.0)
    if eigvals[0] < -tol:
        raise SqrtFailureError(
            f"cross-covariance square root failed: eigenvalue {eigvals[0]:.3e} below -{tol:.3e}"
        )
    trace_sqrt = float(np.sqrt(np.clip(eigvals, 0.0, None)).sum())
    return float(diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * trace_sqrt)


def _polynomial_kernel(x: np.ndarray, y: np.ndarray, gamma: float, coef: float, degree: int) -> np.ndarray:
    return (gamma * (x @ y.T) + coef) ** degree


def mmd2_unbiased(x: np.ndarray, y: np.ndarray, gamma: float, coef: float, degree: int) -> float:
    """Unbiased squared-MMD estimator under the polynomial kernel:

        1/(m(m-1)) sum_{i!=j} k(x_i,x_j) + 1/(n(n-1)) sum_{i!=j} k(y_i,y_j)
        - 2/(mn) sum_{i,j} k(x_i,y_j)

    May be negative; that is the price of unbiasedness.
    """
    m, n = x.shape[0], y.shape[0]
    kxx = _polynomial_kernel(x, x, gamma, coef, degree)
    kyy = _polynomial_kernel(y, y, gamma, coef, degree)
    kxy = _polynomial_kernel(x, y, gamma, coef, degree)
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * kxy.sum() / (m * n))


def kid(x: EmbeddingMatrix, y: EmbeddingMatrix, cfg: KidConfig | None = None) -> KidResult:
    """Kernel distance between two embedding sets.

    Draws cfg.num_subsets index subsets without replacement from each set
    (sorted, so evaluation order is canonical), evaluates the unbiased
    squared-MMD estimator on each, and returns mean and std over subsets.

    Subset draws come from a counter-based Philox stream split per subset
    index, so subset i sees the same rows no matter how many subsets run.
    """
    cfg = cfg or KidConfig()
    if x.d != y.d:
        raise DimensionMismatchError(f"dimension mismatch: {x.d} vs {y.d}")
    subset = cfg.subset_size if cfg.subset_size is not None else min(1000, x.n, y.n)
    if subset > min(x.n, y.n):
        raise SubsetTooLargeError(
            f"subset_size {subset} exceeds available samples ({x.n}, {y.n})"
        )
    if subset < 2:
        raise SubsetTooLargeError(f"subset_size must be >= 2, got {subset}")
    gamma = 1.0 / x.d if cfg.kernel_gamma == "auto" else float(cfg.kernel_gamma)

    xv = x.as_float64()
    yv = y.as_float64()
    root = np.random.SeedSequence(cfg.rng_seed)
    values = np.empty(cfg.num_subsets, dtype=np.float64)
    for i, child in enumerate(root.spawn(cfg.num_subsets)):
        rng = np.random.Generator(np.random.Philox(child))
        xi = np.sort(rng.choice(x.n, size=subset, replace=False))
        yi = np.sort(rng.choice(y.n, size=subset, replace=False))
        values[i] = mmd2_unbiased(xv[xi], yv[yi], gamma, cfg.kernel_coef, cfg.kernel_degree)
    return KidResult(mean=float(values.mean()), std=float(values.std()))

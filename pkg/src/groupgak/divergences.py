"""Local divergences and the per-pair similarity they induce.

The similarity between two feature vectors is exp(-phi) with

    phi = d / (2 sigma^2) + log(2 - exp(-d / (2 sigma^2)))

which simplifies to kappa / (2 - kappa) for kappa = exp(-d / (2 sigma^2)).
It is 1 exactly when d = 0 and decays monotonically to 0. The log-domain
form is exposed separately because long sequences with small sigma underflow
in the linear domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DIVERGENCES = ("sq_euclidean", "chi_square")


@dataclass(frozen=True)
class LocalKernelParams:
    """Bandwidth and divergence of the per-pair similarity."""

    sigma: float
    divergence: str = "sq_euclidean"

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("sigma must be finite and > 0")
        if self.divergence not in DIVERGENCES:
            raise ValueError(f"unknown divergence {self.divergence!r}")


def _check_dims(f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if f.shape != g.shape:
        raise ValueError(f"dimension mismatch: {f.size} vs {g.size}")
    return f, g


def sq_euclidean(f, g) -> float:
    """Squared Euclidean distance sum_k (f_k - g_k)^2."""
    f, g = _check_dims(f, g)
    diff = f - g
    return float(diff @ diff)


def chi_square(f, g) -> float:
    """Chi-square histogram distance sum_k (f_k - g_k)^2 / (f_k + g_k).

    Bins that are empty in both histograms contribute 0.
    """
    f, g = _check_dims(f, g)
    if np.any(f < 0) or np.any(g < 0):
        raise ValueError("chi_square requires non-negative histogram entries")
    num = (f - g) ** 2
    den = f + g
    mask = den > 0
    return float((num[mask] / den[mask]).sum())


_DIVERGENCE_FN = {"sq_euclidean": sq_euclidean, "chi_square": chi_square}


def divergence(name: str):
    try:
        return _DIVERGENCE_FN[name]
    except KeyError:
        raise ValueError(f"unknown divergence {name!r}") from None


def similarity_from_distance(d: float, sigma: float) -> float:
    kappa = math.exp(-d / (2.0 * sigma * sigma))
    return kappa / (2.0 - kappa)


def log_similarity_from_distance(d: float, sigma: float) -> float:
    z = d / (2.0 * sigma * sigma)
    return -z - math.log1p(1.0 - math.exp(-z))


def local_similarity(f, g, params: LocalKernelParams) -> float:
    """exp(-phi) in (0, 1]; equals 1 iff the divergence is 0."""
    d = divergence(params.divergence)(f, g)
    return similarity_from_distance(d, params.sigma)


def log_local_similarity(f, g, params: LocalKernelParams) -> float:
    """-phi computed directly; finite for any divergence value, no overflow."""
    d = divergence(params.divergence)(f, g)
    return log_similarity_from_distance(d, params.sigma)


def pairwise_divergence(X: np.ndarray, Y: np.ndarray, name: str) -> np.ndarray:
    """All-pairs divergence matrix between the rows of X (m,d) and Y (n,d)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if name == "sq_euclidean":
        diff = X[:, None, :] - Y[None, :, :]
        return (diff * diff).sum(axis=-1)
    if name == "chi_square":
        if np.any(X < 0) or np.any(Y < 0):
            raise ValueError("chi_square requires non-negative histogram entries")
        num = (X[:, None, :] - Y[None, :, :]) ** 2
        den = X[:, None, :] + Y[None, :, :]
        out = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        return out.sum(axis=-1)
    raise ValueError(f"unknown divergence {name!r}")


def similarity_matrix(D: np.ndarray, sigma: float) -> np.ndarray:
    """Elementwise exp(-phi) for a precomputed divergence matrix."""
    kappa = np.exp(-D / (2.0 * sigma * sigma))
    return kappa / (2.0 - kappa)


def log_similarity_matrix(D: np.ndarray, sigma: float) -> np.ndarray:
    """Elementwise -phi for a precomputed divergence matrix."""
    z = D / (2.0 * sigma * sigma)
    return -z - np.log1p(1.0 - np.exp(-z))

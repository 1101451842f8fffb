"""Alignment kernels over sorted feature sequences.

The global alignment kernel sums, over every monotone alignment of two
sequences, the product of per-pair similarities exp(-phi). The dynamic
program

    M(i, j) = e_ij * (M(i-1, j-1) + M(i-1, j) + M(i, j-1))

with M(0, 0) = 1 and zero borders computes that sum exactly in O(m n).
A brute-force path enumerator is kept alongside as the reference oracle.
DTW and its kernelized variants (reciprocal shift, negated, Gaussian) are
provided as baselines; their Gram matrices are generally indefinite.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .divergences import (
    LocalKernelParams,
    log_similarity_matrix,
    pairwise_divergence,
    similarity_matrix,
)
from .records import SortedSequence

KERNEL_KINDS = ("gak", "dtw", "ndtw", "gdtw")

# below this log local similarity the linear-domain DP is at risk of underflow
LOG_UNDERFLOW_GUARD = -500.0

# longest sequence the alignment enumerator accepts (Delannoy growth)
MAX_ENUM_LENGTH = 6


def _seq_array(X) -> np.ndarray:
    if isinstance(X, SortedSequence):
        return X.vectors
    a = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return a


def _divergence_matrix(X, Y, params: LocalKernelParams) -> np.ndarray:
    Xa, Ya = _seq_array(X), _seq_array(Y)
    if Xa.shape[0] == 0 or Ya.shape[0] == 0:
        raise ValueError("alignment kernels require non-empty sequences")
    return pairwise_divergence(Xa, Ya, params.divergence)


def _min_log_similarity(D: np.ndarray, sigma: float) -> float:
    # the log similarity is monotone decreasing in d, so its minimum over the
    # matrix is attained at the largest divergence
    zmax = float(D.max()) / (2.0 * sigma * sigma)
    return -zmax - math.log1p(1.0 - math.exp(-zmax))


def _dp_sum_product(E: list[list[float]]) -> float:
    n = len(E[0])
    prev = [1.0] + [0.0] * n
    for row in E:
        cur = [0.0] * (n + 1)
        for j in range(1, n + 1):
            cur[j] = row[j - 1] * (prev[j - 1] + prev[j] + cur[j - 1])
        prev = cur
    return prev[n]


def _dp_log_sum_product(L: list[list[float]]) -> float:
    neg = float("-inf")
    n = len(L[0])
    prev = [0.0] + [neg] * n
    exp, log = math.exp, math.log
    for row in L:
        cur = [neg] * (n + 1)
        for j in range(1, n + 1):
            a, b, c = prev[j - 1], prev[j], cur[j - 1]
            m = a if a >= b else b
            if c > m:
                m = c
            if m == neg:
                continue
            cur[j] = row[j - 1] + m + log(exp(a - m) + exp(b - m) + exp(c - m))
        prev = cur
    return prev[n]


def gak(X, Y, params: LocalKernelParams, mode: str = "auto") -> float:
    """Global alignment kernel between two sequences.

    mode "linear" and "log" force the evaluation domain; "auto" uses the
    linear DP and switches to log-sum-exp when any local log similarity
    falls below the underflow guard (or the linear result underflows).
    """
    if mode not in ("auto", "linear", "log"):
        raise ValueError(f"unknown mode {mode!r}")
    D = _divergence_matrix(X, Y, params)
    if mode == "log" or (
        mode == "auto" and _min_log_similarity(D, params.sigma) < LOG_UNDERFLOW_GUARD
    ):
        return math.exp(_dp_log_sum_product(log_similarity_matrix(D, params.sigma).tolist()))
    value = _dp_sum_product(similarity_matrix(D, params.sigma).tolist())
    if value == 0.0 and mode == "auto":
        return math.exp(_dp_log_sum_product(log_similarity_matrix(D, params.sigma).tolist()))
    return value


def log_gak(X, Y, params: LocalKernelParams) -> float:
    """log of the global alignment kernel, evaluated entirely in log domain."""
    D = _divergence_matrix(X, Y, params)
    return _dp_log_sum_product(log_similarity_matrix(D, params.sigma).tolist())


def enumerate_alignments(m: int, n: int) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Yield every alignment (pi1, pi2) of an m- and an n-sequence.

    Both index vectors are 1-based, start at (1, 1), end at (m, n), and each
    step advances by (1, 0), (0, 1) or (1, 1). The number of alignments is
    the Delannoy number D(m-1, n-1).
    """
    if m < 1 or n < 1:
        raise ValueError("alignments require non-empty sequences")

    def walk(i, j, pi1, pi2):
        if i == m and j == n:
            yield tuple(pi1), tuple(pi2)
            return
        if i < m and j < n:
            yield from walk(i + 1, j + 1, pi1 + [i + 1], pi2 + [j + 1])
        if i < m:
            yield from walk(i + 1, j, pi1 + [i + 1], pi2 + [j])
        if j < n:
            yield from walk(i, j + 1, pi1 + [i], pi2 + [j + 1])

    yield from walk(1, 1, [1], [1])


def gak_bruteforce(X, Y, params: LocalKernelParams) -> float:
    """Reference oracle: explicit sum over all enumerated alignments."""
    D = _divergence_matrix(X, Y, params)
    m, n = D.shape
    if m > MAX_ENUM_LENGTH or n > MAX_ENUM_LENGTH:
        raise ValueError(
            f"sequences too long for enumeration (max {MAX_ENUM_LENGTH})"
        )
    E = similarity_matrix(D, params.sigma)
    total = 0.0
    for pi1, pi2 in enumerate_alignments(m, n):
        prod = 1.0
        for a, b in zip(pi1, pi2):
            prod *= E[a - 1, b - 1]
        total += prod
    return total


def dtw_distance(X, Y, divergence: str) -> float:
    """Minimum alignment cost sum of local divergences (classic DTW)."""
    Xa, Ya = _seq_array(X), _seq_array(Y)
    if Xa.shape[0] == 0 or Ya.shape[0] == 0:
        raise ValueError("dtw requires non-empty sequences")
    D = pairwise_divergence(Xa, Ya, divergence).tolist()
    n = len(D[0])
    inf = float("inf")
    prev = [0.0] + [inf] * n
    for row in D:
        cur = [inf] * (n + 1)
        for j in range(1, n + 1):
            a, b, c = prev[j - 1], prev[j], cur[j - 1]
            best = a if a <= b else b
            if c < best:
                best = c
            cur[j] = row[j - 1] + best
        prev = cur
    return prev[n]


def baseline_kernel(kind: str, X, Y, params: LocalKernelParams) -> float:
    """DTW-family kernel values; indefinite in general.

    dtw -> 1 / (1 + DTW), ndtw -> -DTW, gdtw -> exp(-DTW / (2 sigma^2)).
    """
    if kind == "gak":
        raise ValueError("use gak() for the global alignment kernel")
    if kind not in KERNEL_KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    d = dtw_distance(X, Y, params.divergence)
    if kind == "dtw":
        return 1.0 / (1.0 + d)
    if kind == "ndtw":
        return -d
    return math.exp(-d / (2.0 * params.sigma * params.sigma))


def kernel_value(kind: str, X, Y, params: LocalKernelParams) -> float:
    if kind == "gak":
        return gak(X, Y, params)
    return baseline_kernel(kind, X, Y, params)


@dataclass(frozen=True)
class GramMatrix:
    """Dense symmetric kernel matrix with provenance metadata."""

    values: np.ndarray
    kind: str
    channel: str | None = None
    sigma: float | None = None
    divergence: str | None = None
    dataset_hash: str | None = None
    strategy: str | None = None
    beta: tuple[float, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("Gram matrix must be square")
        scale = float(np.abs(values).max()) if values.size else 0.0
        if scale and float(np.abs(values - values.T).max()) > 1e-12 * scale:
            raise ValueError("Gram matrix must be symmetric")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.beta is not None:
            object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

    @property
    def size(self) -> int:
        return self.values.shape[0]


def gram(
    sequences: Sequence,
    kind: str,
    params: LocalKernelParams,
    threads: int = 1,
    channel: str | None = None,
    dataset_hash: str | None = None,
) -> GramMatrix:
    """Kernel matrix over all sequence pairs.

    Only the upper triangle is evaluated. Cells are independent pure
    computations, so the result is identical for any thread count.
    """
    if kind not in KERNEL_KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    seqs = [_seq_array(s) for s in sequences]
    if channel is None:
        channels = {s.channel for s in sequences if isinstance(s, SortedSequence)}
        if len(channels) > 1:
            raise ValueError(f"sequences mix channels {sorted(channels)}")
        channel = channels.pop() if channels else None
    n = len(seqs)
    values = np.zeros((n, n))
    pairs = [(i, j) for i in range(n) for j in range(i, n)]

    def fill(chunk):
        for i, j in chunk:
            values[i, j] = kernel_value(kind, seqs[i], seqs[j], params)

    if threads > 1 and len(pairs) > 1:
        chunks = [pairs[k::threads] for k in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, chunks))
    else:
        fill(pairs)

    upper = np.triu_indices(n, 1)
    values[(upper[1], upper[0])] = values[upper]
    return GramMatrix(
        values=values,
        kind=kind,
        channel=channel,
        sigma=params.sigma,
        divergence=params.divergence,
        dataset_hash=dataset_hash,
    )


def kernel_rows(
    sequences: Sequence,
    against: Sequence,
    kind: str,
    params: LocalKernelParams,
    threads: int = 1,
) -> np.ndarray:
    """Rows of kernel values of `sequences` against a fixed training list."""
    seqs = [_seq_array(s) for s in sequences]
    train = [_seq_array(s) for s in against]
    out = np.zeros((len(seqs), len(train)))
    cells = [(i, j) for i in range(len(seqs)) for j in range(len(train))]

    def fill(chunk):
        for i, j in chunk:
            out[i, j] = kernel_value(kind, seqs[i], train[j], params)

    if threads > 1 and len(cells) > 1:
        chunks = [cells[k::threads] for k in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, chunks))
    else:
        fill(cells)
    return out


@dataclass(frozen=True)
class PsdReport:
    is_psd: bool
    min_eigenvalue: float
    max_eigenvalue: float


def psd_check(G, tol: float = 1e-8) -> PsdReport:
    """Minimum-eigenvalue test: PSD iff min eig >= -tol * max(max eig, 0)."""
    values = G.values if isinstance(G, GramMatrix) else np.asarray(G, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("psd_check requires a square matrix")
    if values.size and float(np.abs(values - values.T).max()) > 1e-12 * max(
        1.0, float(np.abs(values).max())
    ):
        raise ValueError("psd_check requires a symmetric matrix")
    eigs = np.linalg.eigvalsh(values)
    lo, hi = float(eigs[0]), float(eigs[-1])
    return PsdReport(is_psd=lo >= -tol * max(hi, 0.0), min_eigenvalue=lo, max_eigenvalue=hi)


def _meta_items(g: GramMatrix) -> list[tuple[str, str]]:
    items = [("kind", g.kind), ("n", str(g.size))]
    if g.channel is not None:
        items.append(("channel", g.channel))
    if g.sigma is not None:
        items.append(("sigma", repr(float(g.sigma))))
    if g.divergence is not None:
        items.append(("divergence", g.divergence))
    if g.dataset_hash is not None:
        items.append(("dataset_hash", g.dataset_hash))
    if g.strategy is not None:
        items.append(("strategy", g.strategy))
    if g.beta is not None:
        items.append(("beta", ";".join(repr(b) for b in g.beta)))
    return items


def write_gram_csv(g: GramMatrix, stream: io.TextIOBase) -> None:
    """CSV with a one-line '#' header carrying the kernel metadata."""
    stream.write("# " + " ".join(f"{k}={v}" for k, v in _meta_items(g)) + "\n")
    for row in g.values:
        stream.write(",".join(repr(float(v)) for v in row) + "\n")


def read_gram_csv(stream: io.TextIOBase) -> GramMatrix:
    header = stream.readline().strip()
    if not header.startswith("#"):
        raise ValueError("missing Gram metadata header")
    meta = dict(part.split("=", 1) for part in header[1:].split())
    rows = [
        [float(v) for v in line.strip().split(",")]
        for line in stream
        if line.strip() and not line.startswith("#")
    ]
    return GramMatrix(
        values=np.asarray(rows),
        kind=meta.get("kind", "gak"),
        channel=meta.get("channel"),
        sigma=float(meta["sigma"]) if "sigma" in meta else None,
        divergence=meta.get("divergence"),
        dataset_hash=meta.get("dataset_hash"),
        strategy=meta.get("strategy"),
        beta=tuple(float(b) for b in meta["beta"].split(";")) if "beta" in meta else None,
    )

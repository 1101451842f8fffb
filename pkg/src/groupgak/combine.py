"""Combining channel Gram matrices: sum, Hadamard product, or learned weights.

The weighted summation K = sum_q beta_q K_q keeps its weights on the
simplex through a softmax gate beta = softmax(v). The gate is constant
across instances (a per-instance gate would make the combined matrix
asymmetric), so only the offsets v_q are learned. They are fitted by
alternating a full dual SVR solve with a gradient step on v, where

    dJ/dbeta_q = -1/2 sum_ij theta_i theta_j K_q[i, j]

by Danskin's theorem, chained through the softmax Jacobian. J is the value
of the fitted dual, which equals the primal objective; gradient descent on
v therefore performs standard multiple-kernel learning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import GramMatrix
from .svr import SvrConfig, svr_fit

STRATEGIES = ("sum", "prod", "weighted")

_GATING_STEP = 1.0
_MIN_STEP = 1e-12


def softmax_weights(v: Sequence[float]) -> np.ndarray:
    """Softmax of the gating offsets; non-negative and summing to 1."""
    v = np.asarray(v, dtype=np.float64)
    z = np.exp(v - v.max())
    return z / z.sum()


@dataclass(frozen=True)
class GatingState:
    """Learned gating offsets with the resulting simplex weights."""

    v: tuple[float, ...]
    trace: tuple[float, ...] = ()  # dual objective after each accepted step
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "v", tuple(float(x) for x in self.v))
        object.__setattr__(self, "trace", tuple(float(x) for x in self.trace))
        if len(self.v) < 2:
            raise ValueError("gating needs at least two kernels")

    @property
    def beta(self) -> np.ndarray:
        return softmax_weights(self.v)


def _aligned_values(grams: Sequence[GramMatrix | np.ndarray]) -> list[np.ndarray]:
    values = [g.values if isinstance(g, GramMatrix) else np.asarray(g) for g in grams]
    if len(values) < 2:
        raise ValueError("combination needs at least two Gram matrices")
    size = values[0].shape[0]
    if any(v.shape != (size, size) for v in values):
        raise ValueError("Gram matrices differ in size")
    hashes = {
        g.dataset_hash
        for g in grams
        if isinstance(g, GramMatrix) and g.dataset_hash is not None
    }
    if len(hashes) > 1:
        raise ValueError(f"Gram matrices come from different datasets: {sorted(hashes)}")
    return values


def combine(
    grams: Sequence[GramMatrix | np.ndarray],
    strategy: str,
    beta: Sequence[float] | GatingState | None = None,
) -> GramMatrix:
    """Elementwise sum, product, or beta-weighted sum of aligned Grams.

    Positive semidefiniteness is closed under all three operations (for
    beta >= 0), so combined kernels stay valid for the SVR.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown combination strategy {strategy!r}")
    values = _aligned_values(grams)
    if strategy == "sum":
        out = np.sum(values, axis=0)
        beta_out = None
    elif strategy == "prod":
        out = values[0].copy()
        for v in values[1:]:
            out = out * v
        beta_out = None
    else:
        if beta is None:
            raise ValueError("weighted combination requires beta")
        b = beta.beta if isinstance(beta, GatingState) else np.asarray(beta, dtype=np.float64)
        if len(b) != len(values):
            raise ValueError(f"{len(b)} weights for {len(values)} kernels")
        if np.any(b < 0):
            raise ValueError("beta weights must be non-negative")
        out = sum(w * v for w, v in zip(b, values))
        beta_out = tuple(float(w) for w in b)

    first = next((g for g in grams if isinstance(g, GramMatrix)), None)
    channels = [
        g.channel if isinstance(g, GramMatrix) and g.channel else "?" for g in grams
    ]
    return GramMatrix(
        values=out,
        kind=first.kind if first else "gak",
        channel="+".join(channels),
        sigma=None,
        divergence=None,
        dataset_hash=first.dataset_hash if first else None,
        strategy=strategy,
        beta=beta_out,
    )


def fit_gating(
    grams: Sequence[GramMatrix | np.ndarray],
    labels: Sequence[float],
    svr_config: SvrConfig = SvrConfig(),
    tol: float = 1e-6,
    max_iter: int = 50,
    step: float = _GATING_STEP,
) -> GatingState:
    """Learn simplex weights for a weighted kernel sum.

    Alternates (a) solving the SVR dual for the current combined kernel and
    (b) a gradient step on the gating offsets, halving the step whenever the
    objective would increase. Stops when the relative objective change drops
    below tol. On hitting max_iter the best state so far is returned with
    converged=False.
    """
    values = _aligned_values(grams)
    y = np.asarray(labels, dtype=np.float64)
    q = len(values)
    v = np.zeros(q)

    def solve(vv):
        beta = softmax_weights(vv)
        combined = sum(w * g for w, g in zip(beta, values))
        sol = svr_fit(combined, y, svr_config)
        return beta, sol

    beta, sol = solve(v)
    objective = sol.objective
    trace = [objective]
    if max_iter <= 0:
        return GatingState(v=tuple(v), trace=tuple(trace), converged=False)

    converged = False
    for _ in range(max_iter):
        theta = sol.theta
        dj_dbeta = np.array([-0.5 * theta @ (g @ theta) for g in values])
        grad_v = beta * (dj_dbeta - float(beta @ dj_dbeta))
        if float(np.abs(grad_v).max()) == 0.0:
            converged = True
            break

        accepted = False
        while step >= _MIN_STEP:
            v_new = v - step * grad_v
            beta_new, sol_new = solve(v_new)
            if sol_new.objective <= objective:
                accepted = True
                break
            step /= 2.0
        if not accepted:
            converged = True  # no descent step exists at representable sizes
            break

        delta = objective - sol_new.objective
        v, beta, sol, objective = v_new, beta_new, sol_new, sol_new.objective
        trace.append(objective)
        if delta <= tol * max(1.0, abs(objective)):
            converged = True
            break

    return GatingState(v=tuple(v), trace=tuple(trace), converged=converged)

"""Epsilon-insensitive support vector regression over a precomputed kernel.

The dual

    max  sum_i y_i th_i - eps sum_i (ap_i + am_i) - 1/2 th' K th
    s.t. sum_i th_i = 0,  0 <= ap_i, am_i <= C,  th_i = ap_i - am_i

is solved by sequential two-variable updates on the maximal violating pair,
the standard working-set scheme for kernel machines. Selection and updates
are fully deterministic, so identical inputs produce bitwise-identical
models. Indefinite kernels (the DTW baselines) are handled by flooring the
second-order step denominator; the result is flagged as non-convex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_TAU = 1e-12  # curvature floor for the two-variable step


@dataclass(frozen=True)
class SvrConfig:
    """Regularization C, tube width epsilon, and solver limits."""

    C: float = 1.0
    epsilon: float = 0.1
    tol: float = 1e-6
    max_iter: int = 200_000

    def __post_init__(self):
        if not (self.C > 0 and math.isfinite(self.C)):
            raise ValueError("C must be finite and > 0")
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be finite and >= 0")
        if not (self.tol > 0):
            raise ValueError("tol must be > 0")


@dataclass
class SvrSolution:
    """Dual solution: theta_i = ap_i - am_i, bias, and solver diagnostics."""

    theta: np.ndarray
    bias: float
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    objective: float
    iterations: int
    converged: bool
    indefinite: bool
    kkt_gap: float

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.theta)[0]


def _kernel_values(G) -> np.ndarray:
    values = getattr(G, "values", G)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("kernel matrix must be square")
    return values


def svr_fit(G, y: Sequence[float], config: SvrConfig = SvrConfig()) -> SvrSolution:
    """Solve the epsilon-SVR dual for a precomputed kernel matrix."""
    K = _kernel_values(G)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = len(y)
    if K.shape[0] != n:
        raise ValueError(f"kernel size {K.shape[0]} does not match {n} labels")
    if not np.all(np.isfinite(y)):
        raise ValueError("labels must be finite")
    scale = float(np.abs(K).max()) if K.size else 0.0
    if scale and float(np.abs(K - K.T).max()) > 1e-12 * scale:
        raise ValueError("kernel matrix must be symmetric")

    C, eps, tol = config.C, config.epsilon, config.tol
    # variables s < n are ap, s >= n are am; u is the sign of theta contribution
    u = np.concatenate([np.ones(n), -np.ones(n)])
    alpha = np.zeros(2 * n)
    # gradient of 1/2 a'Qa + p'a with Q_st = u_s u_t K, p = eps - u * [y; y]
    grad = np.concatenate([eps - y, eps + y])
    snap = 1e-12 * C

    indefinite = False
    iterations = 0
    gap = np.inf
    for iterations in range(1, config.max_iter + 1):
        bcand = -(u * grad)
        up = ((u > 0) & (alpha < C)) | ((u < 0) & (alpha > 0))
        low = ((u < 0) & (alpha < C)) | ((u > 0) & (alpha > 0))
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(up, bcand, -np.inf)))
        j = int(np.argmin(np.where(low, bcand, np.inf)))
        gap = float(bcand[i] - bcand[j])
        if gap <= tol:
            break

        ii, jj = i % n, j % n
        a_raw = K[ii, ii] + K[jj, jj] - 2.0 * u[i] * u[j] * K[ii, jj]
        if a_raw < -1e-12 * max(1.0, scale):
            indefinite = True
        a = max(a_raw, _TAU)

        t = gap / a
        t = min(t, C - alpha[i] if u[i] > 0 else alpha[i])
        t = min(t, alpha[j] if u[j] > 0 else C - alpha[j])

        alpha[i] += u[i] * t
        alpha[j] -= u[j] * t
        for s in (i, j):
            if alpha[s] < snap:
                alpha[s] = 0.0
            elif alpha[s] > C - snap:
                alpha[s] = C
        diff = t * (K[:, ii] - K[:, jj])
        grad[:n] += diff
        grad[n:] -= diff
    converged = gap <= tol

    ap, am = alpha[:n].copy(), alpha[n:].copy()
    # enforce complementarity ap*am = 0; shifts both by the overlap, which
    # preserves theta and the equality constraint and lowers the eps term
    overlap = np.minimum(ap, am)
    ap -= overlap
    am -= overlap
    theta = ap - am

    margin = K @ theta
    free = ((ap > 0) & (ap < C)) | ((am > 0) & (am < C))
    cand_plus = y - margin - eps
    cand_minus = y - margin + eps
    if free.any():
        cands = np.concatenate(
            [cand_plus[(ap > 0) & (ap < C)], cand_minus[(am > 0) & (am < C)]]
        )
        bias = float(cands.mean())
    else:
        lower = np.concatenate([cand_plus[ap == 0], cand_minus[am == C]])
        upper = np.concatenate([cand_plus[ap == C], cand_minus[am == 0]])
        bias = float((lower.max() + upper.min()) / 2.0)

    objective = float(y @ theta - eps * (ap.sum() + am.sum()) - 0.5 * theta @ margin)
    return SvrSolution(
        theta=theta,
        bias=bias,
        alpha_plus=ap,
        alpha_minus=am,
        objective=objective,
        iterations=iterations,
        converged=converged,
        indefinite=indefinite,
        kkt_gap=float(gap),
    )


def svr_predict(model: SvrSolution, kernel_row) -> float | np.ndarray:
    """sum_i theta_i k(X_i, Y) + b for one row or a stack of rows."""
    row = np.asarray(kernel_row, dtype=np.float64)
    if row.shape[-1] != len(model.theta):
        raise ValueError(
            f"kernel row length {row.shape[-1]} does not match "
            f"{len(model.theta)} training points"
        )
    out = row @ model.theta + model.bias
    return float(out) if out.ndim == 0 else out


def dual_objective(G, y, epsilon: float, alpha_plus, alpha_minus) -> float:
    """Dual value of an arbitrary feasible (ap, am); used by oracles and gating."""
    K = _kernel_values(G)
    y = np.asarray(y, dtype=np.float64)
    ap = np.asarray(alpha_plus, dtype=np.float64)
    am = np.asarray(alpha_minus, dtype=np.float64)
    theta = ap - am
    return float(y @ theta - epsilon * (ap.sum() + am.sum()) - 0.5 * theta @ (K @ theta))


def kkt_residual(G, y, config: SvrConfig, model: SvrSolution) -> float:
    """Largest violation of the stationarity/complementarity conditions.

    Independent of the solver internals: recomputed from the primal
    predictions f_i = (K theta)_i + b and the box state of each dual pair.
    """
    K = _kernel_values(G)
    y = np.asarray(y, dtype=np.float64)
    C, eps = config.C, config.epsilon
    f = K @ model.theta + model.bias
    res = 0.0
    for i in range(len(y)):
        above = y[i] - f[i] - eps  # > 0 when the point sits above the tube
        below = f[i] - y[i] - eps
        ap, am = model.alpha_plus[i], model.alpha_minus[i]
        if ap == 0:
            res = max(res, above)
        elif ap == C:
            res = max(res, -above)
        else:
            res = max(res, abs(above))
        if am == 0:
            res = max(res, below)
        elif am == C:
            res = max(res, -below)
        else:
            res = max(res, abs(below))
    return res

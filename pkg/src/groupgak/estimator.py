"""Scikit-learn style estimators over group records.

GroupKernelRegressor is the end-to-end model: it canonically orders each
group's faces, builds one Gram matrix per feature channel, optionally
combines them, and fits an epsilon-SVR on the result. X is a sequence of
GroupRecord objects; labels default to the records' own intensity labels.
"""

from __future__ import annotations

import json
import time
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin

from .combine import GatingState, combine, fit_gating
from .divergences import LocalKernelParams
from .geometry import DEFAULT_LAMBDA, sort_channels
from .kernels import KERNEL_KINDS, gram, kernel_rows
from .records import (
    ChannelSchema,
    GroupRecord,
    SortedSequence,
    ValidationError,
    dataset_hash,
    validate_schema,
)
from .svr import SvrConfig, SvrSolution, svr_fit, svr_predict

STRATEGY_CHOICES = ("single", "sum", "prod", "weighted")


class GroupSorter(TransformerMixin, BaseEstimator):
    """Transform groups into canonically ordered feature sequences."""

    def __init__(self, channel: str, lam: float = DEFAULT_LAMBDA):
        self.channel = channel
        self.lam = lam

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [sort_channels(g, [self.channel], self.lam)[self.channel] for g in X]


class GroupKernelRegressor(RegressorMixin, BaseEstimator):
    """Intensity regression over groups via alignment kernels.

    Parameters
    ----------
    channels : list of channel names to use, or None for all declared ones.
    kernel : one of "gak", "dtw", "ndtw", "gdtw".
    strategy : "single" (exactly one channel) or a combination of all
        selected channels: "sum", "prod", or "weighted" (learned gating).
    sigma, divergence : overrides applied to every selected channel;
        None keeps each channel's schema defaults.
    lam : weight-sort trade-off between face size and centroid distance.
    C, epsilon, tol, max_iter : epsilon-SVR parameters.
    schema : declared ChannelSchema; inferred from the data when None.
    """

    def __init__(
        self,
        channels=None,
        kernel: str = "gak",
        strategy: str = "single",
        sigma: float | None = None,
        divergence: str | None = None,
        lam: float = DEFAULT_LAMBDA,
        C: float = 1.0,
        epsilon: float = 0.1,
        tol: float = 1e-6,
        max_iter: int = 200_000,
        gating_tol: float = 1e-6,
        gating_max_iter: int = 50,
        schema: ChannelSchema | None = None,
        threads: int = 1,
    ):
        self.channels = channels
        self.kernel = kernel
        self.strategy = strategy
        self.sigma = sigma
        self.divergence = divergence
        self.lam = lam
        self.C = C
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter
        self.gating_tol = gating_tol
        self.gating_max_iter = gating_max_iter
        self.schema = schema
        self.threads = threads

    def _svr_config(self) -> SvrConfig:
        return SvrConfig(C=self.C, epsilon=self.epsilon, tol=self.tol, max_iter=self.max_iter)

    def _channel_params(self, schema: ChannelSchema, names) -> list[LocalKernelParams]:
        params = []
        for name in names:
            spec = schema.get(name)
            params.append(
                LocalKernelParams(
                    sigma=self.sigma if self.sigma is not None else spec.sigma,
                    divergence=(
                        self.divergence if self.divergence is not None else spec.divergence
                    ),
                )
            )
        return params

    def fit(self, X: Sequence[GroupRecord], y=None):
        groups = list(X)
        if not groups:
            raise ValidationError("no records")
        if self.kernel not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.strategy not in STRATEGY_CHOICES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        schema = validate_schema(groups, declared=self.schema)
        names = list(self.channels) if self.channels else list(schema.names)
        for name in names:
            schema.get(name)  # raises KeyError on unknown channel
        if self.strategy == "single" and len(names) != 1:
            raise ValueError(
                f"strategy 'single' needs exactly one channel, got {names}"
            )
        if self.strategy != "single" and len(names) < 2:
            raise ValueError(f"strategy {self.strategy!r} needs at least two channels")

        labels = (
            np.asarray([g.label for g in groups], dtype=np.float64)
            if y is None
            else np.asarray(y, dtype=np.float64)
        )
        if len(labels) != len(groups):
            raise ValueError("label count does not match group count")

        params = self._channel_params(schema, names)
        train_hash = dataset_hash(groups)
        sequences = {}
        for g in groups:
            for name, seq in sort_channels(g, names, self.lam).items():
                sequences.setdefault(name, []).append(seq)

        t0 = time.perf_counter()
        grams = [
            gram(
                sequences[name],
                kind=self.kernel,
                params=p,
                threads=self.threads,
                channel=name,
                dataset_hash=train_hash,
            )
            for name, p in zip(names, params)
        ]
        gram_seconds = time.perf_counter() - t0

        gating = None
        if self.strategy == "single":
            combined = grams[0]
        elif self.strategy == "weighted":
            gating = fit_gating(
                grams,
                labels,
                svr_config=self._svr_config(),
                tol=self.gating_tol,
                max_iter=self.gating_max_iter,
            )
            combined = combine(grams, "weighted", beta=gating)
        else:
            combined = combine(grams, self.strategy)

        solution = svr_fit(combined, labels, self._svr_config())

        self.schema_ = schema
        self.channel_names_ = tuple(names)
        self.channel_params_ = tuple(params)
        self.sequences_ = sequences
        self.grams_ = tuple(grams)
        self.gram_ = combined
        self.gating_ = gating
        self.solution_ = solution
        self.dual_coef_ = solution.theta
        self.intercept_ = solution.bias
        self.support_ = solution.support
        self.beta_ = None if gating is None else gating.beta
        self.labels_ = labels
        self.group_ids_ = tuple(g.id for g in groups)
        self.dataset_hash_ = train_hash
        self.gram_seconds_ = gram_seconds
        return self

    def _check_fitted(self):
        if not hasattr(self, "solution_"):
            raise RuntimeError("estimator is not fitted")

    def kernel_row(self, group: GroupRecord) -> np.ndarray:
        """Kernel values of one group against every stored training group."""
        return self.kernel_matrix([group])[0]

    def kernel_matrix(self, X: Sequence[GroupRecord]) -> np.ndarray:
        """Rows of combined kernel values against the training set."""
        self._check_fitted()
        groups = list(X)
        for g in groups:
            self.schema_.validate_group(g)
        per_channel = []
        for name, p in zip(self.channel_names_, self.channel_params_):
            seqs = [sort_channels(g, [name], self.lam)[name] for g in groups]
            per_channel.append(
                kernel_rows(seqs, self.sequences_[name], self.kernel, p, self.threads)
            )
        if self.strategy == "single":
            return per_channel[0]
        if self.strategy == "sum":
            return np.sum(per_channel, axis=0)
        if self.strategy == "prod":
            out = per_channel[0].copy()
            for rows in per_channel[1:]:
                out *= rows
            return out
        return sum(b * rows for b, rows in zip(self.beta_, per_channel))

    def predict(self, X: Sequence[GroupRecord]) -> np.ndarray:
        self._check_fitted()
        rows = self.kernel_matrix(X)
        return np.asarray(svr_predict(self.solution_, rows), dtype=np.float64).reshape(-1)

    def to_dict(self) -> dict:
        """Serializable model state, including the sorted training sequences."""
        self._check_fitted()
        sol = self.solution_
        return {
            "format": "groupgak-model",
            "version": 1,
            "params": {
                "kernel": self.kernel,
                "strategy": self.strategy,
                "lam": self.lam,
                "C": self.C,
                "epsilon": self.epsilon,
                "tol": self.tol,
                "max_iter": self.max_iter,
                "gating_tol": self.gating_tol,
                "gating_max_iter": self.gating_max_iter,
            },
            "schema": self.schema_.to_dict(),
            "channels": [
                {"name": name, "sigma": p.sigma, "divergence": p.divergence}
                for name, p in zip(self.channel_names_, self.channel_params_)
            ],
            "gating": None
            if self.gating_ is None
            else {
                "v": list(self.gating_.v),
                "trace": list(self.gating_.trace),
                "converged": self.gating_.converged,
            },
            "solution": {
                "theta": sol.theta.tolist(),
                "bias": sol.bias,
                "objective": sol.objective,
                "iterations": sol.iterations,
                "converged": sol.converged,
                "indefinite": sol.indefinite,
                "kkt_gap": sol.kkt_gap,
            },
            "training": {
                "ids": list(self.group_ids_),
                "labels": self.labels_.tolist(),
                "dataset_hash": self.dataset_hash_,
                "sequences": {
                    name: [
                        {
                            "group_id": s.group_id,
                            "order": list(s.order),
                            "weights": s.weights.tolist(),
                            "vectors": s.vectors.tolist(),
                        }
                        for s in seqs
                    ]
                    for name, seqs in self.sequences_.items()
                },
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GroupKernelRegressor":
        if doc.get("format") != "groupgak-model":
            raise ValueError("not a groupgak model document")
        params = doc["params"]
        schema = ChannelSchema.from_dict(doc["schema"])
        channels = [c["name"] for c in doc["channels"]]
        est = cls(
            channels=channels,
            kernel=params["kernel"],
            strategy=params["strategy"],
            lam=params["lam"],
            C=params["C"],
            epsilon=params["epsilon"],
            tol=params["tol"],
            max_iter=params["max_iter"],
            gating_tol=params.get("gating_tol", 1e-6),
            gating_max_iter=params.get("gating_max_iter", 50),
            schema=schema,
        )
        est.schema_ = schema
        est.channel_names_ = tuple(channels)
        est.channel_params_ = tuple(
            LocalKernelParams(sigma=c["sigma"], divergence=c["divergence"])
            for c in doc["channels"]
        )
        est.sequences_ = {
            name: [
                SortedSequence(
                    group_id=s["group_id"],
                    channel=name,
                    vectors=np.asarray(s["vectors"]),
                    weights=np.asarray(s["weights"]),
                    order=tuple(s["order"]),
                )
                for s in seqs
            ]
            for name, seqs in doc["training"]["sequences"].items()
        }
        gate = doc.get("gating")
        est.gating_ = (
            None
            if gate is None
            else GatingState(v=tuple(gate["v"]), trace=tuple(gate["trace"]), converged=gate["converged"])
        )
        est.beta_ = None if est.gating_ is None else est.gating_.beta
        sol = doc["solution"]
        theta = np.asarray(sol["theta"], dtype=np.float64)
        est.solution_ = SvrSolution(
            theta=theta,
            bias=float(sol["bias"]),
            alpha_plus=np.maximum(theta, 0.0),
            alpha_minus=np.maximum(-theta, 0.0),
            objective=float(sol["objective"]),
            iterations=int(sol["iterations"]),
            converged=bool(sol["converged"]),
            indefinite=bool(sol["indefinite"]),
            kkt_gap=float(sol["kkt_gap"]),
        )
        est.dual_coef_ = est.solution_.theta
        est.intercept_ = est.solution_.bias
        est.support_ = est.solution_.support
        est.labels_ = np.asarray(doc["training"]["labels"], dtype=np.float64)
        est.group_ids_ = tuple(doc["training"]["ids"])
        est.dataset_hash_ = doc["training"]["dataset_hash"]
        est.grams_ = ()
        est.gram_ = None
        est.gram_seconds_ = 0.0
        return est

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "GroupKernelRegressor":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

"""Point estimators operating on one realized dataset.

Each estimator has a scalar entry point working on a RealizedData record and
a batched kernel used by the exact-moment oracle and the replication engine.
Scalar reductions use exact compensated summation; batched kernels use
numpy's pairwise reductions, which stay far inside the documented
tolerances at the sizes the harness produces.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyExposureCell, MissingCovariates
from .scenario import Scenario, normalize_mask


@dataclass(frozen=True, eq=False)
class RealizedData:
    """One sampled assignment with realized exposures and observed outcomes."""

    z: np.ndarray
    exposures: np.ndarray
    y: np.ndarray

    @classmethod
    def from_scenario(cls, scenario: Scenario, z: np.ndarray) -> "RealizedData":
        d, y = scenario.realize(z)
        return cls(z=np.asarray(z, dtype=np.int64), exposures=d, y=y)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True, eq=False)
class EstimatorSpec:
    """Which estimator to run and its fixed inputs.

    Difference estimators carry an external predictor that must be fixed
    before any assignment is drawn; its interface only accepts an exposure
    label, so it structurally cannot see realized data. GREG refits its
    per-cell coefficients inside every dataset it is handed.
    """

    kind: str
    predictor: Optional[object] = None
    ridge: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ht", "hajek", "difference", "greg"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "difference" and self.predictor is None:
            raise ValueError("difference estimator needs an external predictor")


HT = EstimatorSpec("ht")
HAJEK = EstimatorSpec("hajek")


def _weights_for(pi_col: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        w = np.where(pi_col > 0.0, 1.0 / np.where(pi_col > 0.0, pi_col, 1.0), 0.0)
    return w


def ht_estimate(data: RealizedData, pi: np.ndarray, a: int, b: int, mask=None) -> float:
    """Inverse-probability-weighted contrast with the zero-probability
    convention: any term whose marginal probability is zero contributes zero."""
    idx = normalize_mask(mask, data.n)
    m = idx.size
    d = data.exposures[idx]
    y = data.y[idx]
    total = 0.0
    for label, sign in ((a, 1.0), (b, -1.0)):
        hit = d == label
        p = pi[idx, label]
        bad = hit & (p == 0.0)
        if np.any(bad):
            warnings.warn(
                "realized exposure has zero marginal probability; "
                "terms zeroed by convention",
                RuntimeWarning,
            )
            hit = hit & ~bad
        if np.any(hit):
            total += sign * math.fsum((y[hit] / p[hit]).tolist())
    return total / m


def hajek_estimate(data: RealizedData, pi: np.ndarray, a: int, b: int, mask=None) -> float:
    """Ratio-of-sums reweighted contrast; requires both cells non-empty."""
    idx = normalize_mask(mask, data.n)
    d = data.exposures[idx]
    y = data.y[idx]
    parts = []
    for label in (a, b):
        hit = (d == label) & (pi[idx, label] > 0.0)
        if not np.any(hit):
            raise EmptyExposureCell(label)
        w = 1.0 / pi[idx, label][hit]
        parts.append(math.fsum((y[hit] * w).tolist()) / math.fsum(w.tolist()))
    return parts[0] - parts[1]


def difference_estimate(
    data: RealizedData,
    pi: np.ndarray,
    predictor,
    a: int,
    b: int,
    mask=None,
) -> float:
    """Mean predicted contrast plus inverse-probability-weighted residuals."""
    idx = normalize_mask(mask, data.n)
    m = idx.size
    pred_a = np.asarray(predictor.values(a), dtype=float)[idx]
    pred_b = np.asarray(predictor.values(b), dtype=float)[idx]
    first = math.fsum((pred_a - pred_b).tolist()) / m
    d = data.exposures[idx]
    y = data.y[idx]
    terms = []
    for label, sign, pred in ((a, 1.0, pred_a), (b, -1.0, pred_b)):
        hit = d == label
        p = pi[idx, label][hit]
        if np.any(hit):
            terms.extend((sign * (y[hit] - pred[hit]) / p).tolist())
    return first + math.fsum(terms) / m


@dataclass(frozen=True, eq=False)
class GregFit:
    coefficients: np.ndarray
    regularized: bool


def greg_fit(
    data: RealizedData,
    covariates: np.ndarray,
    d: int,
    ridge: float = 0.0,
) -> GregFit:
    """Least squares of outcomes on covariates over the units exposed to d.

    A singular Gram matrix triggers a ridge solve with penalty
    max(ridge, 1e-8 * trace / p) and sets the regularized flag.
    """
    if covariates is None:
        raise MissingCovariates("greg_fit needs covariates")
    x = np.asarray(covariates, dtype=float)
    hit = data.exposures == d
    if not np.any(hit):
        raise EmptyExposureCell(d)
    xd = x[hit]
    yd = data.y[hit]
    p = xd.shape[1]
    if p == 0:
        return GregFit(coefficients=np.zeros(0), regularized=False)
    beta, _, rank, _ = np.linalg.lstsq(xd, yd, rcond=None)
    if rank == p:
        return GregFit(coefficients=beta, regularized=False)
    gram = xd.T @ xd
    lam = max(float(ridge), 1e-8 * float(np.trace(gram)) / p)
    beta = np.linalg.solve(gram + lam * np.eye(p), xd.T @ yd)
    return GregFit(coefficients=beta, regularized=True)


def greg_estimate(
    data: RealizedData,
    pi: np.ndarray,
    covariates: Optional[np.ndarray],
    beta_a: np.ndarray,
    beta_b: np.ndarray,
    a: int,
    b: int,
    mask=None,
) -> float:
    """Regression-predicted contrast plus weighted residual correction."""
    idx = normalize_mask(mask, data.n)
    m = idx.size
    if covariates is None or np.asarray(covariates).shape[1] == 0:
        x = np.zeros((data.n, 0))
    else:
        x = np.asarray(covariates, dtype=float)
    pred_a = x[idx] @ np.asarray(beta_a, dtype=float)
    pred_b = x[idx] @ np.asarray(beta_b, dtype=float)
    first = math.fsum((pred_a - pred_b).tolist()) / m
    d = data.exposures[idx]
    y = data.y[idx]
    terms = []
    for label, sign, pred in ((a, 1.0, pred_a), (b, -1.0, pred_b)):
        hit = d == label
        p = pi[idx, label][hit]
        if np.any(hit):
            terms.extend((sign * (y[hit] - pred[hit]) / p).tolist())
    return first + math.fsum(terms) / m


def estimate(
    spec: EstimatorSpec,
    data: RealizedData,
    pi: np.ndarray,
    a: int,
    b: int,
    mask=None,
    covariates: Optional[np.ndarray] = None,
) -> float:
    """Scalar dispatch for one realized dataset; raises on undefined cells."""
    if spec.kind == "ht":
        return ht_estimate(data, pi, a, b, mask)
    if spec.kind == "hajek":
        return hajek_estimate(data, pi, a, b, mask)
    if spec.kind == "difference":
        return difference_estimate(data, pi, spec.predictor, a, b, mask)
    if spec.kind == "greg":
        if covariates is None or np.asarray(covariates).shape[1] == 0:
            zero = np.zeros(0)
            return greg_estimate(data, pi, None, zero, zero, a, b, mask)
        fit_a = greg_fit(data, covariates, a, spec.ridge)
        fit_b = greg_fit(data, covariates, b, spec.ridge)
        return greg_estimate(
            data, pi, covariates, fit_a.coefficients, fit_b.coefficients, a, b, mask
        )
    raise ValueError(spec.kind)


# ---------------------------------------------------------------------------
# Batched kernels


def batch_estimates(
    spec: EstimatorSpec,
    exposures: np.ndarray,
    outcomes: np.ndarray,
    pi: np.ndarray,
    a: int,
    b: int,
    mask=None,
    covariates: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Estimates for a whole (R, n) batch of realized datasets.

    Returns one value per row; rows where the estimator is undefined (an
    empty exposure cell) come back NaN.
    """
    n = exposures.shape[1]
    idx = normalize_mask(mask, n)
    m = idx.size
    d = exposures[:, idx]
    y = outcomes[:, idx]
    ia = (d == a).astype(np.float64)
    ib = (d == b).astype(np.float64)
    wa = _weights_for(pi[idx, a])
    wb = _weights_for(pi[idx, b])

    if spec.kind == "ht":
        return ((ia * y) @ wa - (ib * y) @ wb) / m

    if spec.kind == "hajek":
        num_a = (ia * y) @ wa
        den_a = ia @ wa
        num_b = (ib * y) @ wb
        den_b = ib @ wb
        out = np.full(exposures.shape[0], np.nan)
        ok = (den_a > 0.0) & (den_b > 0.0)
        out[ok] = num_a[ok] / den_a[ok] - num_b[ok] / den_b[ok]
        return out

    if spec.kind == "difference":
        pred_a = np.asarray(spec.predictor.values(a), dtype=float)[idx]
        pred_b = np.asarray(spec.predictor.values(b), dtype=float)[idx]
        first = np.sum(pred_a - pred_b) / m
        resid = (ia * (y - pred_a[None, :])) @ wa - (ib * (y - pred_b[None, :])) @ wb
        return first + resid / m

    if spec.kind == "greg":
        out = np.empty(exposures.shape[0])
        for r in range(exposures.shape[0]):
            data = RealizedData(
                z=np.zeros(n, dtype=np.int64), exposures=exposures[r], y=outcomes[r]
            )
            try:
                out[r] = estimate(spec, data, pi, a, b, mask=idx, covariates=covariates)
            except EmptyExposureCell:
                out[r] = np.nan
        return out

    raise ValueError(spec.kind)

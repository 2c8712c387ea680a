"""Brute-force oracle over the design's support.

Enumerates every positive-probability assignment once, then derives exposure
laws, conditional mean outcomes, contrast targets, specification-error
moments, and exact moments of arbitrary estimators from that table. All
support reductions go through compensated (exact) summation or chunked
pairwise accumulation so the documented 1e-12 identity tolerances hold at the
largest enumerable supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    NotCorrectlySpecified,
    UndefinedOnSupport,
    UnrealizableExposure,
)
from .scenario import (
    Scenario,
    correctly_specified_units,
    enumerate_omega,
    normalize_mask,
)

_CHUNK = 4096


def fsum_weighted(weights: np.ndarray, values: np.ndarray) -> float:
    """Exactly rounded sum of elementwise products."""
    return math.fsum((np.asarray(weights) * np.asarray(values)).tolist())


def _chunked_sum(parts: list[np.ndarray]) -> np.ndarray:
    if len(parts) == 1:
        return parts[0]
    return np.sum(np.stack(parts), axis=0)


def weighted_total(probs: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Sum_s probs[s] * values[s, ...] with bounded accumulation error."""
    parts = [
        np.tensordot(probs[lo : lo + _CHUNK], values[lo : lo + _CHUNK], axes=(0, 0))
        for lo in range(0, probs.size, _CHUNK)
    ]
    return _chunked_sum(parts)


def weighted_gram(probs: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Sum_s probs[s] * outer(left[s], right[s]) with bounded accumulation error."""
    parts = []
    for lo in range(0, probs.size, _CHUNK):
        hi = lo + _CHUNK
        parts.append(left[lo:hi].T @ (probs[lo:hi, None] * right[lo:hi]))
    return _chunked_sum(parts)


# ---------------------------------------------------------------------------
# Support tables


@dataclass(frozen=True, eq=False)
class SupportTable:
    """Design support with exposures and outcomes evaluated on every point."""

    assignments: np.ndarray  # (S, n) int
    probs: np.ndarray  # (S,)
    exposures: np.ndarray  # (S, n) int
    outcomes: np.ndarray  # (S, n) float
    n_labels: int

    @property
    def size(self) -> int:
        return self.probs.size

    @property
    def n(self) -> int:
        return self.assignments.shape[1]


def build_support(scenario: Scenario, cap: Optional[int] = None) -> SupportTable:
    assignments, probs = scenario.design.support(cap=cap)
    return SupportTable(
        assignments=assignments,
        probs=np.asarray(probs, dtype=float),
        exposures=scenario.exposure.apply(assignments),
        outcomes=scenario.outcome.apply(assignments),
        n_labels=scenario.exposure.n_labels,
    )


def _onehots(exposures: np.ndarray, n_labels: int) -> list[np.ndarray]:
    return [(exposures == d).astype(np.float64) for d in range(n_labels)]


# ---------------------------------------------------------------------------
# Exposure law


@dataclass(frozen=True, eq=False)
class ExposureLaw:
    """Marginal and joint exposure probabilities with zero-probability flags."""

    pi: np.ndarray  # (n, K) marginal exposure probabilities
    pij: np.ndarray  # (n, n, K, K) joint probabilities, diagonal consistent
    cov: np.ndarray  # (n, n, K) indicator covariances at equal labels
    zbar: np.ndarray  # (n, K) 1.0 where the marginal probability is zero
    zjoint: np.ndarray  # (n, n, K, K) True where the joint probability is zero

    @property
    def n(self) -> int:
        return self.pi.shape[0]

    @property
    def n_labels(self) -> int:
        return self.pi.shape[1]


def law_from_tables(pi: np.ndarray, pij: np.ndarray) -> ExposureLaw:
    """Assemble the derived law fields from probability tables."""
    n, K = pi.shape
    cov = np.empty((n, n, K))
    for d in range(K):
        cov[:, :, d] = pij[:, :, d, d] - np.outer(pi[:, d], pi[:, d])
    return ExposureLaw(
        pi=pi,
        pij=pij,
        cov=cov,
        zbar=(pi == 0.0).astype(float),
        zjoint=pij == 0.0,
    )


def compute_exposure_law(
    scenario: Scenario,
    cap: Optional[int] = None,
    support: Optional[SupportTable] = None,
) -> ExposureLaw:
    """Exact exposure law by a single pass over the design's support."""
    table = support if support is not None else build_support(scenario, cap)
    n, K = table.n, table.n_labels
    ones = _onehots(table.exposures, K)
    pi = np.zeros((n, K))
    for d in range(K):
        pi[:, d] = weighted_total(table.probs, ones[d])
    pij = np.zeros((n, n, K, K))
    for d1 in range(K):
        for d2 in range(d1, K):
            g = weighted_gram(table.probs, ones[d1], ones[d2])
            pij[:, :, d1, d2] = g
            if d2 != d1:
                pij[:, :, d2, d1] = g.T
    # mirror the upper triangle so the pair-symmetry invariant holds exactly
    iu, ju = np.triu_indices(n, k=1)
    pij[ju, iu] = np.swapaxes(pij[iu, ju], -1, -2)
    # pin the unit diagonal to the marginals
    for i in range(n):
        pij[i, i] = np.diag(pi[i])
    return law_from_tables(pi, pij)


# ---------------------------------------------------------------------------
# Ground truth


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-exposure conditional means, pair-refined means, and contrast targets.

    ``ybar[i, d]`` is the conditional mean outcome given the unit's exposure;
    when the exposure has zero probability it falls back to the uniform mean
    over the assignments realizing it, and is NaN (flagged in ``undefined``)
    when no assignment realizes it at all. ``tau[a, b]`` averages the
    contrasts over the included units only.
    """

    ybar: np.ndarray  # (n, K)
    undefined: np.ndarray  # (n, K) bool
    yrefined: np.ndarray  # (n, n, K, K)
    tau: np.ndarray  # (K, K)
    mask: np.ndarray  # included unit indices
    k1: float
    k2_label: np.ndarray  # (K,) max reciprocal marginal over included units


def compute_ground_truth(
    scenario: Scenario,
    law: ExposureLaw,
    cap: Optional[int] = None,
    support: Optional[SupportTable] = None,
    mask=None,
) -> GroundTruth:
    table = support if support is not None else build_support(scenario, cap)
    n, K = table.n, table.n_labels
    mask = normalize_mask(mask, n)
    ones = _onehots(table.exposures, K)

    ybar = np.full((n, K), np.nan)
    undefined = np.zeros((n, K), dtype=bool)
    for d in range(K):
        num = weighted_total(table.probs, ones[d] * table.outcomes)
        with np.errstate(invalid="ignore", divide="ignore"):
            ybar[:, d] = num / law.pi[:, d]

    # zero-probability exposures fall back to the uniform mean over the full
    # assignment space; unrealizable ones stay NaN
    zero_cells = np.argwhere(law.pi == 0.0)
    if zero_cells.size:
        omega = enumerate_omega(scenario.n, scenario.n_treatments, cap)
        labels = scenario.exposure.apply(omega)
        values = scenario.outcome.apply(omega)
        for i, d in zero_cells:
            in_class = labels[:, i] == d
            count = int(np.sum(in_class))
            if count == 0:
                undefined[i, d] = True
                ybar[i, d] = np.nan
            else:
                ybar[i, d] = math.fsum(values[in_class, i].tolist()) / count

    yrefined = np.empty((n, n, K, K))
    for d1 in range(K):
        for d2 in range(K):
            num = weighted_gram(table.probs, ones[d1] * table.outcomes, ones[d2])
            with np.errstate(invalid="ignore", divide="ignore"):
                cond = num / law.pij[:, :, d1, d2]
            fallback = np.broadcast_to(ybar[:, d1][:, None], (n, n))
            yrefined[:, :, d1, d2] = np.where(law.zjoint[:, :, d1, d2], fallback, cond)

    tau = np.full((K, K), np.nan)
    if mask.size:
        for a in range(K):
            for b in range(K):
                if np.any(undefined[mask, a]) or np.any(undefined[mask, b]):
                    continue
                tau[a, b] = math.fsum((ybar[mask, a] - ybar[mask, b]).tolist()) / mask.size

    k2_label = np.empty(K)
    for d in range(K):
        col = law.pi[mask, d]
        k2_label[d] = np.inf if np.any(col == 0.0) or mask.size == 0 else float(
            np.max(1.0 / col)
        )

    return GroundTruth(
        ybar=ybar,
        undefined=undefined,
        yrefined=yrefined,
        tau=tau,
        mask=mask,
        k1=float(scenario.outcome.k1),
        k2_label=k2_label,
    )


def tau_contrast(truth: GroundTruth, a: int, b: int) -> float:
    """Contrast target for two labels, failing loudly on unrealizable cells."""
    for d in (a, b):
        bad = truth.mask[truth.undefined[truth.mask, d]]
        if bad.size:
            raise UnrealizableExposure(int(bad[0]), d)
    return float(truth.tau[a, b])


def explained_deviation(truth: GroundTruth) -> np.ndarray:
    """(n, n, K, K) table of pair-refined minus single-exposure means.

    Zero by construction wherever the joint probability is zero (the refined
    mean falls back to the single-exposure mean there).
    """
    return truth.yrefined - truth.ybar[:, None, :, None]


def conventional_effect(
    scenario: Scenario, a: int, b: int, mask=None, cap: Optional[int] = None
) -> float:
    """Contrast of the unique per-class outcomes under correct specification."""
    mask = normalize_mask(mask, scenario.n)
    good = correctly_specified_units(scenario, cap)
    offenders = [int(i) for i in mask if not good[i]]
    if offenders:
        raise NotCorrectlySpecified(offenders)
    omega = enumerate_omega(scenario.n, scenario.n_treatments, cap)
    labels = scenario.exposure.apply(omega)
    values = scenario.outcome.apply(omega)
    total = 0.0
    for i in mask:
        pair = []
        for d in (a, b):
            in_class = np.flatnonzero(labels[:, i] == d)
            if in_class.size == 0:
                raise UnrealizableExposure(int(i), d)
            pair.append(values[in_class[0], i])
        total += pair[0] - pair[1]
    return total / mask.size


# ---------------------------------------------------------------------------
# Specification errors


@dataclass(frozen=True, eq=False)
class SpecificationErrors:
    """Realized error decomposition for one assignment.

    ``total[i]`` is the gap between the realized outcome and the unit's
    exposure-conditional mean; ``explained[i, j]`` the part predictable from
    unit j's realized exposure; ``residual[i, j]`` the remainder. The identity
    ``total[i] == explained[i, j] + residual[i, j]`` holds for every pair.
    """

    total: np.ndarray  # (n,)
    explained: np.ndarray  # (n, n)
    residual: np.ndarray  # (n, n)


def specification_errors(
    scenario: Scenario, truth: GroundTruth, z: np.ndarray
) -> SpecificationErrors:
    d, y = scenario.realize(z)
    n = scenario.n
    idx = np.arange(n)
    eps = y - truth.ybar[idx, d]
    refined = truth.yrefined[idx[:, None], idx[None, :], d[:, None], d[None, :]]
    explained = refined - truth.ybar[idx, d][:, None]
    residual = y[:, None] - refined
    return SpecificationErrors(total=eps, explained=explained, residual=residual)


# ---------------------------------------------------------------------------
# Conditional error moments


def error_matrix(table: SupportTable, truth: GroundTruth) -> np.ndarray:
    """(S, n) realized specification errors on every support point."""
    idx = np.arange(table.n)
    return table.outcomes - truth.ybar[idx[None, :], table.exposures]


def conditional_error_products(
    table: SupportTable, truth: GroundTruth, d: int
) -> np.ndarray:
    """(n, n) matrix of E[err_i err_j | both units at label d]; zero-probability
    conditioning events contribute zero. The diagonal holds conditional second
    moments."""
    eps = error_matrix(table, truth)
    sel = (table.exposures == d).astype(np.float64)
    mass = weighted_gram(table.probs, sel, sel)
    num = weighted_gram(table.probs, sel * eps, sel * eps)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(mass > 0.0, num / np.where(mass > 0.0, mass, 1.0), 0.0)
    return out


def conditional_error_variance(table: SupportTable, truth: GroundTruth) -> np.ndarray:
    """(n, K) conditional variances of the specification error given the
    unit's own exposure; zero where the exposure has zero probability."""
    n, K = table.n, table.n_labels
    eps = error_matrix(table, truth)
    out = np.zeros((n, K))
    for d in range(K):
        sel = (table.exposures == d).astype(np.float64)
        mass = weighted_total(table.probs, sel)
        num = weighted_total(table.probs, sel * eps * eps)
        out[:, d] = np.where(mass > 0.0, num / np.where(mass > 0.0, mass, 1.0), 0.0)
    return out


def residual_cov_table(table: SupportTable, truth: GroundTruth) -> np.ndarray:
    """(n, n, K, K) conditional covariances of the paired residual errors.

    Entry (i, j, d1, d2) conditions on unit i at d1 and unit j at d2; it is
    zero when that joint event has zero probability. Because the pair-refined
    means are the conditional means of the outcomes, the covariance reduces to
    E[y_i y_j | cond] - refined_ij * refined_ji.
    """
    n, K = table.n, table.n_labels
    ones = _onehots(table.exposures, K)
    out = np.zeros((n, n, K, K))
    for d1 in range(K):
        for d2 in range(K):
            sel1 = ones[d1]
            sel2 = ones[d2]
            mass = weighted_gram(table.probs, sel1, sel2)
            num = weighted_gram(table.probs, sel1 * table.outcomes, sel2 * table.outcomes)
            with np.errstate(invalid="ignore", divide="ignore"):
                second = np.where(mass > 0.0, num / np.where(mass > 0.0, mass, 1.0), 0.0)
            cross = truth.yrefined[:, :, d1, d2] * truth.yrefined[:, :, d2, d1].T
            out[:, :, d1, d2] = np.where(mass > 0.0, second - cross, 0.0)
    for i in range(n):
        out[i, i] = 0.0
    return out


# ---------------------------------------------------------------------------
# Exact estimator moments


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float


def estimator_moments(
    scenario: Scenario,
    law: ExposureLaw,
    truth: GroundTruth,
    estimator,
    a: int,
    b: int,
    mask=None,
    cap: Optional[int] = None,
    support: Optional[SupportTable] = None,
) -> Moments:
    """Exact mean and variance of an estimator over the design distribution.

    Raises UndefinedOnSupport with the offending probability mass when the
    estimator is undefined anywhere on the support.
    """
    from .estimators import batch_estimates

    table = support if support is not None else build_support(scenario, cap)
    values = batch_estimates(
        estimator,
        table.exposures,
        table.outcomes,
        law.pi,
        a,
        b,
        mask=mask,
        covariates=scenario.covariates,
    )
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise UndefinedOnSupport(fsum_weighted(table.probs, bad.astype(float)))
    mean = fsum_weighted(table.probs, values)
    variance = fsum_weighted(table.probs, (values - mean) ** 2)
    return Moments(mean=mean, variance=variance)


def variance_estimator_expectation(
    scenario: Scenario,
    law: ExposureLaw,
    a: int,
    b: int,
    override=None,
    mask=None,
    cap: Optional[int] = None,
    support: Optional[SupportTable] = None,
) -> float:
    """Exact expectation of the pair-weighted variance estimator."""
    from .variance import batch_variance_estimates

    table = support if support is not None else build_support(scenario, cap)
    values = batch_variance_estimates(
        table.exposures, table.outcomes, law, a, b, override=override, mask=mask
    )
    return fsum_weighted(table.probs, values)

"""Conservative variance estimation and its exact bias decomposition.

The point-variance estimator pairs every two units and weights the observed
outcome products by a function of their marginal and joint exposure
probabilities. Pairs that can never be observed jointly are replaced by a
non-negative inflation term, which keeps the estimator conservative under
correctly specified exposures. The same replacement can be forced for
realizable pairs through an override mask (for example all same-group pairs
under partial interference); an overridden pair keeps only the
squared-contrast reconstruction weight in the cross sum, which is exactly the
substitution under which the closed-form bias decomposition below remains an
identity.

The decomposition splits the expectation gap of the estimator into the
per-unit contrast term that can never be estimated, the inflation introduced
for never-jointly-observed label pairs, the error-variance mass moved into
the inflation term, and the signed pair-error interaction terms, the only
ones that can push the estimator anti-conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm as _norm

from .errors import MissingJointProbability, UnrealizableExposure
from .exact import (
    GroundTruth,
    SupportTable,
    build_support,
    conditional_error_variance,
    explained_deviation,
    residual_cov_table,
)
from .scenario import Scenario, normalize_mask

_BATCH_CELLS = 1 << 22


def _override_pairs(override, n: int) -> Optional[np.ndarray]:
    """Normalize an override mask to an (n, n) or (n, n, K, K) boolean array."""
    if override is None:
        return None
    ov = np.asarray(override, dtype=bool)
    if ov.shape[:2] != (n, n) or ov.ndim not in (2, 4):
        raise ValueError("override mask must be (n, n) or (n, n, K, K)")
    return ov


def _override_at(ov: Optional[np.ndarray], d1: int, d2: int) -> Optional[np.ndarray]:
    if ov is None:
        return None
    return ov if ov.ndim == 2 else ov[:, :, d1, d2]


def partial_interference_override(groups) -> np.ndarray:
    """Mark all distinct same-group unit pairs for the inflation override."""
    ids = np.asarray(groups, dtype=np.int64)
    same = ids[:, None] == ids[None, :]
    np.fill_diagonal(same, False)
    return same


def _check_joint_tables(law, idx: np.ndarray, a: int, b: int) -> None:
    pij = getattr(law, "pij", None)
    if pij is None:
        raise MissingJointProbability(int(idx[0]), int(idx[0]), a, b)
    sub = pij[np.ix_(idx, idx)][:, :, (a, b)][:, :, :, (a, b)]
    if np.any(np.isnan(sub)):
        where = np.argwhere(np.isnan(sub))[0]
        raise MissingJointProbability(
            int(idx[where[0]]), int(idx[where[1]]), (a, b)[where[2]], (a, b)[where[3]]
        )


def _weight_tables(law, a: int, b: int, override, mask):
    """Cross-sum weights on the contrasted labels and inflation counts.

    Returns (idx, w4, inflation_rows) where ``w4[i, j, s, t]`` holds the
    pair weight for masked units i, j at label slots s, t in (a, b), and
    ``inflation_rows[i, d]`` is the number of masked partners whose joint
    with (d, a) or (d, b) is treated as never observed.
    """
    n, K = law.pi.shape
    idx = normalize_mask(mask, n)
    _check_joint_tables(law, idx, a, b)
    m = idx.size
    ov = _override_pairs(override, n)
    labels = (a, b)
    pi_sub = law.pi[idx]
    w4 = np.zeros((m, m, 2, 2))
    for s, d1 in enumerate(labels):
        for t, d2 in enumerate(labels):
            pp = np.outer(pi_sub[:, d1], pi_sub[:, d2])
            pj = law.pij[np.ix_(idx, idx)][:, :, d1, d2]
            zero = pj == 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                base = (pj - pp) / (pj * pp)
            w = np.where(zero, -pp, base)
            o = _override_at(ov, d1, d2)
            if o is not None:
                forced = o[np.ix_(idx, idx)] & ~zero
                with np.errstate(divide="ignore"):
                    w = np.where(forced, 1.0 / pp, w)
            w4[:, :, s, t] = w
    # the unit diagonal always keeps its natural weight
    diag = np.arange(m)
    for s, d in enumerate(labels):
        p = pi_sub[:, d]
        with np.errstate(divide="ignore", invalid="ignore"):
            w4[diag, diag, s, s] = np.where(p > 0.0, (1.0 - p) / (p * p), 0.0)
        w4[diag, diag, s, 1 - s] = 0.0

    inflation_rows = np.zeros((m, K))
    for d in range(K):
        count = np.zeros((m, m))
        for d2 in labels:
            zero = law.zjoint[np.ix_(idx, idx)][:, :, d, d2]
            o = _override_at(ov, d, d2)
            eff = zero if o is None else (zero | o[np.ix_(idx, idx)])
            eff = eff.astype(float)
            # diagonal pairs keep the natural flag regardless of the override
            eff[diag, diag] = zero[diag, diag].astype(float)
            count += eff
        inflation_rows[:, d] = count.sum(axis=1)
    return idx, w4, inflation_rows


def batch_variance_estimates(
    exposures: np.ndarray,
    outcomes: np.ndarray,
    law,
    a: int,
    b: int,
    override=None,
    mask=None,
) -> np.ndarray:
    """Variance estimates for an (R, n) batch of realized datasets."""
    idx, w4, inflation_rows = _weight_tables(law, a, b, override, mask)
    m = idx.size
    d = exposures[:, idx]
    y = outcomes[:, idx]
    ia = d == a
    ib = d == b
    delta = ia.astype(np.float64) - ib.astype(np.float64)
    slot = np.where(ib, 1, 0)

    pa, pb = law.pi[idx, a], law.pi[idx, b]
    wa = np.where(pa > 0.0, 1.0 / np.where(pa > 0.0, pa, 1.0), 0.0)
    wb = np.where(pb > 0.0, 1.0 / np.where(pb > 0.0, pb, 1.0), 0.0)
    bracket = ia * wa[None, :] + ib * wb[None, :]
    counts = inflation_rows[np.arange(m)[None, :], d]
    t2 = (bracket * counts * y * y).sum(axis=1)

    out = np.empty(d.shape[0])
    rows = max(1, _BATCH_CELLS // max(1, m * m))
    ii = np.arange(m)
    for lo in range(0, d.shape[0], rows):
        hi = min(lo + rows, d.shape[0])
        s_blk = slot[lo:hi]
        w_blk = w4[ii[None, :, None], ii[None, None, :], s_blk[:, :, None], s_blk[:, None, :]]
        v = delta[lo:hi] * y[lo:hi]
        out[lo:hi] = np.einsum("ri,rij,rj->r", v, w_blk, v)
    return (out + t2) / (m * m)


def as_variance_estimate(
    data,
    law,
    a: int,
    b: int,
    override=None,
    mask=None,
) -> float:
    """Pair-weighted variance estimate for one realized dataset.

    The value may be negative; it is reported as-is and floored only when an
    interval is built from it.
    """
    value = batch_variance_estimates(
        data.exposures[None, :], data.y[None, :], law, a, b, override=override, mask=mask
    )
    return float(value[0])


# ---------------------------------------------------------------------------
# Exact bias decomposition


@dataclass(frozen=True)
class BiasDecomposition:
    """Closed-form split of E[variance estimate] minus the true variance.

    ``contrast`` is the never-estimable per-unit squared contrast;
    ``inflation_ab``/``inflation_ba`` the squared-mean mass added for pairs
    treated as never jointly observed; ``error_variance_ab``/``_ba`` the error
    variance carried into the inflation term; the ``interaction_*`` terms are
    the signed pair-error interactions (zero under correct specification and
    under a full partial-interference override)."""

    contrast: float
    inflation_ab: float
    inflation_ba: float
    error_variance_ab: float
    error_variance_ba: float
    interaction_ab: float
    interaction_aa: float
    interaction_bb: float

    @property
    def total_bias(self) -> float:
        return (
            self.contrast
            + self.inflation_ab
            + self.inflation_ba
            + self.error_variance_ab
            + self.error_variance_ba
            + 2.0 * self.interaction_ab
            - self.interaction_aa
            - self.interaction_bb
        )

    def to_dict(self) -> dict:
        return {
            "B1": self.contrast,
            "B2_ab": self.inflation_ab,
            "B2_ba": self.inflation_ba,
            "B3_ab": self.error_variance_ab,
            "B3_ba": self.error_variance_ba,
            "B4_ab": self.interaction_ab,
            "B4_aa": self.interaction_aa,
            "B4_bb": self.interaction_bb,
            "total_bias": self.total_bias,
        }


def _pair_sum(values: np.ndarray) -> float:
    out = values.copy()
    np.fill_diagonal(out, 0.0)
    return math.fsum(out.ravel().tolist())


def bias_decomposition(
    scenario: Scenario,
    law,
    truth: GroundTruth,
    a: int,
    b: int,
    override=None,
    mask=None,
    cap: Optional[int] = None,
    support: Optional[SupportTable] = None,
) -> BiasDecomposition:
    """Exact bias terms of the variance estimator under a given override.

    Uses the same override mask the estimator uses, so the total reconciles
    exactly with the enumerated expectation minus the exact variance.
    """
    table = support if support is not None else build_support(scenario, cap)
    idx = normalize_mask(mask, scenario.n)
    m = idx.size
    for d in (a, b):
        bad = idx[truth.undefined[idx, d]]
        if bad.size:
            raise UnrealizableExposure(int(bad[0]), d)
    ov = _override_pairs(override, scenario.n)
    ybar = truth.ybar
    dev = explained_deviation(truth)
    err_var = conditional_error_variance(table, truth)
    res_cov = residual_cov_table(table, truth)

    def eff(d1: int, d2: int) -> np.ndarray:
        zero = law.zjoint[np.ix_(idx, idx)][:, :, d1, d2]
        o = _override_at(ov, d1, d2)
        if o is None:
            return zero.astype(float)
        return (zero | o[np.ix_(idx, idx)]).astype(float)

    def inflation(d1: int, d2: int) -> float:
        same = eff(d1, d1) * np.add.outer(ybar[idx, d1], ybar[idx, d1]) ** 2
        cross = eff(d1, d2) * np.subtract.outer(ybar[idx, d1], ybar[idx, d2]) ** 2
        return (_pair_sum(same) + _pair_sum(cross)) / (2.0 * m * m)

    def error_variance(d1: int, d2: int) -> float:
        weights = eff(d1, d1) + eff(d1, d2)
        return _pair_sum(weights * err_var[idx, d1][:, None]) / (m * m)

    def interaction(d1: int, d2: int) -> float:
        e_ij = dev[np.ix_(idx, idx)][:, :, d1, d2]
        e_ji = dev[np.ix_(idx, idx)][:, :, d2, d1].T
        bracket = (
            ybar[idx, d1][:, None] * e_ji
            + ybar[idx, d2][None, :] * e_ij
            + e_ij * e_ji
            + res_cov[np.ix_(idx, idx)][:, :, d1, d2]
        )
        return _pair_sum((1.0 - eff(d1, d2)) * bracket) / (m * m)

    contrast = math.fsum(((ybar[idx, a] - ybar[idx, b]) ** 2).tolist()) / (m * m)
    return BiasDecomposition(
        contrast=contrast,
        inflation_ab=inflation(a, b),
        inflation_ba=inflation(b, a),
        error_variance_ab=error_variance(a, b),
        error_variance_ba=error_variance(b, a),
        interaction_ab=interaction(a, b),
        interaction_aa=interaction(a, a),
        interaction_bb=interaction(b, b),
    )


# ---------------------------------------------------------------------------
# Interval construction


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    floored: bool = False
    degenerate: bool = False

    def covers(self, value: float) -> bool:
        return self.lo <= value <= self.hi


def interval_halfwidth_factor(method: str, level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    if method == "normal":
        return float(_norm.ppf(1.0 - (1.0 - level) / 2.0))
    if method == "chebyshev":
        return 1.0 / math.sqrt(1.0 - level)
    raise ValueError(f"unknown interval method {method!r}")


def confidence_interval(
    point: float, varest: float, method: str = "normal", level: float = 0.95
) -> ConfidenceInterval:
    """Symmetric interval around the point estimate.

    Negative variance estimates are floored at zero and flagged; a zero
    variance yields a degenerate single-point interval.
    """
    floored = varest < 0.0
    var = max(varest, 0.0)
    k = interval_halfwidth_factor(method, level)
    half = k * math.sqrt(var)
    return ConfidenceInterval(
        lo=point - half,
        hi=point + half,
        floored=floored,
        degenerate=var == 0.0,
    )

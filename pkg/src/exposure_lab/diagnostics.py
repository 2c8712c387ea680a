"""Scalar dependence and positivity diagnostics.

These are ground-truth quantities computed from the design and the potential
outcomes, not from realized data: they quantify how much dependence the
design induces between units' exposure indicators, how strongly units'
specification errors move together, and how far the exposure distribution is
from positivity. Together they bound the exact variance of the
inverse-probability contrast estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import PositivityViolated
from .exact import (
    ExposureLaw,
    GroundTruth,
    SupportTable,
    build_support,
    conditional_error_products,
    explained_deviation,
    residual_cov_table,
)
from .scenario import Scenario


def _offdiag_sum(values: np.ndarray) -> float:
    out = values.copy()
    np.fill_diagonal(out, 0.0)
    return math.fsum(out.ravel().tolist())


def design_dependence(law: ExposureLaw, d: int, q: float = 1.0) -> float:
    """Average magnitude of pairwise exposure-indicator covariances.

    The exponent q >= 1 strengthens the average; q = 1 is the base measure.
    """
    if q < 1.0:
        raise ValueError("exponent q must be at least 1")
    n = law.n
    mags = np.abs(law.cov[:, :, d]) ** q
    return (_offdiag_sum(mags) / (n * n)) ** (1.0 / q)


def explainable_error_dependence(truth: GroundTruth, d: int) -> float:
    """Average product of paired explainable deviations at a common label.

    May be negative when the paired deviations tend to have opposite signs.
    """
    dev = explained_deviation(truth)[:, :, d, d]
    n = dev.shape[0]
    return _offdiag_sum(dev * dev.T) / (n * n)


def unexplainable_error_dependence(
    scenario: Scenario,
    law: ExposureLaw,
    truth: GroundTruth,
    d: int,
    cap: Optional[int] = None,
    support: Optional[SupportTable] = None,
) -> float:
    """Average conditional covariance of paired residual errors at a label.

    Zero-probability conditioning events contribute zero.
    """
    table = support if support is not None else build_support(scenario, cap)
    cov = residual_cov_table(table, truth)[:, :, d, d]
    n = cov.shape[0]
    return _offdiag_sum(cov) / (n * n)


def total_error_dependence(
    scenario: Scenario,
    law: ExposureLaw,
    truth: GroundTruth,
    d: int,
    cap: Optional[int] = None,
    support: Optional[SupportTable] = None,
) -> float:
    """Average positive part of conditional error products, diagonal included."""
    table = support if support is not None else build_support(scenario, cap)
    prods = conditional_error_products(table, truth, d)
    n = prods.shape[0]
    clipped = np.maximum(prods, 0.0)
    return math.fsum(clipped.ravel().tolist()) / (n * n)


def zero_prob_share(law: ExposureLaw, d: int) -> float:
    """Share of units that can never realize the label under the design."""
    return float(np.mean(law.zbar[:, d]))


def positivity_norm(law: ExposureLaw, d: int, p: float = 2.0) -> float:
    """Norm-like average rate at which exposure probabilities approach zero.

    Zero-probability units are excluded from the average by construction.
    """
    if p < 1.0:
        raise ValueError("exponent p must be at least 1")
    z = law.zbar[:, d]
    pi = law.pi[:, d]
    terms = (1.0 - z) / (pi**p + z)
    return float(np.mean(terms) ** (1.0 / p))


def variance_bound(
    report_or_values,
    k1: float,
    k2: float,
    n: int,
    a: int,
    b: int,
) -> float:
    """Upper bound on the exact variance of the inverse-probability contrast.

    Accepts either a DependenceReport or a ``(D, E, U)`` triple of per-label
    arrays. Negative signed error-dependence values are clamped to zero
    before entering the bound.
    """
    if not np.isfinite(k2):
        raise PositivityViolated(labels=(a, b))
    if isinstance(report_or_values, DependenceReport):
        D = report_or_values.design
        E = report_or_values.explainable
        U = report_or_values.unexplainable
    else:
        D, E, U = report_or_values
    clamped = [max(float(E[a]), 0.0), max(float(E[b]), 0.0),
               max(float(U[a]), 0.0), max(float(U[b]), 0.0)]
    return (
        8.0 * k1 * k1 * k2 / n
        + 20.0 * k1 * k1 * k2 * k2 * (float(D[a]) + float(D[b]))
        + 4.0 * math.fsum(clamped)
    )


def prediction_dependence(
    predictor,
    d: int,
    n: int,
    draws: int = 2000,
    seed: int = 0,
) -> float:
    """Average magnitude of between-unit prediction covariances at a label.

    Deterministic external predictors are non-random, so the value is zero;
    stochastic predictors are measured by Monte Carlo over their own draws.
    """
    if n <= 1:
        return 0.0
    if not getattr(predictor, "is_stochastic", False):
        return 0.0
    rng = np.random.default_rng(seed)
    samples = np.stack([predictor.sample_values(d, rng) for _ in range(draws)])
    cov = np.cov(samples, rowvar=False)
    return _offdiag_sum(np.abs(np.atleast_2d(cov))) / (n * n)


@dataclass(frozen=True)
class DependenceReport:
    """All per-label diagnostics for one scenario plus the contrast bound."""

    n: int
    labels: int
    a: int
    b: int
    q: float
    p: float
    design: np.ndarray  # (K,) base design dependence
    design_q: np.ndarray  # (K,) design dependence at exponent q
    explainable: np.ndarray  # (K,)
    unexplainable: np.ndarray  # (K,)
    total: np.ndarray  # (K,)
    zero_share: np.ndarray  # (K,)
    positivity: np.ndarray  # (K,) norm at exponent p
    prediction: Optional[np.ndarray] = None  # (K,) when a predictor is attached
    k1: float = 0.0
    k2: float = np.inf
    bound: float = np.nan

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "labels": self.labels,
            "a": self.a,
            "b": self.b,
            "q": self.q,
            "p": self.p,
            "design_dependence": self.design.tolist(),
            "design_dependence_q": self.design_q.tolist(),
            "explainable_error_dependence": self.explainable.tolist(),
            "unexplainable_error_dependence": self.unexplainable.tolist(),
            "total_error_dependence": self.total.tolist(),
            "zero_probability_share": self.zero_share.tolist(),
            "positivity_norm": self.positivity.tolist(),
            "k1": self.k1,
            "k2": self.k2,
            "variance_bound": self.bound,
        }
        if self.prediction is not None:
            out["prediction_dependence"] = self.prediction.tolist()
        return out

    def csv_row(self) -> tuple[list[str], list]:
        header = ["n", "labels", "a", "b", "q", "p"]
        values: list = [self.n, self.labels, self.a, self.b, self.q, self.p]
        for name, arr in (
            ("D", self.design),
            ("Dq", self.design_q),
            ("E", self.explainable),
            ("U", self.unexplainable),
            ("T", self.total),
            ("zshare", self.zero_share),
            ("posnorm", self.positivity),
        ):
            for label, v in enumerate(arr):
                header.append(f"{name}_{label}")
                values.append(v)
        header += ["k1", "k2", "variance_bound"]
        values += [self.k1, self.k2, self.bound]
        return header, values


def dependence_report(
    scenario: Scenario,
    law: ExposureLaw,
    truth: GroundTruth,
    a: int,
    b: int,
    q: float = 1.0,
    p: float = 2.0,
    predictor=None,
    cap: Optional[int] = None,
    support: Optional[SupportTable] = None,
) -> DependenceReport:
    """Evaluate every diagnostic at every label and bound the contrast variance."""
    table = support if support is not None else build_support(scenario, cap)
    K = law.n_labels
    design = np.array([design_dependence(law, d, 1.0) for d in range(K)])
    design_q = np.array([design_dependence(law, d, q) for d in range(K)])
    expl = np.array([explainable_error_dependence(truth, d) for d in range(K)])
    unex = np.array(
        [unexplainable_error_dependence(scenario, law, truth, d, support=table) for d in range(K)]
    )
    tot = np.array(
        [total_error_dependence(scenario, law, truth, d, support=table) for d in range(K)]
    )
    zshare = np.array([zero_prob_share(law, d) for d in range(K)])
    posnorm = np.array([positivity_norm(law, d, p) for d in range(K)])
    pred = None
    if predictor is not None:
        pred = np.array(
            [prediction_dependence(predictor, d, scenario.n) for d in range(K)]
        )
    k2 = float(max(truth.k2_label[a], truth.k2_label[b]))
    if np.isfinite(k2):
        bound = variance_bound((design, expl, unex), truth.k1, k2, scenario.n, a, b)
    else:
        bound = np.nan
    return DependenceReport(
        n=scenario.n,
        labels=K,
        a=a,
        b=b,
        q=q,
        p=p,
        design=design,
        design_q=design_q,
        explainable=expl,
        unexplainable=unex,
        total=tot,
        zero_share=zshare,
        positivity=posnorm,
        prediction=pred,
        k1=truth.k1,
        k2=k2,
        bound=bound,
    )

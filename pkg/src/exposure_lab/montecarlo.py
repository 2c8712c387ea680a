"""Seeded replication engine for bias, variance, RMSE, and coverage studies.

Replication r draws its assignment from a generator seeded by the tuple
(seed, ..., r), so results are a pure function of the seed and replication
index: any worker count produces bit-identical output, and workers only
parallelize the sampling phase. Replications on which an estimator is
undefined (an empty exposure cell) are counted, reported, and excluded from
the moment and coverage summaries rather than imputed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from multiprocessing import get_context
from typing import Optional, Sequence

import numpy as np

from .errors import NoGroundTruth
from .estimators import HT, EstimatorSpec, batch_estimates
from .exact import (
    build_support,
    compute_exposure_law,
    compute_ground_truth,
    law_from_tables,
    tau_contrast,
)
from .scenario import Scenario, enumeration_cap
from .variance import (
    batch_variance_estimates,
    interval_halfwidth_factor,
    partial_interference_override,
)


def _fsum(values: np.ndarray) -> float:
    return math.fsum(np.asarray(values, dtype=float).tolist())


@dataclass(frozen=True)
class EstimatorStats:
    """Replication summary for one estimator."""

    name: str
    reps: int
    defined: int
    undefined_rate: float
    mean: float
    bias: float
    variance: float
    rmse: float
    mean_varest: float
    cov_normal: float
    cov_chebyshev: float
    mcse_bias: float
    mcse_variance: float
    mcse_rmse: float
    mcse_varest: float
    mcse_cov_normal: float
    mcse_cov_chebyshev: float


@dataclass(frozen=True)
class McSummary:
    """Per-estimator replication statistics for one scenario and contrast."""

    scenario: str
    n: int
    a: int
    b: int
    reps: int
    seed_key: tuple
    tau: float
    level: float
    estimators: tuple[EstimatorStats, ...]
    warnings: tuple[str, ...] = ()

    CSV_HEADER = (
        "estimator,n,reps,undefined_rate,mean,bias,variance,rmse,"
        "mean_varest,cov_normal,cov_chebyshev,mcse_bias,mcse_cov"
    )

    def csv_lines(self) -> list[str]:
        def fmt(x) -> str:
            if isinstance(x, float):
                return format(x, ".17g")
            return str(x)

        lines = []
        for est in self.estimators:
            row = [
                est.name,
                self.n,
                self.reps,
                est.undefined_rate,
                est.mean,
                est.bias,
                est.variance,
                est.rmse,
                est.mean_varest,
                est.cov_normal,
                est.cov_chebyshev,
                est.mcse_bias,
                est.mcse_cov_normal,
            ]
            lines.append(",".join(fmt(v) for v in row))
        return lines


def _sample_block(scenario: Scenario, seed_key: tuple, lo: int, hi: int) -> np.ndarray:
    rows = np.empty((hi - lo, scenario.n), dtype=np.int64)
    for r in range(lo, hi):
        rng = np.random.default_rng(np.random.SeedSequence(seed_key + (r,)))
        rows[r - lo] = scenario.design.sample(rng)
    return rows


def _star_args(args):
    return _sample_block(*args)


def sample_assignments(
    scenario: Scenario, seed_key: tuple, reps: int, workers: int = 1
) -> np.ndarray:
    """(reps, n) assignment draws; identical for any worker count."""
    if workers <= 1 or reps < 256:
        return _sample_block(scenario, seed_key, 0, reps)
    block = max(256, math.ceil(reps / (workers * 4)))
    tasks = [
        (scenario, seed_key, lo, min(lo + block, reps)) for lo in range(0, reps, block)
    ]
    with get_context("fork").Pool(processes=workers) as pool:
        blocks = pool.map(_star_args, tasks)
    return np.concatenate(blocks, axis=0)


def resolve_tau(scenario: Scenario, a: int, b: int, cap: Optional[int] = None) -> float:
    """Ground-truth contrast: closed form when attached, exact otherwise.

    Refuses rather than substituting a noisy estimate when neither is
    available.
    """
    if scenario.tau_fn is not None:
        return float(scenario.tau_fn(a, b))
    size = scenario.design.support_size()
    if size is not None and size <= enumeration_cap(cap):
        support = build_support(scenario, cap)
        law = compute_exposure_law(scenario, support=support)
        truth = compute_ground_truth(scenario, law, support=support)
        return tau_contrast(truth, a, b)
    raise NoGroundTruth(
        "no closed-form target attached and the design is not enumerable"
    )


@dataclass(frozen=True, eq=False)
class MarginalTables:
    """Marginal exposure probabilities only; enough for point estimation."""

    pi: np.ndarray


def resolve_law(scenario: Scenario, need_joint: bool, cap: Optional[int] = None):
    """Exposure probability tables for estimation at any sample size.

    Enumerable designs get the exact law. Otherwise the scenario's attached
    provider supplies closed-form marginals, and joint tables only when the
    variance estimator actually needs them (they are quadratic in n).
    """
    size = scenario.design.support_size()
    if size is not None and size <= enumeration_cap(cap):
        return compute_exposure_law(scenario, cap=cap)
    provider = scenario.law_provider
    if provider is None:
        raise NoGroundTruth("no exposure-law provider for a non-enumerable design")
    pi = provider.marginals()
    if not need_joint:
        return MarginalTables(pi=pi)
    return law_from_tables(pi, provider.joint_table())


def _normalize_estimators(estimators) -> list[tuple[str, EstimatorSpec]]:
    if isinstance(estimators, dict):
        return list(estimators.items())
    out = []
    seen: dict[str, int] = {}
    for spec in estimators:
        name = spec.kind
        if name in seen:
            seen[name] += 1
            name = f"{name}{seen[spec.kind]}"
        else:
            seen[name] = 1
        out.append((name, spec))
    return out


def _stats_for(
    name: str,
    estimates: np.ndarray,
    varest: Optional[np.ndarray],
    tau: float,
    level: float,
) -> EstimatorStats:
    reps = estimates.size
    defined = np.isfinite(estimates)
    n_def = int(np.sum(defined))
    und_rate = (reps - n_def) / reps if reps else math.nan
    if n_def == 0:
        nan = math.nan
        return EstimatorStats(
            name, reps, 0, und_rate, nan, nan, nan, nan, nan, nan, nan,
            nan, nan, nan, nan, nan, nan,
        )
    vals = estimates[defined]
    mean = _fsum(vals) / n_def
    bias = mean - tau
    centered = vals - mean
    if n_def >= 2:
        var0 = _fsum(centered * centered) / n_def
        var1 = _fsum(centered * centered) / (n_def - 1)
    else:
        var0 = math.nan
        var1 = math.nan
    rmse = math.sqrt(bias * bias + var0) if n_def >= 2 else math.nan
    sq = (vals - tau) ** 2
    if n_def >= 2:
        m4 = _fsum(centered**4) / n_def
        mcse_var = math.sqrt(max(m4 - var0 * var0, 0.0) / n_def)
        sq_var = _fsum((sq - _fsum(sq) / n_def) ** 2) / (n_def - 1)
        mcse_rmse = (
            math.sqrt(sq_var / n_def) / (2.0 * rmse) if rmse > 0 else math.nan
        )
        mcse_bias = math.sqrt(var1 / n_def)
    else:
        mcse_var = math.nan
        mcse_rmse = math.nan
        mcse_bias = math.nan

    mean_varest = math.nan
    mcse_varest = math.nan
    cov_n = math.nan
    cov_c = math.nan
    mcse_cov_n = math.nan
    mcse_cov_c = math.nan
    if varest is not None:
        v = varest[defined]
        good = np.isfinite(v)
        if np.any(good):
            vg = v[good]
            mean_varest = _fsum(vg) / vg.size
            if vg.size >= 2:
                cv = vg - mean_varest
                mcse_varest = math.sqrt(_fsum(cv * cv) / (vg.size - 1) / vg.size)
            half = np.sqrt(np.maximum(vg, 0.0))
            err = np.abs(vals[good] - tau)
            k_n = interval_halfwidth_factor("normal", level)
            k_c = interval_halfwidth_factor("chebyshev", level)
            cover_n = err <= k_n * half
            cover_c = err <= k_c * half
            cov_n = float(np.mean(cover_n))
            cov_c = float(np.mean(cover_c))
            mcse_cov_n = math.sqrt(max(cov_n * (1 - cov_n), 0.0) / cover_n.size)
            mcse_cov_c = math.sqrt(max(cov_c * (1 - cov_c), 0.0) / cover_c.size)
    return EstimatorStats(
        name=name,
        reps=reps,
        defined=n_def,
        undefined_rate=und_rate,
        mean=mean,
        bias=bias,
        variance=var0,
        rmse=rmse,
        mean_varest=mean_varest,
        cov_normal=cov_n,
        cov_chebyshev=cov_c,
        mcse_bias=mcse_bias,
        mcse_variance=mcse_var,
        mcse_rmse=mcse_rmse,
        mcse_varest=mcse_varest,
        mcse_cov_normal=mcse_cov_n,
        mcse_cov_chebyshev=mcse_cov_c,
    )


def run_replications(
    scenario: Scenario,
    estimators: Sequence[EstimatorSpec] | dict,
    a: int,
    b: int,
    reps: int,
    seed: int | tuple,
    workers: int = 1,
    mask=None,
    include_variance: bool = True,
    level: float = 0.95,
    override=None,
    tau: Optional[float] = None,
    cap: Optional[int] = None,
) -> McSummary:
    """Run seeded replications and summarize every requested estimator.

    ``override`` may be None, the string "groups" (same-group pairs of the
    scenario's partition), or an explicit pair mask; it affects only the
    variance estimator.
    """
    seed_key = (seed,) if isinstance(seed, int) else tuple(seed)
    named = _normalize_estimators(estimators)
    if tau is None:
        tau = resolve_tau(scenario, a, b, cap)
    law = resolve_law(scenario, need_joint=include_variance, cap=cap)
    if isinstance(override, str):
        if override in ("none", "natural"):
            override = None
        elif override == "groups":
            if scenario.groups is None:
                override = None
            else:
                override = partial_interference_override(scenario.groups)
        else:
            raise ValueError(f"unknown override policy {override!r}")

    Z = sample_assignments(scenario, seed_key, reps, workers)
    D = scenario.exposure.apply(Z)
    Y = scenario.outcome.apply(Z)

    varest = None
    warnings: list[str] = []
    if include_variance:
        varest = batch_variance_estimates(D, Y, law, a, b, override=override, mask=mask)
        negative = int(np.sum(varest < 0.0))
        if negative:
            warnings.append(
                f"variance estimate negative on {negative} of {reps} replications"
            )

    stats = []
    for name, spec in named:
        est = batch_estimates(
            spec, D, Y, law.pi, a, b, mask=mask, covariates=scenario.covariates
        )
        undefined = int(np.sum(~np.isfinite(est)))
        if undefined:
            warnings.append(
                f"{name}: undefined on {undefined} of {reps} replications (excluded)"
            )
        stats.append(_stats_for(name, est, varest, tau, level))

    return McSummary(
        scenario=scenario.name or "scenario",
        n=scenario.n,
        a=a,
        b=b,
        reps=reps,
        seed_key=seed_key,
        tau=tau,
        level=level,
        estimators=tuple(stats),
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Rate experiments


@dataclass(frozen=True)
class RateRow:
    n: int
    reps: int
    rmse: float
    bias: float
    design_a: float
    design_b: float
    explainable: float
    unexplainable: float
    total: float


@dataclass(frozen=True)
class RateTable:
    """RMSE against sample size with a fitted log-log slope."""

    rows: tuple[RateRow, ...]
    slope: float
    intercept: float

    CSV_HEADER = "n,reps,rmse,bias,D_a,D_b,E,U,T,slope"

    def csv_lines(self) -> list[str]:
        def fmt(x) -> str:
            return format(x, ".17g") if isinstance(x, float) else str(x)

        out = []
        for row in self.rows:
            out.append(
                ",".join(
                    fmt(v)
                    for v in (
                        row.n, row.reps, row.rmse, row.bias, row.design_a,
                        row.design_b, row.explainable, row.unexplainable,
                        row.total, self.slope,
                    )
                )
            )
        return out


def rate_experiment(
    family,
    ns: Sequence[int],
    reps: int,
    seed: int,
    a: int,
    b: int,
    estimator: EstimatorSpec = HT,
    workers: int = 1,
    diagnostics_cap: int = 2**14,
) -> RateTable:
    """Replicate one estimator across a scenario family of growing size.

    Exact dependence diagnostics are attached for sizes whose support fits
    under ``diagnostics_cap``; larger rows carry NaN.
    """
    rows = []
    for n in ns:
        scenario = family(n)
        summary = run_replications(
            scenario,
            [estimator],
            a,
            b,
            reps,
            seed=(seed, n),
            workers=workers,
            include_variance=False,
        )
        st = summary.estimators[0]
        diag = dict.fromkeys(("da", "db", "e", "u", "t"), math.nan)
        size = scenario.design.support_size()
        if size is not None and size <= diagnostics_cap:
            from .diagnostics import (
                design_dependence,
                explainable_error_dependence,
                total_error_dependence,
                unexplainable_error_dependence,
            )

            support = build_support(scenario, cap=diagnostics_cap)
            law = compute_exposure_law(scenario, support=support)
            truth = compute_ground_truth(scenario, law, support=support)
            diag["da"] = design_dependence(law, a)
            diag["db"] = design_dependence(law, b)
            diag["e"] = explainable_error_dependence(truth, a)
            diag["u"] = unexplainable_error_dependence(
                scenario, law, truth, a, support=support
            )
            diag["t"] = total_error_dependence(scenario, law, truth, a, support=support)
        rows.append(
            RateRow(
                n=n,
                reps=reps,
                rmse=st.rmse,
                bias=st.bias,
                design_a=diag["da"],
                design_b=diag["db"],
                explainable=diag["e"],
                unexplainable=diag["u"],
                total=diag["t"],
            )
        )
    logs_n = np.log([row.n for row in rows])
    logs_r = np.log([row.rmse for row in rows])
    slope, intercept = np.polyfit(logs_n, logs_r, 1)
    return RateTable(rows=tuple(rows), slope=float(slope), intercept=float(intercept))


# ---------------------------------------------------------------------------
# Coverage experiments


@dataclass(frozen=True)
class CoverageRow:
    method: str
    level: float
    coverage: float
    mcse: float
    mean_varest: float
    negative_varest_share: float


def coverage_experiment(
    scenario: Scenario,
    a: int,
    b: int,
    reps: int,
    seed: int | tuple,
    override=None,
    workers: int = 1,
    level: float = 0.95,
) -> tuple[CoverageRow, ...]:
    """Empirical interval coverage of the inverse-probability contrast."""
    summary = run_replications(
        scenario,
        [HT],
        a,
        b,
        reps,
        seed,
        workers=workers,
        include_variance=True,
        level=level,
        override=override,
    )
    st = summary.estimators[0]
    negative = 0.0
    for note in summary.warnings:
        if note.startswith("variance estimate negative"):
            negative = int(note.split()[4]) / reps
    return (
        CoverageRow("normal", level, st.cov_normal, st.mcse_cov_normal,
                    st.mean_varest, negative),
        CoverageRow("chebyshev", level, st.cov_chebyshev, st.mcse_cov_chebyshev,
                    st.mean_varest, negative),
    )

"""Core experiment objects: assignments, designs, exposure maps, outcome models.

A scenario bundles everything needed to run or exactly analyze one experiment:
the unit count, the finite treatment alphabet (dense integers 0..n_treatments-1),
the assignment design, the per-unit exposure mapping into a finite label
alphabet, the deterministic outcome model, and optional fixed covariates and a
unit-group partition. All objects are immutable after construction and all
evaluation functions are pure, so scenarios can be shared freely across
workers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Protocol, runtime_checkable

import numpy as np

from .errors import EnumerationInfeasible

DEFAULT_ENUM_CAP = 2**24
ENUM_CAP_ENV = "EXPOSURE_LAB_ENUM_CAP"


def enumeration_cap(cap: Optional[int] = None) -> int:
    """Resolve the enumeration cap from an explicit value or the environment."""
    if cap is not None:
        return int(cap)
    env = os.environ.get(ENUM_CAP_ENV)
    if env is not None:
        return int(env)
    return DEFAULT_ENUM_CAP


@runtime_checkable
class Design(Protocol):
    """Distribution over assignment vectors.

    ``sample`` draws one assignment. Designs that can enumerate their support
    implement ``support`` returning ``(assignments, probs)`` where
    ``assignments`` is an ``(S, n)`` integer array of the positive-probability
    assignment vectors and ``probs`` the matching probabilities. Designs that
    cannot enumerate set ``support_size`` to ``None``.
    """

    n: int
    n_treatments: int

    def sample(self, rng: np.random.Generator) -> np.ndarray: ...

    def support_size(self) -> Optional[int]: ...

    def support(self, cap: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]: ...


@runtime_checkable
class ExposureMap(Protocol):
    """Per-unit deterministic labeling of assignment vectors.

    ``apply`` is total and vectorized: it maps an ``(S, n)`` batch of
    assignment vectors to an ``(S, n)`` array of labels in
    ``0..n_labels-1``.
    """

    n: int
    n_labels: int

    def apply(self, assignments: np.ndarray) -> np.ndarray: ...


@runtime_checkable
class OutcomeModel(Protocol):
    """Deterministic potential outcomes with a declared absolute bound.

    ``apply`` maps an ``(S, n)`` batch of assignment vectors to an ``(S, n)``
    float array of outcomes; ``k1`` bounds ``|y_i(z)|`` over all of them.
    """

    n: int
    k1: float

    def apply(self, assignments: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class Scenario:
    """Immutable bundle of one experiment's primitives.

    ``covariates`` are fixed pre-assignment unit attributes (never functions of
    the assignment); ``groups`` is an optional per-unit group id used by the
    partial-interference variance refinement. ``tau_fn`` and ``law_provider``
    are optional closed-form providers attached by library constructors for
    families too large to enumerate; both are cross-validated against the
    exact engine in the test suite.
    """

    n: int
    n_treatments: int
    design: Design
    exposure: ExposureMap
    outcome: OutcomeModel
    covariates: Optional[np.ndarray] = None
    groups: Optional[np.ndarray] = None
    tau_fn: Optional[object] = None
    law_provider: Optional[object] = None
    name: str = ""

    def __post_init__(self):
        if self.covariates is not None:
            x = np.asarray(self.covariates, dtype=float)
            if x.ndim != 2:
                raise ValueError("covariates must be a 2-d array (units by features)")
            object.__setattr__(self, "covariates", x)
        if self.groups is not None:
            g = np.asarray(self.groups, dtype=np.int64)
            object.__setattr__(self, "groups", g)

    @property
    def n_labels(self) -> int:
        return self.exposure.n_labels

    def omega_size(self) -> int:
        return self.n_treatments**self.n

    def realize(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exposures and outcomes for a single assignment vector."""
        batch = np.asarray(z, dtype=np.int64).reshape(1, self.n)
        d = self.exposure.apply(batch)[0]
        y = self.outcome.apply(batch)[0]
        return d, y


def enumerate_omega(n: int, n_treatments: int, cap: Optional[int] = None) -> np.ndarray:
    """All assignment vectors in row-major order, unit 0 most significant.

    Raises EnumerationInfeasible when the alphabet size to the n-th power
    exceeds the cap.
    """
    size = n_treatments**n
    limit = enumeration_cap(cap)
    if size > limit:
        raise EnumerationInfeasible(size, limit)
    grids = np.indices((n_treatments,) * n).reshape(n, size).T
    return np.ascontiguousarray(grids, dtype=np.int64)


def assignment_index(z: np.ndarray, n_treatments: int) -> np.ndarray:
    """Row-major index of assignment vectors, matching enumerate_omega order."""
    z = np.atleast_2d(np.asarray(z, dtype=np.int64))
    n = z.shape[1]
    powers = n_treatments ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return z @ powers


@dataclass(frozen=True)
class ValidationReport:
    """List of violated invariants; empty means the scenario is well-formed."""

    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __iter__(self):
        return iter(self.violations)


_PMF_TOL = 1e-12


def validate_scenario(
    scenario: Scenario,
    cap: Optional[int] = None,
    sample_draws: int = 256,
    seed: int = 0,
) -> ValidationReport:
    """Check basic well-formedness and return the list of violations.

    When the design enumerates its support, pmf normalization, exposure-map
    totality, and the outcome bound are checked over the full support;
    otherwise over ``sample_draws`` seeded draws.
    """
    bad: list[str] = []
    s = scenario
    if s.design.n != s.n:
        bad.append(f"design covers {s.design.n} units, scenario has {s.n}")
    if s.exposure.n != s.n:
        bad.append(f"exposure map covers {s.exposure.n} units, scenario has {s.n}")
    if s.outcome.n != s.n:
        bad.append(f"outcome model covers {s.outcome.n} units, scenario has {s.n}")
    if getattr(s.design, "n_treatments", s.n_treatments) != s.n_treatments:
        bad.append("design treatment alphabet disagrees with scenario")
    if s.covariates is not None and s.covariates.shape[0] != s.n:
        bad.append("covariate rows do not match unit count")
    if s.groups is not None and s.groups.shape != (s.n,):
        bad.append("groups must assign one group id per unit")

    if bad:
        return ValidationReport(tuple(bad))

    size = s.design.support_size()
    limit = enumeration_cap(cap)
    if size is not None and size <= limit:
        assignments, probs = s.design.support(cap=limit)
        total = float(np.sum(probs))
        if abs(total - 1.0) > _PMF_TOL:
            bad.append(f"design pmf sums to {total!r}, not 1 within {_PMF_TOL}")
        if np.any(probs <= 0):
            bad.append("design support carries non-positive probabilities")
    else:
        rng = np.random.default_rng(seed)
        assignments = np.stack([s.design.sample(rng) for _ in range(sample_draws)])

    if assignments.size:
        if assignments.min() < 0 or assignments.max() >= s.n_treatments:
            bad.append("assignments fall outside the treatment alphabet")
        labels = s.exposure.apply(assignments)
        if labels.min() < 0 or labels.max() >= s.exposure.n_labels:
            bad.append("exposure map produced labels outside its alphabet")
        outcomes = s.outcome.apply(assignments)
        if not np.all(np.isfinite(outcomes)):
            bad.append("outcome model produced non-finite values")
        else:
            peak = float(np.max(np.abs(outcomes)))
            if peak > s.outcome.k1 + 1e-12:
                bad.append(
                    f"outcome magnitude {peak!r} exceeds declared bound {s.outcome.k1!r}"
                )
    return ValidationReport(tuple(bad))


def is_correctly_specified(scenario: Scenario, unit: int, cap: Optional[int] = None) -> bool:
    """Whether the unit's outcome is constant on each of its exposure classes.

    Checked over every assignment vector, including zero-probability ones, so
    the full assignment space must be enumerable.
    """
    omega = enumerate_omega(scenario.n, scenario.n_treatments, cap)
    labels = scenario.exposure.apply(omega)[:, unit]
    values = scenario.outcome.apply(omega)[:, unit]
    for d in range(scenario.exposure.n_labels):
        cell = values[labels == d]
        if cell.size and (cell.max() - cell.min()) != 0.0:
            return False
    return True


def correctly_specified_units(scenario: Scenario, cap: Optional[int] = None) -> np.ndarray:
    """Boolean vector marking units whose exposures carry all causal information."""
    omega = enumerate_omega(scenario.n, scenario.n_treatments, cap)
    labels = scenario.exposure.apply(omega)
    values = scenario.outcome.apply(omega)
    out = np.ones(scenario.n, dtype=bool)
    for i in range(scenario.n):
        for d in range(scenario.exposure.n_labels):
            cell = values[labels[:, i] == d, i]
            if cell.size and (cell.max() - cell.min()) != 0.0:
                out[i] = False
                break
    return out


def normalize_mask(mask, n: int) -> np.ndarray:
    """Coerce a unit-inclusion mask (None, bool vector, or index list) to indices."""
    if mask is None:
        return np.arange(n)
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape != (n,):
            raise ValueError("boolean mask must have one entry per unit")
        return np.flatnonzero(mask)
    idx = np.unique(mask.astype(np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise ValueError("mask indices out of range")
    return idx

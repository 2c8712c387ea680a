"""Shared test scenarios: hand-checked small cases and the verification suite.

Every suite entry is exactly enumerable (n <= 12) and carries a contrast with
full positivity; entries mix designs, exposure maps, and outcome models.
Hand-derived expected values for the small named cases live in the tests that
assert them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from exposure_lab import Scenario
from exposure_lab import library as lib


def _tabular_from_fn(n: int, fn, n_treatments: int = 2, k1=None) -> lib.TabularOutcome:
    """Build an explicit outcome table from y_i(z) evaluated on all assignments."""
    table = np.zeros((n, n_treatments**n))
    for idx, z in enumerate(itertools.product(range(n_treatments), repeat=n)):
        for i in range(n):
            table[i, idx] = fn(i, z)
    return lib.TabularOutcome(table, n_treatments, k1=k1)


def _covs(n: int) -> np.ndarray:
    return np.column_stack([np.ones(n), np.arange(n) / max(n - 1, 1)])


def scn_a() -> Scenario:
    """n=2, iid fair coins, own-treatment labels, symmetric half spillover."""
    return Scenario(
        n=2,
        n_treatments=2,
        design=lib.BernoulliDesign(2, 0.5),
        exposure=lib.OwnTreatment(2, 2),
        outcome=_tabular_from_fn(2, lambda i, z: z[i] + 0.5 * z[1 - i], k1=1.5),
        covariates=_covs(2),
        name="scn-a",
    )


def scn_b() -> Scenario:
    """n=2, exactly one treated, own-treatment labels, no interference."""
    return Scenario(
        n=2,
        n_treatments=2,
        design=lib.CompleteDesign(2, 1),
        exposure=lib.OwnTreatment(2, 2),
        outcome=_tabular_from_fn(2, lambda i, z: float(z[i]), k1=1.0),
        covariates=_covs(2),
        name="scn-b",
    )


def scn_c() -> Scenario:
    """n=3, unit 2 can never be treated under the design, y_i = z_i."""
    return Scenario(
        n=3,
        n_treatments=2,
        design=lib.RestrictedDesign([[1, 0, 0], [0, 1, 0]], [0.5, 0.5]),
        exposure=lib.OwnTreatment(3, 2),
        outcome=_tabular_from_fn(3, lambda i, z: float(z[i]), k1=1.0),
        covariates=_covs(3),
        name="scn-c",
    )


def scn_d() -> Scenario:
    """n=3, iid fair coins, product interference from the other two units."""
    return Scenario(
        n=3,
        n_treatments=2,
        design=lib.BernoulliDesign(3, 0.5),
        exposure=lib.OwnTreatment(3, 2),
        outcome=_tabular_from_fn(
            3, lambda i, z: z[i] + 0.5 * z[(i + 1) % 3] * z[(i + 2) % 3], k1=1.5
        ),
        covariates=_covs(3),
        name="scn-d",
    )


def asymmetric_pair() -> Scenario:
    """One-way interference: unit 0 hears unit 1, unit 1 hears nobody."""
    return Scenario(
        n=2,
        n_treatments=2,
        design=lib.BernoulliDesign(2, 0.5),
        exposure=lib.OwnTreatment(2, 2),
        outcome=_tabular_from_fn(2, lambda i, z: z[i] + (0.5 * z[1] if i == 0 else 0.0), k1=1.5),
        covariates=_covs(2),
        name="asymmetric-pair",
    )


@dataclass(frozen=True)
class SuiteEntry:
    name: str
    scenario: Scenario
    a: int
    b: int
    correctly_specified: bool = False


def _with_covs(s: Scenario) -> Scenario:
    if s.covariates is not None:
        return s
    return Scenario(
        n=s.n,
        n_treatments=s.n_treatments,
        design=s.design,
        exposure=s.exposure,
        outcome=s.outcome,
        covariates=_covs(s.n),
        groups=s.groups,
        tau_fn=s.tau_fn,
        law_provider=s.law_provider,
        name=s.name,
    )


@lru_cache(maxsize=1)
def suite() -> tuple[SuiteEntry, ...]:
    """Enumerable scenarios with positivity on their contrast labels."""
    entries: list[SuiteEntry] = []

    def add(name, scenario, a, b, correct=False):
        entries.append(SuiteEntry(name, _with_covs(scenario), a, b, correct))

    add("scn-a", scn_a(), 1, 0)
    add("scn-b", scn_b(), 1, 0, correct=True)
    add("scn-d", scn_d(), 1, 0)
    add("asymmetric-pair", asymmetric_pair(), 1, 0)

    add("ring-misspec-8", lib.ring_spillover_family(8, k=1, p=0.5, spill=0.5), 1, 0)
    add("ring-misspec-10", lib.ring_spillover_family(10, k=1, p=0.3, spill=-0.7), 1, 0)
    add("ring-k2-9", lib.ring_spillover_family(9, k=2, p=0.6, spill=0.4), 1, 0)

    cr = lib.correct_ring_family(8, k=1, p=0.5)
    add("correct-ring-8", cr, cr.exposure.encode(1, 1), cr.exposure.encode(0, 1), correct=True)

    # boundary draws let the own treatment flip the outcome inside a label
    # class, so these are (mildly) misspecified
    add("global-share-9", lib.global_share_family(9), 1, 0)
    add("global-share-7", lib.global_share_family(7, p=0.4, shift=0.8), 1, 0)

    add("paired-antagonism-8", lib.paired_antagonism_family(8), 1, 0)
    add("paired-positive-6", lib.paired_antagonism_family(6, spill=1.2), 1, 0)

    g8 = lib.ring_graph(8, 1)
    add(
        "global-decay-8",
        Scenario(
            n=8, n_treatments=2,
            design=lib.BernoulliDesign(8, 0.4),
            exposure=lib.OwnTreatment(8, 2),
            outcome=lib.GlobalDecay(8, 1.0, 0.8),
            name="global-decay-8",
        ),
        1, 0,
    )
    add(
        "equilibrium-8",
        Scenario(
            n=8, n_treatments=2,
            design=lib.BernoulliDesign(8, 0.5),
            exposure=lib.OwnTreatment(8, 2),
            outcome=lib.EquilibriumSwitch(8, 1.0, 0.6, 0.5),
            name="equilibrium-8",
        ),
        1, 0,
    )
    add(
        "complete-ring-8",
        Scenario(
            n=8, n_treatments=2,
            design=lib.CompleteDesign(8, 4),
            exposure=lib.OwnTreatment(8, 2),
            outcome=lib.LinearSpillover(8, 1.0, 0.5, g8),
            name="complete-ring-8",
        ),
        1, 0,
    )
    add(
        "complete-zero-joint-4",
        Scenario(
            n=4, n_treatments=2,
            design=lib.CompleteDesign(4, 1),
            exposure=lib.OwnTreatment(4, 2),
            outcome=lib.LinearSpillover(4, 1.0, 0.5, lib.ring_graph(4, 1)),
            name="complete-zero-joint-4",
        ),
        1, 0,
    )
    g9 = lib.ring_graph(9, 1)
    add(
        "complete-neighbor-9",
        Scenario(
            n=9, n_treatments=2,
            design=lib.CompleteDesign(9, 3),
            exposure=lib.NeighborFraction(g9, (0.5,)),
            outcome=lib.LinearSpillover(9, 1.0, 0.6, g9),
            name="complete-neighbor-9",
        ),
        1, 0,
    )
    groups_44 = np.repeat([0, 1], 4)
    add(
        "group-complete-8",
        Scenario(
            n=8, n_treatments=2,
            design=lib.GroupCompleteDesign(groups_44, [2, 2]),
            exposure=lib.OwnTreatment(8, 2),
            outcome=lib.LinearSpillover(8, 1.0, 0.5, lib.groups_graph(groups_44)),
            groups=groups_44,
            name="group-complete-8",
        ),
        1, 0,
    )
    groups_333 = np.repeat([0, 1, 2], 3)
    add(
        "group-count-9",
        Scenario(
            n=9, n_treatments=2,
            design=lib.BernoulliDesign(9, 0.5),
            exposure=lib.GroupCount(groups_333, 2),
            outcome=lib.LinearSpillover(9, 1.0, 0.5, lib.groups_graph(groups_333)),
            groups=groups_333,
            name="group-count-9",
        ),
        1, 0,
    )
    groups_22 = np.repeat([0, 1, 2, 3], 2)
    add(
        "group-count-complete-8",
        Scenario(
            n=8, n_treatments=2,
            design=lib.CompleteDesign(8, 4),
            exposure=lib.GroupCount(groups_22, 1),
            outcome=lib.LinearSpillover(8, 1.0, 0.4, lib.groups_graph(groups_22)),
            groups=groups_22,
            name="group-count-complete-8",
        ),
        1, 0,
    )
    grid = lib.grid_graph(3, 3)
    add(
        "grid-neighbor-9",
        Scenario(
            n=9, n_treatments=2,
            design=lib.BernoulliDesign(9, 0.5),
            exposure=lib.NeighborFraction(grid, (0.25, 0.75)),
            outcome=lib.LinearSpillover(9, 1.0, 0.7, grid),
            name="grid-neighbor-9",
        ),
        2, 0,
    )
    g6 = lib.ring_graph(6, 1)
    own_nbr = lib.OwnAndNeighborFraction(g6, (0.5,), 2)
    add(
        "own-nbr-lossy-6",
        Scenario(
            n=6, n_treatments=2,
            design=lib.BernoulliDesign(6, 0.6),
            exposure=own_nbr,
            outcome=lib.LinearSpillover(6, 1.0, 0.5, g6),
            name="own-nbr-lossy-6",
        ),
        own_nbr.encode(1, 1), own_nbr.encode(0, 1),
    )
    perms = [list(p) for p in itertools.permutations([0, 1, 2])]
    add(
        "ternary-perms-3",
        Scenario(
            n=3, n_treatments=3,
            design=lib.RestrictedDesign(perms, [1 / 6] * 6, 3),
            exposure=lib.OwnTreatment(3, 3),
            outcome=_tabular_from_fn(
                3, lambda i, z: 0.5 * z[i] + 0.25 * (z[(i + 1) % 3] == 2), 3, k1=1.25
            ),
            name="ternary-perms-3",
        ),
        2, 0,
    )
    add(
        "restricted-corr-4",
        Scenario(
            n=4, n_treatments=2,
            design=lib.RestrictedDesign(
                [[1, 1, 1, 1], [0, 0, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1]],
                [0.3, 0.3, 0.2, 0.2],
            ),
            exposure=lib.OwnTreatment(4, 2),
            outcome=_tabular_from_fn(4, lambda i, z: z[i] + (0.5 * z[3] if i == 0 else 0.0), k1=1.5),
            name="restricted-corr-4",
        ),
        1, 0,
    )
    add(
        "perunit-bernoulli-7",
        Scenario(
            n=7, n_treatments=2,
            design=lib.BernoulliDesign(7, [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]),
            exposure=lib.OwnTreatment(7, 2),
            outcome=lib.GlobalDecay(7, 1.0, 0.5),
            name="perunit-bernoulli-7",
        ),
        1, 0,
    )
    # correct specification must hold on every assignment vector, including
    # ones the design never draws, so the outcome is a pure direct effect
    add(
        "complete-correct-6",
        Scenario(
            n=6, n_treatments=2,
            design=lib.CompleteDesign(6, 2),
            exposure=lib.OwnTreatment(6, 2),
            outcome=lib.LinearSpillover(6, 1.0, 0.0),
            name="complete-correct-6",
        ),
        1, 0, correct=True,
    )
    add(
        "constant-outcome-4",
        Scenario(
            n=4, n_treatments=2,
            design=lib.BernoulliDesign(4, 0.5),
            exposure=lib.OwnTreatment(4, 2),
            outcome=_tabular_from_fn(4, lambda i, z: 0.75, k1=0.75),
            name="constant-outcome-4",
        ),
        1, 0, correct=True,
    )
    return tuple(entries)


@lru_cache(maxsize=1)
def zero_probability_suite() -> tuple[SuiteEntry, ...]:
    """Scenarios whose designs assign zero probability to realizable labels."""
    entries = [SuiteEntry("scn-c", scn_c(), 1, 0)]
    groups_22 = np.array([0, 0, 1, 1])
    entries.append(
        SuiteEntry(
            "single-treated-household-4",
            Scenario(
                n=4, n_treatments=2,
                design=lib.CompleteDesign(4, 1),
                exposure=lib.GroupCount(groups_22, 2),
                outcome=_tabular_from_fn(4, lambda i, z: z[i] + 0.25 * z[i ^ 1], k1=1.25),
                groups=groups_22,
                name="single-treated-household-4",
            ),
            1, 0,
        )
    )
    entries.append(
        SuiteEntry(
            "always-never-4",
            Scenario(
                n=4, n_treatments=2,
                design=lib.RestrictedDesign(
                    [[1, 0, 0, 0], [1, 1, 0, 0], [1, 0, 1, 0]], [0.4, 0.3, 0.3]
                ),
                exposure=lib.OwnTreatment(4, 2),
                outcome=_tabular_from_fn(4, lambda i, z: z[i] + 0.5 * z[0], k1=1.5),
                name="always-never-4",
            ),
            1, 0,
        )
    )
    return tuple(entries)

"""Concrete designs, graphs, exposure maps, outcome models, and predictors.

Everything here is a small immutable dataclass so scenarios pickle cleanly for
worker pools. Constructors validate their parameters eagerly and raise
InvalidParams on bad input. The JSON schema consumed by the CLI mirrors the
constructor signatures one to one; ``scenario_from_json`` and
``scenario_to_json`` round-trip.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import binom as binom_dist

from .errors import (
    EnumerationInfeasible,
    InvalidParams,
    MissingCovariates,
    MissingGraph,
)
from .scenario import Scenario, enumerate_omega, enumeration_cap

# ---------------------------------------------------------------------------
# Interference graphs


@dataclass(frozen=True, eq=False)
class InterferenceGraph:
    """Undirected simple graph as sorted neighbor lists."""

    n: int
    neighbors: tuple[tuple[int, ...], ...]
    kind: str = "custom"
    params: tuple = ()

    def __post_init__(self):
        if len(self.neighbors) != self.n:
            raise InvalidParams("neighbor lists must cover every unit")
        for i, nbrs in enumerate(self.neighbors):
            if i in nbrs:
                raise InvalidParams(f"self-loop at unit {i}")
            if list(nbrs) != sorted(set(nbrs)):
                raise InvalidParams(f"neighbor list of unit {i} not sorted and unique")
            for j in nbrs:
                if i not in self.neighbors[j]:
                    raise InvalidParams(f"edge ({i},{j}) is not symmetric")

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(nbrs) for nbrs in self.neighbors], dtype=np.int64)

    def adjacency(self) -> sp.csr_matrix:
        rows = [i for i, nbrs in enumerate(self.neighbors) for _ in nbrs]
        cols = [j for nbrs in self.neighbors for j in nbrs]
        data = np.ones(len(rows), dtype=np.float64)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def to_json(self) -> dict:
        if self.kind == "custom":
            return {"kind": "custom", "neighbors": [list(nbrs) for nbrs in self.neighbors]}
        return {"kind": self.kind, **dict(self.params)}


def _from_edge_sets(n: int, sets: list[set[int]], kind: str, params: dict) -> InterferenceGraph:
    return InterferenceGraph(
        n=n,
        neighbors=tuple(tuple(sorted(s)) for s in sets),
        kind=kind,
        params=tuple(sorted(params.items())),
    )


def ring_graph(n: int, k: int = 1) -> InterferenceGraph:
    """Circular lattice joining each unit to its k nearest units on both sides."""
    if n < 1 or k < 0:
        raise InvalidParams("ring graph needs n >= 1 and k >= 0")
    sets = [set() for _ in range(n)]
    for i in range(n):
        for step in range(1, k + 1):
            for j in ((i + step) % n, (i - step) % n):
                if j != i:
                    sets[i].add(j)
    return _from_edge_sets(n, sets, "ring", {"k": k})


def grid_graph(width: int, height: int) -> InterferenceGraph:
    """Four-neighbor lattice on a width-by-height grid, row-major unit order."""
    if width < 1 or height < 1:
        raise InvalidParams("grid dimensions must be positive")
    n = width * height
    sets = [set() for _ in range(n)]
    for r in range(height):
        for c in range(width):
            i = r * width + c
            if c + 1 < width:
                sets[i].add(i + 1)
                sets[i + 1].add(i)
            if r + 1 < height:
                sets[i].add(i + width)
                sets[i + width].add(i)
    return _from_edge_sets(n, sets, "grid", {"width": width, "height": height})


def groups_graph(group_ids: Sequence[int]) -> InterferenceGraph:
    """Complete graph within each group, no edges across groups."""
    ids = np.asarray(group_ids, dtype=np.int64)
    n = ids.size
    sets = [set() for _ in range(n)]
    for g in np.unique(ids):
        members = np.flatnonzero(ids == g)
        for i in members:
            sets[i].update(int(j) for j in members if j != i)
    return _from_edge_sets(n, sets, "groups", {})


def erdos_renyi_graph(n: int, p: float, seed: int) -> InterferenceGraph:
    """Seeded G(n, p) random graph."""
    if not 0.0 <= p <= 1.0:
        raise InvalidParams("edge probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    sets = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                sets[i].add(j)
                sets[j].add(i)
    return _from_edge_sets(n, sets, "erdos_renyi", {"p": p, "seed": seed})


def make_graph(kind: str, n: int, **params) -> InterferenceGraph:
    if kind == "ring":
        return ring_graph(n, **params)
    if kind == "grid":
        return grid_graph(**params)
    if kind == "groups":
        return groups_graph(**params)
    if kind == "erdos_renyi":
        return erdos_renyi_graph(n, **params)
    if kind == "custom":
        return InterferenceGraph(
            n=n, neighbors=tuple(tuple(v) for v in params["neighbors"]), kind="custom"
        )
    raise InvalidParams(f"unknown graph kind {kind!r}")


# ---------------------------------------------------------------------------
# Designs


@dataclass(frozen=True)
class BernoulliDesign:
    """Independent binary assignment, optionally with per-unit probabilities."""

    n: int
    p: tuple[float, ...]

    def __init__(self, n: int, p):
        probs = np.broadcast_to(np.asarray(p, dtype=float), (n,))
        if np.any(probs <= 0.0) or np.any(probs >= 1.0):
            raise InvalidParams("bernoulli probabilities must lie strictly in (0, 1)")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "p", tuple(float(v) for v in probs))

    @property
    def n_treatments(self) -> int:
        return 2

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(self.n) < np.asarray(self.p)).astype(np.int64)

    def support_size(self) -> Optional[int]:
        return 2**self.n

    def support(self, cap=None):
        omega = enumerate_omega(self.n, 2, cap)
        p = np.asarray(self.p)
        logs = np.where(omega == 1, np.log(p), np.log1p(-p)).sum(axis=1)
        return omega, np.exp(logs)

    def to_json(self) -> dict:
        p = list(self.p)
        return {"kind": "bernoulli", "p": p[0] if len(set(p)) == 1 else p}


@dataclass(frozen=True)
class CompleteDesign:
    """Uniform draw over binary assignments with exactly m treated units."""

    n: int
    m: int

    def __post_init__(self):
        if not 0 < self.m < self.n:
            raise InvalidParams("complete randomization needs 0 < m < n")

    @property
    def n_treatments(self) -> int:
        return 2

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = np.zeros(self.n, dtype=np.int64)
        z[rng.permutation(self.n)[: self.m]] = 1
        return z

    def support_size(self) -> Optional[int]:
        return math.comb(self.n, self.m)

    def support(self, cap=None):
        size = self.support_size()
        limit = enumeration_cap(cap)
        if size > limit:
            raise EnumerationInfeasible(size, limit)
        rows = np.zeros((size, self.n), dtype=np.int64)
        for r, chosen in enumerate(itertools.combinations(range(self.n), self.m)):
            rows[r, list(chosen)] = 1
        probs = np.full(size, 1.0 / size)
        return rows, probs

    def to_json(self) -> dict:
        return {"kind": "complete", "m": self.m}


@dataclass(frozen=True)
class GroupCompleteDesign:
    """Independent complete randomization inside disjoint groups."""

    n: int
    group_ids: tuple[int, ...]
    m_per_group: tuple[int, ...]

    def __init__(self, group_ids, m_per_group):
        ids = np.asarray(group_ids, dtype=np.int64)
        uniq = np.unique(ids)
        m = np.asarray(m_per_group, dtype=np.int64)
        if m.shape != uniq.shape:
            raise InvalidParams("one treated count per group is required")
        for g, mg in zip(uniq, m):
            size = int(np.sum(ids == g))
            if not 0 <= mg <= size:
                raise InvalidParams(f"group {g} of size {size} cannot treat {mg} units")
        object.__setattr__(self, "n", int(ids.size))
        object.__setattr__(self, "group_ids", tuple(int(v) for v in ids))
        object.__setattr__(self, "m_per_group", tuple(int(v) for v in m))

    @property
    def n_treatments(self) -> int:
        return 2

    def _members(self) -> list[np.ndarray]:
        ids = np.asarray(self.group_ids)
        return [np.flatnonzero(ids == g) for g in np.unique(ids)]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = np.zeros(self.n, dtype=np.int64)
        for members, mg in zip(self._members(), self.m_per_group):
            z[members[rng.permutation(members.size)[:mg]]] = 1
        return z

    def support_size(self) -> Optional[int]:
        size = 1
        for members, mg in zip(self._members(), self.m_per_group):
            size *= math.comb(members.size, mg)
        return size

    def support(self, cap=None):
        size = self.support_size()
        limit = enumeration_cap(cap)
        if size > limit:
            raise EnumerationInfeasible(size, limit)
        per_group = []
        for members, mg in zip(self._members(), self.m_per_group):
            picks = list(itertools.combinations(members.tolist(), mg))
            per_group.append(picks)
        rows = np.zeros((size, self.n), dtype=np.int64)
        for r, combo in enumerate(itertools.product(*per_group)):
            for chosen in combo:
                rows[r, list(chosen)] = 1
        return rows, np.full(size, 1.0 / size)

    def to_json(self) -> dict:
        return {"kind": "group_complete", "m": list(self.m_per_group)}


@dataclass(frozen=True)
class RestrictedDesign:
    """Arbitrary explicit pmf over a finite list of assignment vectors."""

    n: int
    n_treatments: int
    assignments: np.ndarray = field(compare=False)
    probs: np.ndarray = field(compare=False)

    def __init__(self, assignments, probs, n_treatments: Optional[int] = None):
        rows = np.asarray(assignments, dtype=np.int64)
        p = np.asarray(probs, dtype=float)
        if rows.ndim != 2 or rows.shape[0] != p.size:
            raise InvalidParams("support rows and probabilities must align")
        if np.any(p <= 0):
            raise InvalidParams("support probabilities must be positive")
        if abs(float(np.sum(p)) - 1.0) > 1e-9:
            raise InvalidParams("support probabilities must sum to one")
        k = int(n_treatments) if n_treatments is not None else int(rows.max()) + 1
        if rows.min() < 0 or rows.max() >= k:
            raise InvalidParams("assignments fall outside the treatment alphabet")
        object.__setattr__(self, "n", int(rows.shape[1]))
        object.__setattr__(self, "n_treatments", k)
        object.__setattr__(self, "assignments", rows)
        object.__setattr__(self, "probs", p)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.probs.size, p=self.probs)
        return self.assignments[idx].copy()

    def support_size(self) -> Optional[int]:
        return int(self.probs.size)

    def support(self, cap=None):
        return self.assignments, self.probs

    def to_json(self) -> dict:
        return {
            "kind": "restricted",
            "support": self.assignments.tolist(),
            "probs": self.probs.tolist(),
        }


def make_design(kind: str, n: int, groups=None, **params):
    if kind == "bernoulli":
        return BernoulliDesign(n, params.get("p", 0.5))
    if kind == "complete":
        return CompleteDesign(n, params["m"])
    if kind == "group_complete":
        if groups is None:
            raise InvalidParams("group_complete design needs a group partition")
        return GroupCompleteDesign(groups, params["m"])
    if kind == "restricted":
        return RestrictedDesign(
            params["support"], params["probs"], params.get("n_treatments")
        )
    raise InvalidParams(f"unknown design kind {kind!r}")


# ---------------------------------------------------------------------------
# Exposure maps

# Local structure of one unit's exposure: the label depends on the unit's own
# treatment (when own_involved) and on the number of treated units in
# ``others``. This is what the closed-form law providers key on.


@dataclass(frozen=True)
class LocalRule:
    own_involved: bool
    others: tuple[int, ...]
    kernel: tuple

    def label(self, own: int, count: int) -> int:
        kind = self.kernel[0]
        if kind == "own":
            return own
        if kind == "bucket":
            _, cuts, deg, n_buckets = self.kernel
            if deg == 0:
                return n_buckets
            frac = count / deg
            return int(np.searchsorted(np.asarray(cuts), frac, side="right"))
        if kind == "own_bucket":
            _, cuts, deg, n_buckets = self.kernel
            if deg == 0:
                bucket = n_buckets
            else:
                bucket = int(np.searchsorted(np.asarray(cuts), count / deg, side="right"))
            return own * (n_buckets + 1) + bucket
        if kind == "threshold":
            _, threshold = self.kernel
            return int(own + count >= threshold)
        raise InvalidParams(f"unknown local rule kernel {kind!r}")


@dataclass(frozen=True)
class OwnTreatment:
    """Exposure equals the unit's own assigned treatment."""

    n: int
    n_treatments: int = 2

    @property
    def n_labels(self) -> int:
        return self.n_treatments

    def apply(self, assignments: np.ndarray) -> np.ndarray:
        return np.asarray(assignments, dtype=np.int64).copy()

    def local_rule(self, i: int) -> LocalRule:
        return LocalRule(True, (), ("own",))

    def to_json(self) -> dict:
        return {"kind": "own_treatment"}


def _bucket_of(frac: np.ndarray, cuts: np.ndarray) -> np.ndarray:
    # boundary convention: a fraction equal to a cut belongs to the upper bucket
    return np.searchsorted(cuts, frac, side="right").astype(np.int64)


@dataclass(frozen=True, eq=False)
class NeighborFraction:
    """Bucketed fraction of treated neighbors; isolated units get a dedicated label."""

    graph: InterferenceGraph
    cuts: tuple[float, ...]

    def __init__(self, graph: InterferenceGraph, cuts):
        if graph is None:
            raise MissingGraph("neighbor_fraction exposure needs a graph")
        cuts = tuple(float(c) for c in cuts)
        if list(cuts) != sorted(cuts) or len(set(cuts)) != len(cuts):
            raise InvalidParams("cuts must be strictly increasing")
        object.__setattr__(self, "graph", graph)
        object.__setattr__(self, "cuts", cuts)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def n_buckets(self) -> int:
        return len(self.cuts) + 1

    @property
    def isolated_label(self) -> int:
        return self.n_buckets

    @property
    def n_labels(self) -> int:
        return self.n_buckets + 1

    def _fractions(self, assignments: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        treated = (np.asarray(assignments) >= 1).astype(np.float64)
        counts = (sp.csr_matrix(treated) @ self.graph.adjacency()).toarray()
        deg = self.graph.degrees
        safe = np.maximum(deg, 1)
        return counts / safe, deg

    def apply(self, assignments: np.ndarray) -> np.ndarray:
        frac, deg = self._fractions(assignments)
        labels = _bucket_of(frac, np.asarray(self.cuts))
        labels[:, deg == 0] = self.isolated_label
        return labels

    def local_rule(self, i: int) -> LocalRule:
        others = self.graph.neighbors[i]
        return LocalRule(False, others, ("bucket", self.cuts, len(others), self.n_buckets))

    def to_json(self) -> dict:
        return {"kind": "neighbor_fraction", "cuts": list(self.cuts)}


@dataclass(frozen=True, eq=False)
class OwnAndNeighborFraction:
    """Pair of own treatment and bucketed treated-neighbor fraction, label-encoded."""

    graph: InterferenceGraph
    cuts: tuple[float, ...]
    n_treatments: int = 2

    def __init__(self, graph: InterferenceGraph, cuts, n_treatments: int = 2):
        if graph is None:
            raise MissingGraph("own_and_neighbor_fraction exposure needs a graph")
        base = NeighborFraction(graph, cuts)
        object.__setattr__(self, "graph", graph)
        object.__setattr__(self, "cuts", base.cuts)
        object.__setattr__(self, "n_treatments", int(n_treatments))

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def _base(self) -> NeighborFraction:
        return NeighborFraction(self.graph, self.cuts)

    @property
    def n_buckets_total(self) -> int:
        return len(self.cuts) + 2

    @property
    def n_labels(self) -> int:
        return self.n_treatments * self.n_buckets_total

    def encode(self, own: int, bucket: int) -> int:
        return own * self.n_buckets_total + bucket

    def decode(self, label: int) -> tuple[int, int]:
        return divmod(label, self.n_buckets_total)

    def apply(self, assignments: np.ndarray) -> np.ndarray:
        z = np.asarray(assignments, dtype=np.int64)
        buckets = self._base.apply(z)
        return z * self.n_buckets_total + buckets

    def local_rule(self, i: int) -> LocalRule:
        others = self.graph.neighbors[i]
        return LocalRule(
            True, others, ("own_bucket", self.cuts, len(others), len(self.cuts) + 1)
        )

    def to_json(self) -> dict:
        return {"kind": "own_and_neighbor_fraction", "cuts": list(self.cuts)}


@dataclass(frozen=True)
class GroupCount:
    """Indicator of at least ``threshold`` treated units in the unit's own group."""

    group_ids: tuple[int, ...]
    threshold: int

    def __init__(self, group_ids, threshold: int):
        ids = np.asarray(group_ids, dtype=np.int64)
        if threshold < 1:
            raise InvalidParams("threshold must be at least 1")
        object.__setattr__(self, "group_ids", tuple(int(v) for v in ids))
        object.__setattr__(self, "threshold", int(threshold))

    @property
    def n(self) -> int:
        return len(self.group_ids)

    @property
    def n_labels(self) -> int:
        return 2

    def apply(self, assignments: np.ndarray) -> np.ndarray:
        treated = (np.asarray(assignments) >= 1).astype(np.int64)
        ids = np.asarray(self.group_ids)
        out = np.zeros_like(treated)
        for g in np.unique(ids):
            members = ids == g
            counts = treated[:, members].sum(axis=1, keepdims=True)
            out[:, members] = (counts >= self.threshold).astype(np.int64)
        return out

    def local_rule(self, i: int) -> LocalRule:
        ids = np.asarray(self.group_ids)
        others = tuple(int(j) for j in np.flatnonzero(ids == ids[i]) if j != i)
        return LocalRule(True, others, ("threshold", self.threshold))

    def to_json(self) -> dict:
        return {"kind": "group_count", "threshold": self.threshold}


@dataclass(frozen=True)
class SampleShareExposure:
    """Bucketed share of treated units among all other units.

    The everyone-interferes-with-everyone limit of the neighbor-fraction
    exposure, kept adjacency-free so it scales to large samples.
    """

    n: int
    cuts: tuple[float, ...]

    def __init__(self, n: int, cuts):
        cuts = tuple(float(c) for c in cuts)
        if list(cuts) != sorted(cuts) or len(set(cuts)) != len(cuts):
            raise InvalidParams("cuts must be strictly increasing")
        if n < 2:
            raise InvalidParams("sample share needs at least two units")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "cuts", cuts)

    @property
    def n_labels(self) -> int:
        return len(self.cuts) + 2

    def apply(self, assignments: np.ndarray) -> np.ndarray:
        treated = (np.asarray(assignments) >= 1).astype(np.int64)
        counts = treated.sum(axis=1, keepdims=True) - treated
        return _bucket_of(counts / (self.n - 1), np.asarray(self.cuts))

    def to_json(self) -> dict:
        return {"kind": "sample_share", "cuts": list(self.cuts)}


@dataclass(frozen=True, eq=False)
class SampleShareLaw:
    """Closed-form exposure law for the sample-share exposure under uniform
    independent assignment, via binomial sums."""

    n: int
    p: float
    exposure: SampleShareExposure

    @property
    def n_labels(self) -> int:
        return self.exposure.n_labels

    def _buckets(self, counts: np.ndarray) -> np.ndarray:
        return _bucket_of(counts / (self.n - 1), np.asarray(self.exposure.cuts))

    def marginals(self) -> np.ndarray:
        counts = np.arange(self.n)
        pmf = binom_dist.pmf(counts, self.n - 1, self.p)
        row = np.zeros(self.n_labels)
        np.add.at(row, self._buckets(counts), pmf)
        return np.tile(row, (self.n, 1))

    def pair_table(self) -> np.ndarray:
        """(K, K) joint pmf shared by every distinct unit pair."""
        K = self.n_labels
        rest = np.arange(self.n - 1)
        pmf = binom_dist.pmf(rest, self.n - 2, self.p)
        out = np.zeros((K, K))
        for zi, wi in ((0, 1.0 - self.p), (1, self.p)):
            for zj, wj in ((0, 1.0 - self.p), (1, self.p)):
                di = self._buckets(rest + zj)
                dj = self._buckets(rest + zi)
                np.add.at(out, (di, dj), wi * wj * pmf)
        return out

    def joint_table(self) -> np.ndarray:
        limit = 1 << 27
        if self.n * self.n * self.n_labels * self.n_labels > limit:
            raise EnumerationInfeasible(self.n * self.n, limit)
        K = self.n_labels
        pair = self.pair_table()
        out = np.broadcast_to(pair, (self.n, self.n, K, K)).copy()
        pi = self.marginals()
        for i in range(self.n):
            out[i, i] = np.diag(pi[i])
        return out


def make_exposure(kind: str, n: int, graph=None, groups=None, n_treatments: int = 2, **params):
    if kind == "own_treatment":
        return OwnTreatment(n, n_treatments)
    if kind == "neighbor_fraction":
        if graph is None:
            raise MissingGraph("neighbor_fraction exposure needs a graph")
        return NeighborFraction(graph, params["cuts"])
    if kind == "own_and_neighbor_fraction":
        if graph is None:
            raise MissingGraph("own_and_neighbor_fraction exposure needs a graph")
        return OwnAndNeighborFraction(graph, params["cuts"], n_treatments)
    if kind == "group_count":
        if groups is None:
            raise InvalidParams("group_count exposure needs a group partition")
        return GroupCount(groups, params["threshold"])
    if kind == "sample_share":
        return SampleShareExposure(n, params["cuts"])
    raise InvalidParams(f"unknown exposure kind {kind!r}")


# ---------------------------------------------------------------------------
# Outcome models


@dataclass(frozen=True, eq=False)
class LinearSpillover:
    """Direct effect plus a linear effect of the treated-neighbor fraction."""

    n: int
    direct: float
    spill: float
    graph: Optional[InterferenceGraph] = None

    def __post_init__(self):
        if self.spill != 0.0 and self.graph is None:
            raise MissingGraph("linear_spillover with nonzero spill needs a graph")

    @property
    def k1(self) -> float:
        return abs(self.direct) + abs(self.spill)

    def apply(self, assignments: np.ndarray) -> np.ndarray:
        treated = (np.asarray(assignments) >= 1).astype(np.float64)
        y = self.direct * treated
        if self.spill != 0.0:
            deg = np.maximum(self.graph.degrees, 1)
            counts = (sp.csr_matrix(treated) @ self.graph.adjacency().T).toarray()
            y = y + self.spill * counts / deg
        return y

    def to_json(self) -> dict:
        return {"kind": "linear_spillover", "direct": self.direct, "spill": self.spill}


@dataclass(frozen=True)
class GlobalDecay:
    """Direct effect plus a global term shrinking with the sample size."""

    n: int
    direct: float
    total: float

    @property
    def k1(self) -> float:
        return abs(self.direct) + abs(self.total)

    def apply(self, assignments: np.ndarray) -> np.ndarray:
        treated = (np.asarray(assignments) >= 1).astype(np.float64)
        shared = treated.sum(axis=1, keepdims=True) * (self.total / self.n)
        return self.direct * treated + shared

    def to_json(self) -> dict:
        return {"kind": "global_decay", "direct": self.direct, "total": self.total}


@dataclass(frozen=True)
class EquilibriumSwitch:
    """Direct effect plus a shared jump when the treated share crosses a threshold."""

    n: int
    direct: float
    shift: float
    threshold: float

    @property
    def k1(self) -> float:
        return abs(self.direct) + abs(self.shift)

    def apply(self, assignments: np.ndarray) -> np.ndarray:
        treated = (np.asarray(assignments) >= 1).astype(np.float64)
        share = treated.mean(axis=1, keepdims=True)
        return self.direct * treated + self.shift * (share >= self.threshold)

    def to_json(self) -> dict:
        return {
            "kind": "equilibrium_switch",
            "direct": self.direct,
            "shift": self.shift,
            "threshold": self.threshold,
        }


@dataclass(frozen=True, eq=False)
class TabularOutcome:
    """Explicit per-unit outcome table indexed by row-major assignment index."""

    n: int
    n_treatments: int
    table: np.ndarray
    declared_k1: Optional[float] = None

    def __init__(self, table, n_treatments: int = 2, k1: Optional[float] = None):
        arr = np.asarray(table, dtype=float)
        if arr.ndim != 2:
            raise InvalidParams("tabular outcome needs a units-by-assignments table")
        n = arr.shape[0]
        if arr.shape[1] != n_treatments**n:
            raise InvalidParams("tabular outcome row length must be n_treatments**n")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "n_treatments", int(n_treatments))
        object.__setattr__(self, "table", arr)
        object.__setattr__(self, "declared_k1", None if k1 is None else float(k1))

    @property
    def k1(self) -> float:
        if self.declared_k1 is not None:
            return self.declared_k1
        return float(np.max(np.abs(self.table))) if self.table.size else 0.0

    def apply(self, assignments: np.ndarray) -> np.ndarray:
        from .scenario import assignment_index

        idx = assignment_index(assignments, self.n_treatments)
        return self.table[:, idx].T.copy()

    def to_json(self) -> dict:
        out = {"kind": "tabular", "table": self.table.tolist()}
        if self.declared_k1 is not None:
            out["k1"] = self.declared_k1
        return out


def make_outcome(kind: str, n: int, graph=None, n_treatments: int = 2, **params):
    if kind == "linear_spillover":
        return LinearSpillover(n, params["direct"], params["spill"], graph)
    if kind == "global_decay":
        return GlobalDecay(n, params["direct"], params["total"])
    if kind == "equilibrium_switch":
        return EquilibriumSwitch(n, params["direct"], params["shift"], params["threshold"])
    if kind == "tabular":
        return TabularOutcome(params["table"], n_treatments, params.get("k1"))
    raise InvalidParams(f"unknown outcome kind {kind!r}")


# ---------------------------------------------------------------------------
# External predictors

# Predictors are fixed before any assignment is drawn and see only the
# exposure label and the unit covariates, never realized data.


@dataclass(frozen=True)
class ZeroPredictor:
    n: int

    is_stochastic = False

    def values(self, label: int) -> np.ndarray:
        return np.zeros(self.n)


@dataclass(frozen=True)
class ConstantPredictor:
    n: int
    value: float

    is_stochastic = False

    def values(self, label: int) -> np.ndarray:
        return np.full(self.n, self.value)


@dataclass(frozen=True, eq=False)
class LinearPredictor:
    """Per-exposure linear score of the fixed covariates."""

    covariates: np.ndarray
    coefficients: np.ndarray  # (n_labels, p)

    is_stochastic = False

    def __init__(self, covariates, coefficients):
        if covariates is None:
            raise MissingCovariates("linear predictor needs covariates")
        x = np.asarray(covariates, dtype=float)
        b = np.atleast_2d(np.asarray(coefficients, dtype=float))
        if x.shape[1] != b.shape[1]:
            raise InvalidParams("coefficient width must match covariate width")
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "coefficients", b)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    def values(self, label: int) -> np.ndarray:
        row = min(label, self.coefficients.shape[0] - 1)
        return self.covariates @ self.coefficients[row]


@dataclass(frozen=True, eq=False)
class OraclePredictor:
    """Wraps the exact per-exposure conditional mean outcomes of a scenario."""

    means: np.ndarray  # (n, n_labels)

    is_stochastic = False

    @property
    def n(self) -> int:
        return self.means.shape[0]

    def values(self, label: int) -> np.ndarray:
        col = self.means[:, label]
        return np.where(np.isnan(col), 0.0, col)


def make_predictor(kind: str, n: int, covariates=None, means=None, **params):
    if kind == "zero":
        return ZeroPredictor(n)
    if kind == "constant":
        return ConstantPredictor(n, params["value"])
    if kind == "linear":
        return LinearPredictor(covariates, params["coefficients"])
    if kind == "oracle":
        if means is None:
            raise InvalidParams("oracle predictor needs the exact conditional means")
        return OraclePredictor(np.asarray(means, dtype=float))
    raise InvalidParams(f"unknown predictor kind {kind!r}")


# ---------------------------------------------------------------------------
# Closed-form exposure laws for independent binary designs

_JOINT_DEP_LIMIT = 22


def _poisson_binomial_pmf(probs: np.ndarray) -> np.ndarray:
    """Distribution of a sum of independent Bernoulli draws."""
    pmf = np.array([1.0])
    uniq = set(float(p) for p in probs)
    if len(uniq) == 1 and probs.size:
        return binom_dist.pmf(np.arange(probs.size + 1), probs.size, probs[0])
    for p in probs:
        pmf = np.convolve(pmf, [1.0 - p, p])
    return pmf


@dataclass(frozen=True, eq=False)
class IndependentAssignmentLaw:
    """Exact marginal and joint exposure probabilities under independent
    binary assignment, for exposure maps with local count structure."""

    probs: np.ndarray
    exposure: object
    n_labels: int

    def __init__(self, design: BernoulliDesign, exposure):
        if not isinstance(design, BernoulliDesign):
            raise InvalidParams("closed-form law requires an independent binary design")
        if not hasattr(exposure, "local_rule"):
            raise InvalidParams("exposure map does not declare local structure")
        object.__setattr__(self, "probs", np.asarray(design.p, dtype=float))
        object.__setattr__(self, "exposure", exposure)
        object.__setattr__(self, "n_labels", exposure.n_labels)

    @property
    def n(self) -> int:
        return self.probs.size

    def marginals(self) -> np.ndarray:
        pi = np.zeros((self.n, self.n_labels))
        cache: dict = {}
        for i in range(self.n):
            rule = self.exposure.local_rule(i)
            key = (rule.own_involved, rule.kernel, len(rule.others),
                   float(self.probs[i]) if rule.own_involved else None,
                   tuple(float(self.probs[j]) for j in rule.others))
            if key in cache:
                pi[i] = cache[key]
                continue
            count_pmf = _poisson_binomial_pmf(self.probs[list(rule.others)])
            row = np.zeros(self.n_labels)
            own_states = (0, 1) if rule.own_involved else (0,)
            for own in own_states:
                w_own = 1.0
                if rule.own_involved:
                    w_own = self.probs[i] if own == 1 else 1.0 - self.probs[i]
                for count, w_count in enumerate(count_pmf):
                    row[rule.label(own, count)] += w_own * w_count
            cache[key] = row
            pi[i] = row
        return pi

    def joint(self, i: int, j: int, _cache: Optional[dict] = None) -> np.ndarray:
        """Joint pmf of (exposure of i, exposure of j) as a (K, K) table."""
        rule_i = self.exposure.local_rule(i)
        rule_j = self.exposure.local_rule(j)
        dep_i = (set([i]) if rule_i.own_involved else set()) | set(rule_i.others)
        dep_j = (set([j]) if rule_j.own_involved else set()) | set(rule_j.others)
        union = sorted(dep_i | dep_j)
        if len(union) > _JOINT_DEP_LIMIT:
            raise EnumerationInfeasible(2 ** len(union), 2**_JOINT_DEP_LIMIT)
        pos = {u: k for k, u in enumerate(union)}
        key = None
        if _cache is not None:
            key = (
                rule_i.kernel,
                rule_j.kernel,
                pos[i] if rule_i.own_involved else -1,
                pos[j] if rule_j.own_involved else -1,
                tuple(pos[u] for u in rule_i.others),
                tuple(pos[u] for u in rule_j.others),
                tuple(float(self.probs[u]) for u in union),
            )
            if key in _cache:
                return _cache[key]
        m = len(union)
        patterns = enumerate_omega(m, 2)
        p = np.asarray([self.probs[u] for u in union])
        weights = np.exp(np.where(patterns == 1, np.log(p), np.log1p(-p)).sum(axis=1))
        idx_i = [pos[u] for u in rule_i.others]
        idx_j = [pos[u] for u in rule_j.others]
        counts_i = patterns[:, idx_i].sum(axis=1) if idx_i else np.zeros(patterns.shape[0], int)
        counts_j = patterns[:, idx_j].sum(axis=1) if idx_j else np.zeros(patterns.shape[0], int)
        own_i = patterns[:, pos[i]] if rule_i.own_involved else np.zeros(patterns.shape[0], int)
        own_j = patterns[:, pos[j]] if rule_j.own_involved else np.zeros(patterns.shape[0], int)
        table = np.zeros((self.n_labels, self.n_labels))
        for w, oi, ci, oj, cj in zip(weights, own_i, counts_i, own_j, counts_j):
            table[rule_i.label(int(oi), int(ci)), rule_j.label(int(oj), int(cj))] += w
        if _cache is not None:
            _cache[key] = table
        return table

    def joint_table(self) -> np.ndarray:
        """Full (n, n, K, K) joint table; diagonal carries the marginals."""
        K = self.n_labels
        pi = self.marginals()
        out = np.zeros((self.n, self.n, K, K))
        cache: dict = {}
        for i in range(self.n):
            out[i, i] = np.diag(pi[i])
            for j in range(i + 1, self.n):
                t = self.joint(i, j, cache)
                out[i, j] = t
                out[j, i] = t.T
        return out


# ---------------------------------------------------------------------------
# Scenario families with closed-form targets


@dataclass(frozen=True)
class LinearContrast:
    """tau(a, b) for binary own-treatment exposure with linear direct effect."""

    direct: float

    def __call__(self, a: int, b: int) -> float:
        return self.direct * (a - b)


@dataclass(frozen=True, eq=False)
class PairContrast:
    """tau(a, b) from a per-label mean outcome vector shared by every unit."""

    means: np.ndarray

    def __call__(self, a: int, b: int) -> float:
        return float(self.means[a] - self.means[b])


def ring_spillover_family(n: int, k: int = 1, p: float = 0.5,
                          direct: float = 1.0, spill: float = 0.5) -> Scenario:
    """Misspecified local interference: spillover on a ring, own-treatment labels.

    tau(1, 0) equals the direct effect exactly under independent assignment
    because a unit's own treatment never enters its neighbors' fractions.
    """
    graph = ring_graph(n, k)
    design = BernoulliDesign(n, p)
    exposure = OwnTreatment(n, 2)
    outcome = LinearSpillover(n, direct, spill, graph)
    return Scenario(
        n=n, n_treatments=2, design=design, exposure=exposure, outcome=outcome,
        tau_fn=LinearContrast(direct),
        law_provider=IndependentAssignmentLaw(design, exposure),
        name=f"ring_spillover(n={n},k={k})",
    )


def correct_ring_family(n: int, k: int = 1, p: float = 0.5,
                        direct: float = 1.0, spill: float = 0.5) -> Scenario:
    """Correctly specified ring scenario: labels carry own treatment and the
    exact treated-neighbor count, so outcomes are constant within classes."""
    graph = ring_graph(n, k)
    deg = 2 * k
    cuts = tuple((j) / deg for j in range(1, deg + 1))
    design = BernoulliDesign(n, p)
    exposure = OwnAndNeighborFraction(graph, cuts, 2)
    outcome = LinearSpillover(n, direct, spill, graph)
    means = np.full(exposure.n_labels, np.nan)
    for label in range(exposure.n_labels):
        own, bucket = exposure.decode(label)
        if bucket <= deg:
            means[label] = direct * own + spill * bucket / deg
    return Scenario(
        n=n, n_treatments=2, design=design, exposure=exposure, outcome=outcome,
        tau_fn=PairContrast(means),
        law_provider=IndependentAssignmentLaw(design, exposure),
        name=f"correct_ring(n={n},k={k})",
    )


@dataclass(frozen=True)
class GlobalShareContrast:
    """Exact tau for the sample-wide-share family via binomial sums.

    Label and outcome indicators are evaluated with the same float
    comparisons the exposure map and outcome model use, so the closed form
    agrees with full enumeration bit for bit at small n.
    """

    n: int
    p: float
    shift: float
    threshold: float

    def _mean(self, label: int) -> float:
        others = self.n - 1
        counts = np.arange(others + 1)
        pmf = binom_dist.pmf(counts, others, self.p)
        # bucket of the treated share among the other units
        buckets = _bucket_of(counts / others, np.asarray([self.threshold]))
        # outcome jump depends on the full-sample share including own draw
        hit = self.p * ((counts + 1) / self.n >= self.threshold) + (
            1.0 - self.p
        ) * (counts / self.n >= self.threshold)
        sel = buckets == label
        mass = math.fsum(pmf[sel].tolist())
        if mass == 0.0:
            raise ZeroDivisionError("exposure label has zero probability")
        return self.shift * math.fsum((pmf[sel] * hit[sel]).tolist()) / mass

    def __call__(self, a: int, b: int) -> float:
        return self._mean(a) - self._mean(b)


def global_share_family(n: int, p: float = 0.5, shift: float = 1.0,
                        threshold: float = 0.5) -> Scenario:
    """Unrestricted global interference: the label is the bucketed share of
    treated units among all others, and the outcome jumps with the full-sample
    share. Design dependence does not vanish, so the effect estimator is not
    consistent along this family."""
    design = BernoulliDesign(n, p)
    exposure = SampleShareExposure(n, (threshold,))
    outcome = EquilibriumSwitch(n, 0.0, shift, threshold)
    return Scenario(
        n=n, n_treatments=2, design=design, exposure=exposure, outcome=outcome,
        tau_fn=GlobalShareContrast(n, p, shift, threshold),
        law_provider=SampleShareLaw(n, p, exposure),
        name=f"global_share(n={n})",
    )


def paired_antagonism_family(n: int, p: float = 0.5, direct: float = 1.0,
                             spill: float = -1.5) -> Scenario:
    """Strong within-pair interference with own-treatment labels.

    Specification errors of paired units are negatively dependent across the
    contrasted exposures, which drives the pair-weighted variance estimator
    anti-conservative unless same-pair interactions are overridden.
    """
    if n % 2:
        raise InvalidParams("paired scenario needs an even unit count")
    groups = np.repeat(np.arange(n // 2), 2)
    graph = groups_graph(groups)
    design = BernoulliDesign(n, p)
    exposure = OwnTreatment(n, 2)
    outcome = LinearSpillover(n, direct, spill, graph)
    return Scenario(
        n=n, n_treatments=2, design=design, exposure=exposure, outcome=outcome,
        groups=groups,
        tau_fn=LinearContrast(direct),
        law_provider=IndependentAssignmentLaw(design, exposure),
        name=f"paired_antagonism(n={n})",
    )


FAMILIES = {
    "ring_spillover": ring_spillover_family,
    "correct_ring": correct_ring_family,
    "global_share": global_share_family,
    "paired_antagonism": paired_antagonism_family,
}


def make_family(kind: str, n: int, **params) -> Scenario:
    if kind not in FAMILIES:
        raise InvalidParams(f"unknown scenario family {kind!r}")
    return FAMILIES[kind](n, **params)


# ---------------------------------------------------------------------------
# JSON schema


def scenario_from_json(obj: dict) -> Scenario:
    """Build a scenario from the CLI JSON schema."""
    if "family" in obj:
        spec = dict(obj["family"])
        kind = spec.pop("kind")
        return make_family(kind, int(obj["n"]), **spec)
    n = int(obj["n"])
    n_treatments = int(obj.get("treatments", 2))
    groups = obj.get("groups")
    graph = None
    if "graph" in obj and obj["graph"] is not None:
        gspec = dict(obj["graph"])
        gkind = gspec.pop("kind")
        if gkind == "groups":
            if groups is None:
                raise InvalidParams("groups graph needs a top-level group partition")
            graph = groups_graph(groups)
        else:
            graph = make_graph(gkind, n, **gspec)
    dspec = dict(obj["design"])
    design = make_design(dspec.pop("kind"), n, groups=groups, **dspec)
    espec = dict(obj["exposure"])
    exposure = make_exposure(
        espec.pop("kind"), n, graph=graph, groups=groups,
        n_treatments=n_treatments, **espec,
    )
    ospec = dict(obj["outcome"])
    outcome = make_outcome(ospec.pop("kind"), n, graph=graph, n_treatments=n_treatments, **ospec)
    covariates = obj.get("covariates")
    law_provider = None
    if isinstance(design, BernoulliDesign) and hasattr(exposure, "local_rule"):
        law_provider = IndependentAssignmentLaw(design, exposure)
    return Scenario(
        n=n,
        n_treatments=n_treatments,
        design=design,
        exposure=exposure,
        outcome=outcome,
        covariates=None if covariates is None else np.asarray(covariates, dtype=float),
        groups=None if groups is None else np.asarray(groups, dtype=np.int64),
        law_provider=law_provider,
        name=obj.get("name", ""),
    )


def scenario_to_json(s: Scenario) -> dict:
    out: dict = {
        "n": s.n,
        "treatments": s.n_treatments,
        "design": s.design.to_json(),
        "exposure": s.exposure.to_json(),
        "outcome": s.outcome.to_json(),
    }
    if s.name:
        out["name"] = s.name
    graph = getattr(s.exposure, "graph", None) or getattr(s.outcome, "graph", None)
    if graph is not None:
        out["graph"] = graph.to_json()
    if s.covariates is not None:
        out["covariates"] = s.covariates.tolist()
    if s.groups is not None:
        out["groups"] = s.groups.tolist()
    return out

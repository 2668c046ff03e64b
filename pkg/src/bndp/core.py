"""Shared domain types: typed datasets, bitset node subsets, parent constraints, DAGs.

Nodes are dense integer indices. A set of nodes is a :class:`NodeSubset`,
an integer bitmask, which doubles as the key type of every DP table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
SURVIVAL = "survival"

_KINDS = (CONTINUOUS, CATEGORICAL, SURVIVAL)


class StructureError(ValueError):
    """Structurally invalid graph, constraint set, or dataset."""


class NodeSubset(int):
    """An immutable set of node indices stored as a bitmask.

    Subclasses ``int`` so instances hash and compare like the underlying
    mask; raw integer masks and NodeSubsets are interchangeable as dict
    keys. Set operators return NodeSubsets.
    """

    __slots__ = ()

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> "NodeSubset":
        bits = 0
        for i in indices:
            if i < 0:
                raise StructureError(f"negative node index {i}")
            bits |= 1 << i
        return cls(bits)

    def add(self, i: int) -> "NodeSubset":
        return NodeSubset(self | (1 << i))

    def remove(self, i: int) -> "NodeSubset":
        return NodeSubset(self & ~(1 << i))

    def __contains__(self, i: int) -> bool:
        return (self >> i) & 1 == 1

    def __iter__(self) -> Iterator[int]:
        m = int(self)
        while m:
            lsb = m & -m
            yield lsb.bit_length() - 1
            m ^= lsb

    def count(self) -> int:
        return int(self).bit_count()

    def isdisjoint(self, other: int) -> bool:
        return self & other == 0

    def issubset(self, other: int) -> bool:
        return self & ~int(other) == 0

    def __or__(self, other: int) -> "NodeSubset":
        return NodeSubset(int(self) | int(other))

    def __and__(self, other: int) -> "NodeSubset":
        return NodeSubset(int(self) & int(other))

    def __sub__(self, other: int) -> "NodeSubset":
        # set difference, not integer subtraction
        return NodeSubset(int(self) & ~int(other))

    def __xor__(self, other: int) -> "NodeSubset":
        return NodeSubset(int(self) ^ int(other))

    __ror__ = __or__
    __rand__ = __and__

    def __repr__(self) -> str:
        return f"NodeSubset({{{', '.join(map(str, self))}}})"


@dataclass(frozen=True)
class Column:
    """One dataset column.

    ``values`` is a float vector for continuous columns, an integer code
    vector for categorical columns (codes in ``0..levels-1``), and an
    ``(n, 2)`` array of (time, status) pairs for the survival column.
    """

    name: str
    kind: str
    values: np.ndarray
    levels: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise StructureError(f"unknown column kind {self.kind!r}")
        vals = np.asarray(self.values)
        if self.kind == SURVIVAL:
            if vals.ndim != 2 or vals.shape[1] != 2:
                raise StructureError("survival column needs (n, 2) time/status values")
            if not np.all(vals[:, 0] > 0):
                raise StructureError(f"survival column {self.name!r} has non-positive times")
            if not np.all(np.isin(vals[:, 1], (0.0, 1.0))):
                raise StructureError(f"survival column {self.name!r} has status outside {{0,1}}")
        elif vals.ndim != 1:
            raise StructureError(f"column {self.name!r} must be one-dimensional")
        if np.any(~np.isfinite(vals)):
            raise StructureError(f"column {self.name!r} contains missing or non-finite values")
        if self.kind == CATEGORICAL:
            if self.levels is None or self.levels < 2:
                raise StructureError(f"categorical column {self.name!r} needs level_count >= 2")
            if vals.size and (vals.min() < 0 or vals.max() >= self.levels):
                raise StructureError(f"categorical column {self.name!r} has out-of-range codes")
        object.__setattr__(self, "values", vals)


class Dataset:
    """A column-typed data table with no missing values.

    At most one survival column is allowed and it may only ever be a sink
    in any learned network.
    """

    def __init__(self, columns: Sequence[Column]):
        if not columns:
            raise StructureError("dataset needs at least one column")
        n = len(columns[0].values)
        names = set()
        survival = [i for i, c in enumerate(columns) if c.kind == SURVIVAL]
        if len(survival) > 1:
            raise StructureError("at most one survival column is allowed")
        for c in columns:
            if len(c.values) != n:
                raise StructureError(f"column {c.name!r} has {len(c.values)} rows, expected {n}")
            if c.name in names:
                raise StructureError(f"duplicate column name {c.name!r}")
            names.add(c.name)
        self.columns: tuple[Column, ...] = tuple(columns)
        self.n_rows: int = n
        self.survival_index: int | None = survival[0] if survival else None

    @property
    def p(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, i: int) -> Column:
        return self.columns[i]

    def index_of(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise StructureError(f"no column named {name!r}")

    def numeric_values(self, i: int) -> np.ndarray:
        """Column as a float regressor; categorical codes are used as-is."""
        c = self.columns[i]
        if c.kind == SURVIVAL:
            raise StructureError("survival column cannot be used as a regressor")
        return c.values.astype(float)

    def restrict(self, indices: Sequence[int]) -> "Dataset":
        """Dataset reduced to the given columns, preserving order."""
        return Dataset([self.columns[i] for i in indices])


@dataclass(frozen=True)
class ParentConstraints:
    """Per-node possible-parent sets plus the derived inverse relation.

    ``pp[i]`` holds the nodes allowed to be direct parents of node ``i``;
    ``po`` is derived so that ``j in pp[i]`` iff ``i in po[j]``.
    """

    pp: tuple[NodeSubset, ...]
    indegree: int
    po: tuple[NodeSubset, ...] = field(init=False)
    feas_set: NodeSubset = field(init=False)

    def __post_init__(self) -> None:
        p = len(self.pp)
        if self.indegree < 1:
            raise StructureError("indegree must be a positive integer")
        full = (1 << p) - 1
        po = [0] * p
        for i, mask in enumerate(self.pp):
            if mask >> p:
                raise StructureError(f"pp[{i}] references a node index out of range")
            if (mask >> i) & 1:
                raise StructureError(f"node {i} lists itself as a possible parent")
            m = int(mask)
            while m:
                lsb = m & -m
                po[lsb.bit_length() - 1] |= 1 << i
                m ^= lsb
        object.__setattr__(self, "pp", tuple(NodeSubset(m) for m in self.pp))
        object.__setattr__(self, "po", tuple(NodeSubset(m) for m in po))
        object.__setattr__(self, "feas_set", NodeSubset(full))

    @property
    def n_nodes(self) -> int:
        return len(self.pp)

    @classmethod
    def complete(cls, p: int, indegree: int) -> "ParentConstraints":
        """Unconstrained limit: every node may parent every other node."""
        full = (1 << p) - 1
        return cls(tuple(NodeSubset(full & ~(1 << i)) for i in range(p)), indegree)


@dataclass(frozen=True)
class DagCheck:
    acyclic: bool
    order: tuple[int, ...] | None = None
    cycle: tuple[int, ...] | None = None


def validate_dag(parents: Sequence[int]) -> DagCheck:
    """Check a parent-set vector for acyclicity.

    Returns a topological order (parents before children, smallest index
    first among ties) or a witness cycle as a node sequence in which each
    node is a parent of the next.
    """
    p = len(parents)
    masks = []
    for i, m in enumerate(parents):
        m = int(m)
        if m < 0 or m >> p:
            raise StructureError(f"parents[{i}] references a node index out of range")
        masks.append(m)

    indeg = [m.bit_count() for m in masks]
    children = [0] * p
    for i, m in enumerate(masks):
        mm = m
        while mm:
            lsb = mm & -mm
            children[lsb.bit_length() - 1] |= 1 << i
            mm ^= lsb

    import heapq

    ready = [i for i in range(p) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        m = children[v]
        while m:
            lsb = m & -m
            c = lsb.bit_length() - 1
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
            m ^= lsb
    if len(order) == p:
        return DagCheck(True, order=tuple(order))

    # every remaining node has an unresolved parent; walk until we revisit
    remaining = {i for i in range(p) if indeg[i] > 0}
    v = min(remaining)
    seen: dict[int, int] = {}
    path: list[int] = []
    while v not in seen:
        seen[v] = len(path)
        path.append(v)
        m = masks[v]
        while m:
            lsb = m & -m
            u = lsb.bit_length() - 1
            if u in remaining:
                v = u
                break
            m ^= lsb
    cycle = path[seen[v]:]
    cycle.reverse()  # parent-of-next orientation
    return DagCheck(False, cycle=tuple(cycle))


def skeleton(parents: Sequence[int]) -> set[tuple[int, int]]:
    """Undirected edge set: ``{min(i,j), max(i,j)}`` for every edge j -> i."""
    edges: set[tuple[int, int]] = set()
    for child, m in enumerate(parents):
        m = int(m)
        while m:
            lsb = m & -m
            par = lsb.bit_length() - 1
            m ^= lsb
            edges.add((par, child) if par < child else (child, par))
    return edges


@dataclass(frozen=True)
class Network:
    """A DAG with per-node parent sets, local scores, and its build order.

    ``ordering`` is the generational construction order that produced the
    network (a valid topological order). ``total_score`` is the exact sum
    of ``local_scores``.
    """

    parents: tuple[NodeSubset, ...]
    local_scores: tuple[float, ...]
    ordering: tuple[int, ...]
    total_score: float

    @classmethod
    def build(
        cls,
        parents: Sequence[int],
        local_scores: Sequence[float],
        ordering: Sequence[int],
    ) -> "Network":
        check = validate_dag(parents)
        if not check.acyclic:
            raise StructureError(f"network contains a cycle: {check.cycle}")
        total = 0.0
        for s in local_scores:
            total += s
        return cls(
            parents=tuple(NodeSubset(m) for m in parents),
            local_scores=tuple(float(s) for s in local_scores),
            ordering=tuple(ordering),
            total_score=total,
        )

    @property
    def n_nodes(self) -> int:
        return len(self.parents)

    def edges(self) -> list[tuple[int, int]]:
        """Directed edges as (parent, child) pairs, sorted."""
        out = []
        for child, mask in enumerate(self.parents):
            for par in mask:
                out.append((par, child))
        out.sort()
        return out

    def skeleton(self) -> set[tuple[int, int]]:
        return skeleton(self.parents)

    def check_constraints(self, constraints: ParentConstraints) -> None:
        for i, mask in enumerate(self.parents):
            if not mask.issubset(constraints.pp[i]):
                raise StructureError(f"node {i} has parents outside its possible-parent set")
            if mask.count() > constraints.indegree:
                raise StructureError(f"node {i} exceeds the in-degree bound")

"""Loose paths, loose cycles, and canonical k-tuples over vertex set [0, n).

A k-tuple is a sorted tuple of k distinct integer labels. A loose structure
stores its vertex order; edges are the length-k segments of that order, with
consecutive segments meeting in exactly one shared (link) vertex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence

# Ranking operations refuse to run beyond this scale; exact wide-integer
# binomials stay cheap below it.
MAX_N = 10**6
MAX_K = 8

# Cycle validation reason codes.
WRONG_COVER = "WRONG_COVER"
WRONG_EDGE_COUNT = "WRONG_EDGE_COUNT"
BAD_LINK = "BAD_LINK"
OVERLAP = "OVERLAP"
DIVISIBILITY = "DIVISIBILITY"

# Path validation reason codes.
DUPLICATE_VERTEX = "DUPLICATE_VERTEX"
WRONG_LENGTH = "WRONG_LENGTH"


def as_ktuple(vertices: Iterable[int], k: int | None = None) -> tuple[int, ...]:
    """Normalize an iterable of labels to a sorted tuple of distinct ints."""
    t = tuple(sorted(int(v) for v in vertices))
    if len(set(t)) != len(t):
        raise ValueError(f"k-tuple has repeated labels: {t}")
    if k is not None and len(t) != k:
        raise ValueError(f"expected {k} labels, got {len(t)}: {t}")
    return t


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    code: str | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _accept() -> ValidationResult:
    return ValidationResult(True)


def _reject(code: str, detail: str = "") -> ValidationResult:
    return ValidationResult(False, code, detail)


@dataclass(frozen=True)
class LoosePath:
    """Ordered vertex sequence of m(k-1)+1 labels; edge s spans positions
    [(s-1)(k-1), s(k-1)] inclusive."""

    vertices: tuple[int, ...]
    k: int

    @property
    def m(self) -> int:
        return (len(self.vertices) - 1) // (self.k - 1)

    def edge_segments(self) -> list[tuple[int, ...]]:
        k = self.k
        return [
            tuple(self.vertices[s * (k - 1): s * (k - 1) + k])
            for s in range(self.m)
        ]

    def edges(self) -> list[tuple[int, ...]]:
        return [as_ktuple(seg) for seg in self.edge_segments()]


@dataclass(frozen=True)
class LooseCycle:
    """Cyclic vertex sequence of m(k-1) labels; edge s is the cyclic segment
    of k consecutive positions starting at (s-1)(k-1)."""

    vertices: tuple[int, ...]
    k: int

    @property
    def m(self) -> int:
        return len(self.vertices) // (self.k - 1)

    def edge_segments(self) -> list[tuple[int, ...]]:
        n, k = len(self.vertices), self.k
        segs = []
        for s in range(self.m):
            start = s * (k - 1)
            segs.append(tuple(self.vertices[(start + i) % n] for i in range(k)))
        return segs

    def edges(self) -> list[tuple[int, ...]]:
        return [tuple(sorted(seg)) for seg in self.edge_segments()]

    def edge_set(self) -> frozenset[tuple[int, ...]]:
        return frozenset(self.edges())

    def canonical(self) -> "LooseCycle":
        """Lexicographically least edge-aligned rotation or reflection.

        Two cycles are the same object up to rotating by whole edges and
        reversing orientation; this picks one representative.
        """
        seq = self.vertices
        n, k = len(seq), self.k
        rev = tuple(seq[(-i) % n] for i in range(n))  # reflection fixing seq[0]
        best = None
        for base in (seq, rev):
            for s in range(self.m):
                rot = base[s * (k - 1):] + base[: s * (k - 1)]
                if best is None or rot < best:
                    best = rot
        return LooseCycle(best, k)

    def to_json(self) -> str:
        return json.dumps(list(self.vertices))

    @classmethod
    def from_json(cls, text: str, k: int) -> "LooseCycle":
        return cls(tuple(json.loads(text)), k)


@dataclass(frozen=True)
class Hypergraph:
    n: int
    k: int
    edges: frozenset[tuple[int, ...]]

    def __post_init__(self) -> None:
        for e in self.edges:
            if len(e) != self.k or any(not (0 <= v < self.n) for v in e):
                raise ValueError(f"edge {e} not a k-set inside [0, {self.n})")

    def to_json(self) -> str:
        ordered = sorted(self.edges, key=tuple_rank)
        return json.dumps({"n": self.n, "k": self.k, "edges": [list(e) for e in ordered]})

    @classmethod
    def from_json(cls, text: str) -> "Hypergraph":
        d = json.loads(text)
        return cls(d["n"], d["k"], frozenset(as_ktuple(e, d["k"]) for e in d["edges"]))


def validate_loose_path(path: LoosePath | Sequence[int], k: int) -> ValidationResult:
    """Accept iff the vertex count is m(k-1)+1 for some m >= 1 and all labels
    are distinct."""
    if k < 3:
        raise ValueError("k must be >= 3")
    verts = tuple(path.vertices) if isinstance(path, LoosePath) else tuple(path)
    if len(verts) < k or (len(verts) - 1) % (k - 1) != 0:
        return _reject(WRONG_LENGTH, f"{len(verts)} vertices is not m(k-1)+1 for k={k}")
    if len(set(verts)) != len(verts):
        dup = next(v for v in verts if verts.count(v) > 1)
        return _reject(DUPLICATE_VERTEX, f"label {dup} repeats")
    return _accept()


def _ordered_edges(cycle: LooseCycle | Sequence[Sequence[int]], k: int) -> list[tuple[int, ...]]:
    if isinstance(cycle, LooseCycle):
        return cycle.edges()
    return [as_ktuple(e, k) for e in cycle]


def validate_loose_cycle(cycle: LooseCycle | Sequence[Sequence[int]], n: int, k: int) -> ValidationResult:
    """Accept iff the ordered edges form a loose Hamilton cycle of [0, n).

    `cycle` is either a LooseCycle (edges derived from its vertex order) or
    an ordered sequence of k-sets in cyclic order. Checks, in order:
    divisibility (k-1 | n), edge count n/(k-1), exact vertex cover of [0, n),
    consecutive edges sharing exactly one vertex, and all other pairs
    disjoint.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    if n % (k - 1) != 0:
        return _reject(DIVISIBILITY, f"(k-1)={k-1} does not divide n={n}")
    edges = _ordered_edges(cycle, k)
    m = n // (k - 1)
    if len(edges) != m:
        return _reject(WRONG_EDGE_COUNT, f"{len(edges)} edges, expected {m}")
    cover = set()
    for e in edges:
        cover.update(e)
    if cover != set(range(n)):
        return _reject(WRONG_COVER, f"covers {len(cover)} labels of [0, {n})")
    sets = [set(e) for e in edges]
    for s in range(m):
        inter = sets[s] & sets[(s + 1) % m]
        if len(inter) != 1:
            return _reject(BAD_LINK, f"edges {s} and {(s + 1) % m} share {len(inter)} vertices")
    for i in range(m):
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue  # cyclically consecutive
            if sets[i] & sets[j]:
                return _reject(OVERLAP, f"edges {i} and {j} intersect")
    return _accept()


def _check_rank_domain(k: int) -> None:
    if not (1 <= k <= MAX_K):
        raise ValueError(f"ranking supports 1 <= k <= {MAX_K}, got k={k}")


def tuple_rank(e: Sequence[int]) -> int:
    """Colexicographic rank of a sorted k-tuple: sum of C(e[i], i+1)."""
    t = tuple(e)
    _check_rank_domain(len(t))
    if any(t[i] >= t[i + 1] for i in range(len(t) - 1)) or t[0] < 0:
        raise ValueError(f"not a strictly increasing tuple: {t}")
    if t[-1] > MAX_N:
        raise ValueError(f"label {t[-1]} beyond supported scale {MAX_N}")
    return sum(comb(c, i + 1) for i, c in enumerate(t))


def _max_choose(rank: int, i: int) -> int:
    """Largest c with C(c, i) <= rank."""
    lo = i - 1  # C(i-1, i) = 0
    hi = i
    while comb(hi, i) <= rank:
        hi *= 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if comb(mid, i) <= rank:
            lo = mid
        else:
            hi = mid
    return lo


def tuple_unrank(rank: int, k: int) -> tuple[int, ...]:
    """Inverse of tuple_rank: the k-tuple at a colex rank."""
    _check_rank_domain(k)
    if rank < 0 or rank >= comb(MAX_N + 1, k):
        raise ValueError(f"rank {rank} out of supported range for k={k}")
    out = []
    rem = rank
    for i in range(k, 0, -1):
        c = _max_choose(rem, i)
        out.append(c)
        rem -= comb(c, i)
    if rem != 0:
        raise ValueError(f"rank {rank} not reachable")  # pragma: no cover
    return tuple(reversed(out))


def subset_rank(positions: Sequence[int]) -> int:
    """Colex rank of a sorted index subset (alias of tuple_rank)."""
    return tuple_rank(positions)


def subset_at(pool: Sequence[int], rank: int, size: int) -> tuple[int, ...]:
    """The size-subset of `pool` (sorted labels) at a colex rank over indices."""
    idx = tuple_unrank(rank, size)
    if idx[-1] >= len(pool):
        raise ValueError(f"rank {rank} out of range for pool of {len(pool)}")
    return tuple(pool[i] for i in idx)


def collision_report(cycles: Sequence[LooseCycle]) -> list[tuple[tuple[int, ...], list[int]]]:
    """All k-tuples used as an edge by two or more cycles, with the indices
    of the cycles using them. Empty list certifies edge-disjointness."""
    owners: dict[tuple[int, ...], list[int]] = {}
    for idx, c in enumerate(cycles):
        for e in set(c.edges()):
            owners.setdefault(e, []).append(idx)
    return sorted(
        (e, idxs) for e, idxs in owners.items() if len(idxs) >= 2
    )

"""Loose Hamilton cycle search in small k-uniform hypergraphs.

Built for closing instances: a designated junction vertex must sit at the
meeting point of the cycle's first and last edges, and those two edges must
carry distinct endpoint inheritances (one a-side, one b-side). The search is
a depth-first extension of a loose path with randomized tie-breaking, plus an
exhaustive variant used as a test oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .engine import SubRng
from .hypergraph import LooseCycle, as_ktuple

A_SIDE = "a"
B_SIDE = "b"
PLAIN = "plain"

DEFAULT_NODE_CAP = 10**7

FOUND = "found"
NO_CYCLE = "no_cycle"
CAP_EXCEEDED = "cap_exceeded"


class InstanceTooLarge(ValueError):
    """Exhaustive enumeration requested beyond its supported size."""


@dataclass(frozen=True)
class AuxInstance:
    """Closing search instance on `vertices` (which include the junction
    vertex `v0`). Edges map k-tuples to inheritance tags; every edge through
    v0 must carry at least one of a-side/b-side."""

    vertices: tuple[int, ...]
    k: int
    edges: dict[tuple[int, ...], frozenset[str]]
    v0: int
    node_cap: int = DEFAULT_NODE_CAP

    def __post_init__(self) -> None:
        vs = set(self.vertices)
        if self.v0 not in vs:
            raise ValueError(f"junction vertex {self.v0} missing from vertex set")
        for e, tags in self.edges.items():
            if len(e) != self.k or not set(e) <= vs:
                raise ValueError(f"edge {e} not a k-subset of the vertex set")
            if not tags <= {A_SIDE, B_SIDE, PLAIN}:
                raise ValueError(f"unknown tags {tags} on edge {e}")
            if self.v0 in e and not tags & {A_SIDE, B_SIDE}:
                raise ValueError(f"edge {e} through junction lacks an inheritance tag")
            if self.v0 not in e and tags != {PLAIN}:
                raise ValueError(f"edge {e} away from junction must be plain")

    def to_json(self) -> str:
        return json.dumps(
            {
                "vertices": list(self.vertices),
                "k": self.k,
                "v0": self.v0,
                "node_cap": self.node_cap,
                "edges": [[list(e), sorted(tags)] for e, tags in sorted(self.edges.items())],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "AuxInstance":
        d = json.loads(text)
        edges = {as_ktuple(e, d["k"]): frozenset(tags) for e, tags in d["edges"]}
        return cls(tuple(d["vertices"]), d["k"], edges, d["v0"], d.get("node_cap", DEFAULT_NODE_CAP))


def make_instance(
    vertices: Iterable[int],
    k: int,
    edges: dict[Sequence[int], Iterable[str]] | Iterable[tuple[Sequence[int], Iterable[str]]],
    v0: int,
    node_cap: int = DEFAULT_NODE_CAP,
) -> AuxInstance:
    items = edges.items() if isinstance(edges, dict) else edges
    norm = {as_ktuple(e, k): frozenset(tags) for e, tags in items}
    return AuxInstance(tuple(sorted(vertices)), k, norm, v0, node_cap)


@dataclass(frozen=True)
class SolverResult:
    outcome: str
    nodes: int
    cycle: LooseCycle | None = None
    a_edge: tuple[int, ...] | None = None
    b_edge: tuple[int, ...] | None = None
    count: int | None = None  # exhaustive search only

    @property
    def found(self) -> bool:
        return self.outcome == FOUND

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "nodes": self.nodes,
            "cycle": list(self.cycle.vertices) if self.cycle else None,
            "a_edge": list(self.a_edge) if self.a_edge else None,
            "b_edge": list(self.b_edge) if self.b_edge else None,
            "count": self.count,
        }


class _CapHit(Exception):
    pass


class _Search:
    def __init__(self, inst: AuxInstance, rng: SubRng | None, exhaustive: bool):
        self.inst = inst
        self.rng = rng
        self.exhaustive = exhaustive
        self.k = inst.k
        self.v0 = inst.v0
        self.nodes = 0
        self.m = len(inst.vertices) // (inst.k - 1)
        self.by_vertex: dict[int, list[tuple[int, ...]]] = {v: [] for v in inst.vertices}
        for e in inst.edges:
            for v in e:
                self.by_vertex[v].append(e)
        for v in self.by_vertex:
            self.by_vertex[v].sort()
        self.found: list[tuple[int, ...]] = []  # completed vertex sequences
        self.seen_edge_sets: set[frozenset[tuple[int, ...]]] = set()

    def _order(self, items: list) -> list:
        if self.rng is not None:
            items = list(items)
            self.rng.py.shuffle(items)
        return items

    def _tick(self) -> None:
        self.nodes += 1
        if not self.exhaustive and self.nodes > self.inst.node_cap:
            raise _CapHit

    def _coverable(self, used: set[int], link: int) -> bool:
        # Every unused vertex must fit into some edge whose other vertices are
        # still available (unused, the current link, or the junction).
        for u in self.inst.vertices:
            if u in used:
                continue
            ok = False
            for e in self.by_vertex[u]:
                if all(w not in used or w == link or w == self.v0 for w in e):
                    ok = True
                    break
            if not ok:
                return False
        return True

    def run(self) -> None:
        if len(self.inst.vertices) % (self.k - 1) != 0 or self.m < 3:
            return
        starts = [
            e for e in self.by_vertex[self.v0]
            if A_SIDE in self.inst.edges[e]
        ]
        for e1 in self._order(starts):
            self._tick()
            others = [v for v in e1 if v != self.v0]
            for link in self._order(others):
                interior = self._order([v for v in others if v != link])
                seq = [self.v0, *interior, link]
                if self._extend(seq, set(e1), link, 1, e1):
                    return

    def _extend(
        self,
        seq: list[int],
        used: set[int],
        link: int,
        depth: int,
        first_edge: tuple[int, ...],
    ) -> bool:
        if depth == self.m - 1:
            remaining = [v for v in self.inst.vertices if v not in used]
            last = as_ktuple(remaining + [link, self.v0])
            tags = self.inst.edges.get(last)
            if tags and B_SIDE in tags and last != first_edge:
                self._tick()
                closing_interior = self._order(remaining)
                full = tuple(seq + closing_interior)
                self.found.append(full)
                if self.exhaustive:
                    self.seen_edge_sets.add(frozenset(LooseCycle(full, self.k).edges()))
                    return False  # keep enumerating
                return True
            return False
        if depth % 4 == 0 and not self._coverable(used, link):
            return False
        for e in self._order(self.by_vertex[link]):
            if self.v0 in e:
                continue
            rest = [v for v in e if v != link]
            if any(v in used for v in rest):
                continue
            self._tick()
            for nxt in self._order(rest):
                interior = self._order([v for v in rest if v != nxt])
                if self._extend(seq + interior + [nxt], used | set(e), nxt, depth + 1, first_edge):
                    return True
        return False


def _result_from_sequence(inst: AuxInstance, seq: tuple[int, ...], nodes: int, count: int | None) -> SolverResult:
    k = inst.k
    cycle = LooseCycle(seq, k)
    a_edge = as_ktuple(seq[:k])
    b_edge = as_ktuple(list(seq[-(k - 1):]) + [inst.v0])
    _assert_sound(inst, cycle, a_edge, b_edge)
    return SolverResult(FOUND, nodes, cycle=cycle, a_edge=a_edge, b_edge=b_edge, count=count)


def _assert_sound(inst: AuxInstance, cycle: LooseCycle, a_edge, b_edge) -> None:
    segs = cycle.edges()
    assert len(set(cycle.vertices)) == len(cycle.vertices)
    assert set(cycle.vertices) == set(inst.vertices)
    for e in segs:
        assert e in inst.edges, f"segment {e} is not an instance edge"
    assert a_edge != b_edge
    assert inst.v0 in a_edge and inst.v0 in b_edge
    assert A_SIDE in inst.edges[a_edge] and B_SIDE in inst.edges[b_edge]
    for e in segs:
        if inst.v0 in e:
            assert e in (a_edge, b_edge), "junction vertex inside a middle edge"


def find_constrained_hc(inst: AuxInstance, rng: SubRng) -> SolverResult:
    """Randomized depth-first search for a loose Hamilton cycle with the
    junction vertex linking an a-side edge to a b-side edge. Candidate edges
    are tried in shuffled order, so the returned cycle is a random member of
    the feasible set (not exactly uniform). Honors the instance node cap."""
    search = _Search(inst, rng, exhaustive=False)
    try:
        search.run()
    except _CapHit:
        return SolverResult(CAP_EXCEEDED, search.nodes)
    if search.found:
        return _result_from_sequence(inst, search.found[0], search.nodes, None)
    return SolverResult(NO_CYCLE, search.nodes)


def brute_force_hc(inst: AuxInstance) -> SolverResult:
    """Exhaustive oracle: enumerates every feasible cycle (distinct edge sets,
    i.e. up to rotation and reflection) and returns the full count."""
    if len(inst.vertices) > 13:
        raise InstanceTooLarge(f"{len(inst.vertices)} vertices is beyond exhaustive range")
    search = _Search(inst, None, exhaustive=True)
    search.run()
    count = len(search.seen_edge_sets)
    if count:
        return _result_from_sequence(inst, search.found[0], search.nodes, count)
    return SolverResult(NO_CYCLE, search.nodes, count=0)

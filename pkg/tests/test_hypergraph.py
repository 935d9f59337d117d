import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loosepack.hypergraph import (
    BAD_LINK,
    DIVISIBILITY,
    DUPLICATE_VERTEX,
    WRONG_COVER,
    WRONG_EDGE_COUNT,
    WRONG_LENGTH,
    Hypergraph,
    LooseCycle,
    LoosePath,
    as_ktuple,
    collision_report,
    tuple_rank,
    tuple_unrank,
    validate_loose_cycle,
    validate_loose_path,
)


class TestValidateLooseCycle:
    def test_smallest_valid_instance(self):
        c = LooseCycle((0, 1, 2, 3, 4, 5), 3)
        assert c.edges() == [(0, 1, 2), (2, 3, 4), (0, 4, 5)]
        assert validate_loose_cycle(c, 6, 3).ok

    def test_bad_link_edge_list(self):
        res = validate_loose_cycle([(0, 1, 2), (2, 3, 4), (3, 4, 5)], 6, 3)
        assert res.code == BAD_LINK

    def test_divisibility(self):
        res = validate_loose_cycle(LooseCycle((0, 1, 2, 3, 4, 5), 3), 7, 3)
        assert res.code == DIVISIBILITY

    def test_wrong_edge_count(self):
        res = validate_loose_cycle([(0, 1, 2), (2, 3, 4)], 6, 3)
        assert res.code == WRONG_EDGE_COUNT

    def test_wrong_cover(self):
        res = validate_loose_cycle([(0, 1, 2), (2, 3, 4), (0, 4, 7)], 6, 3)
        assert res.code == WRONG_COVER

    def test_two_edge_cycle_rejected(self):
        # Degenerate 2-edge instance: the two edges meet twice, so the
        # one-vertex link rule fails.
        res = validate_loose_cycle(LooseCycle((0, 1, 2, 3), 3), 4, 3)
        assert res.code == BAD_LINK

    def test_k4_instance(self):
        c = LooseCycle(tuple(range(9)), 4)
        assert validate_loose_cycle(c, 9, 4).ok

    def test_link_multiset_is_exact(self):
        # Each accepted cycle has edge_count*(k-1) = n and each link vertex
        # appears in exactly one consecutive intersection.
        c = LooseCycle((3, 7, 1, 0, 5, 2, 6, 4), 3)
        assert validate_loose_cycle(c, 8, 3).ok
        assert c.m * 2 == 8
        sets = [set(e) for e in c.edges()]
        links = []
        for s in range(c.m):
            inter = sets[s] & sets[(s + 1) % c.m]
            links.extend(inter)
        assert len(links) == len(set(links)) == c.m

    def test_rejects_small_k(self):
        with pytest.raises(ValueError):
            validate_loose_cycle(LooseCycle((0, 1), 2), 2, 2)


class TestValidateLoosePath:
    def test_accept(self):
        res = validate_loose_path((4, 9, 2, 7, 5), 3)
        assert res.ok
        p = LoosePath((4, 9, 2, 7, 5), 3)
        assert p.m == 2
        assert p.edges() == [(2, 4, 9), (2, 5, 7)]

    def test_duplicate(self):
        assert validate_loose_path((4, 9, 2, 7, 4), 3).code == DUPLICATE_VERTEX

    def test_wrong_length(self):
        assert validate_loose_path((1, 2, 3, 4, 5, 6), 4).code == WRONG_LENGTH

    @given(st.integers(3, 6), st.integers(1, 5), st.randoms())
    def test_random_valid_paths(self, k, m, rnd):
        verts = rnd.sample(range(100), m * (k - 1) + 1)
        assert validate_loose_path(verts, k).ok


class TestRanking:
    def test_colex_minimum(self):
        assert tuple_rank((0, 1, 2)) == 0

    def test_rank_example(self):
        # Oracle: enumerate all 3-subsets of {0..3} in colex order and index.
        universe = sorted(
            itertools.combinations(range(4), 3), key=lambda t: tuple(reversed(t))
        )
        assert universe.index((1, 2, 3)) == 3
        assert tuple_rank((1, 2, 3)) == 3

    def test_roundtrip_fuzz(self):
        rnd = random.Random(7)
        for _ in range(1000):
            k = rnd.randint(1, 8)
            e = tuple(sorted(rnd.sample(range(10**6), k)))
            assert tuple_unrank(tuple_rank(e), k) == e

    def test_monotone_in_colex(self):
        tuples = list(itertools.combinations(range(8), 3))
        tuples.sort(key=lambda t: tuple(reversed(t)))  # colex order
        ranks = [tuple_rank(t) for t in tuples]
        assert ranks == list(range(len(tuples)))

    def test_rank_rejects_bad_input(self):
        with pytest.raises(ValueError):
            tuple_rank((2, 1, 0))
        with pytest.raises(ValueError):
            tuple_unrank(-1, 3)
        with pytest.raises(ValueError):
            tuple_rank(tuple(range(9)))  # k beyond supported scale

    @given(st.integers(0, 10**9))
    @settings(max_examples=200)
    def test_unrank_rank_identity(self, rank):
        assert tuple_rank(tuple_unrank(rank, 4)) == rank


class TestCollisionReport:
    def c(self, *verts):
        return LooseCycle(tuple(verts), 3)

    def test_shared_edge(self):
        a = self.c(1, 2, 3, 4, 5, 6)
        b = self.c(1, 2, 3, 6, 5, 4)  # shares {1,2,3}
        rep = collision_report([a, b])
        assert ((1, 2, 3), [0, 1]) in rep

    def test_disjoint(self):
        a = self.c(0, 1, 2, 3, 4, 5)
        b = self.c(6, 7, 8, 9, 10, 11)
        assert collision_report([a, b]) == []

    def test_three_way(self):
        a = self.c(1, 2, 3, 4, 5, 6)
        b = self.c(2, 1, 3, 7, 8, 9)   # {1,2,3} again
        d = self.c(3, 1, 2, 10, 11, 12)
        rep = collision_report([a, b, d])
        assert rep == [((1, 2, 3), [0, 1, 2])]

    def test_permutation_symmetry(self):
        rnd = random.Random(3)
        cycles = [
            self.c(*rnd.sample(range(20), 6)) for _ in range(5)
        ]
        base = {e for e, _ in collision_report(cycles)}
        for _ in range(5):
            perm = cycles[:]
            rnd.shuffle(perm)
            assert {e for e, _ in collision_report(perm)} == base


class TestCanonicalForm:
    def test_rotation_and_reflection_agree(self):
        c = LooseCycle((3, 7, 1, 0, 5, 2, 6, 4), 3)
        canon = c.canonical()
        # every edge-aligned rotation has the same canonical form
        for s in range(c.m):
            rot = c.vertices[s * 2:] + c.vertices[: s * 2]
            assert LooseCycle(rot, 3).canonical() == canon
        n = len(c.vertices)
        refl = tuple(c.vertices[(-i) % n] for i in range(n))
        assert LooseCycle(refl, 3).canonical() == canon
        assert canon.edge_set() == c.edge_set()

    def test_distinct_cycles_differ(self):
        a = LooseCycle((0, 1, 2, 3, 4, 5), 3)
        b = LooseCycle((0, 2, 1, 3, 4, 5), 3)
        assert a.canonical() != b.canonical()


class TestSerialization:
    def test_cycle_roundtrip(self):
        c = LooseCycle((5, 0, 3, 1, 4, 2), 3)
        assert LooseCycle.from_json(c.to_json(), 3) == c

    def test_hypergraph_sorted_by_rank(self):
        h = Hypergraph(6, 3, frozenset({(1, 2, 5), (0, 1, 2), (3, 4, 5)}))
        text = h.to_json()
        assert text.index("[0, 1, 2]") < text.index("[1, 2, 5]") < text.index("[3, 4, 5]")
        assert Hypergraph.from_json(text) == h

    def test_hypergraph_rejects_bad_edge(self):
        with pytest.raises(ValueError):
            Hypergraph(4, 3, frozenset({(0, 1, 9)}))


def test_as_ktuple_rejects_duplicates():
    with pytest.raises(ValueError):
        as_ktuple((1, 1, 2))

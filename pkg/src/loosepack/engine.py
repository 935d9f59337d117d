"""Randomized coloring queries over symbolic candidate sets of k-tuples.

One query colors every member of a candidate set independently with a single
probability. Candidate sets are never enumerated: the engine draws how many
members succeed (a binomial count) and then which ones (uniform distinct
ranks mapped through the set's combinatorial indexing). Every repetition is
appended to a ledger, and the probability mass any tuple has accumulated can
be replayed exactly from that ledger.

In coupled mode the engine additionally assigns, to every tuple that ever
succeeds, a uniform value consistent with the full sequence of queries that
touched it. A finished run then embeds into a one-shot binomial hypergraph
with edge probability p exactly when every colored tuple's uniform is <= p,
which is guaranteed whenever no tuple accumulated more than p of mass.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Iterable, Iterator, Sequence

import numpy as np

from .hypergraph import MAX_K, MAX_N, as_ktuple, subset_at, tuple_rank, tuple_unrank

# Probabilities below this switch mass replay to log-space accumulation.
_LOG_SPACE_CUTOFF = 1e-9
# Largest candidate set we are willing to materialize densely for sampling.
_DENSE_LIMIT = 5_000_000

_STREAM_COLOR = 0
_STREAM_SELECT = 1
_STREAM_SOLVER = 2


class CandidateSizeError(ValueError):
    """Candidate set too large for the requested operation."""


def _mix64(*parts: int) -> int:
    h = __import__("hashlib").blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode())
        h.update(b"/")
    return int.from_bytes(h.digest(), "big")


def _hash_unit(*parts: int) -> float:
    """Deterministic uniform in [0, 1) from integer parts (53-bit mantissa)."""
    return (_mix64(*parts) >> 11) * 2.0**-53


class SubRng:
    """Deterministic per-repetition randomness: a Python Random plus a lazily
    constructed numpy Generator from the same derived seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self.py = random.Random(seed)
        self._np: np.random.Generator | None = None

    @property
    def np(self) -> np.random.Generator:
        if self._np is None:
            self._np = np.random.Generator(np.random.PCG64(self.seed))
        return self._np


class SeedTree:
    """Derives independent sub-seeds from a master seed by position, so any
    (round, step, repetition) stream can be replayed in isolation."""

    def __init__(self, master: int):
        self.master = int(master)

    def seed_for(self, *path: int) -> int:
        return _mix64(self.master, *path)

    def rng(self, *path: int) -> SubRng:
        return SubRng(self.seed_for(*path))


@dataclass(frozen=True)
class CandidateSet:
    """Symbolic query domain. Variants:

    - "all": every k-subset of [0, n).
    - "extend": k-tuples containing `anchor` and avoiding `forbidden`.
    - "closing": k-tuples with at least k-1 vertices in `free` whose single
      outside vertex, if any, is `end_a` or `end_b`.
    """

    variant: str
    n: int
    k: int
    anchor: int | None = None
    forbidden: frozenset[int] = frozenset()
    free: tuple[int, ...] = ()
    end_a: int | None = None
    end_b: int | None = None

    @staticmethod
    def all_tuples(n: int, k: int) -> "CandidateSet":
        if not (3 <= k <= MAX_K and k <= n <= MAX_N):
            raise CandidateSizeError(f"unsupported scale n={n}, k={k}")
        return CandidateSet("all", n, k)

    @staticmethod
    def extend(n: int, k: int, anchor: int, forbidden: Iterable[int]) -> "CandidateSet":
        fb = frozenset(int(v) for v in forbidden)
        if anchor in fb:
            raise ValueError(f"anchor {anchor} is itself forbidden")
        if not (3 <= k <= MAX_K and k <= n <= MAX_N):
            raise CandidateSizeError(f"unsupported scale n={n}, k={k}")
        return CandidateSet("extend", n, k, anchor=int(anchor), forbidden=fb)

    @staticmethod
    def closing(n: int, k: int, free: Iterable[int], end_a: int, end_b: int) -> "CandidateSet":
        fr = tuple(sorted(int(v) for v in free))
        if end_a == end_b:
            raise ValueError("closing endpoints must differ")
        if end_a in fr or end_b in fr:
            raise ValueError("endpoints must lie outside the free set")
        if not (3 <= k <= MAX_K and k <= n <= MAX_N):
            raise CandidateSizeError(f"unsupported scale n={n}, k={k}")
        return CandidateSet("closing", n, k, free=fr, end_a=int(end_a), end_b=int(end_b))

    @cached_property
    def _allowed(self) -> tuple[int, ...]:
        # extend only: labels usable alongside the anchor
        banned = self.forbidden | {self.anchor}
        return tuple(v for v in range(self.n) if v not in banned)

    def size(self) -> int:
        if self.variant == "all":
            return comb(self.n, self.k)
        if self.variant == "extend":
            return comb(self.n - 1 - len(self.forbidden), self.k - 1)
        inner = len(self.free)
        return comb(inner, self.k) + 2 * comb(inner, self.k - 1)

    def contains(self, e: Sequence[int]) -> bool:
        t = tuple(e)
        if len(t) != self.k or any(not (0 <= v < self.n) for v in t):
            return False
        if self.variant == "all":
            return True
        if self.variant == "extend":
            s = set(t)
            return self.anchor in s and not (s & self.forbidden)
        s = set(t)
        outside = s - set(self.free)
        return len(outside) <= 1 and outside <= {self.end_a, self.end_b}

    def member_at(self, index: int) -> tuple[int, ...]:
        """The member at a rank in [0, size()); the indexing is a bijection."""
        if index < 0 or index >= self.size():
            raise ValueError(f"member index {index} out of range")
        if self.variant == "all":
            return tuple_unrank(index, self.k)
        if self.variant == "extend":
            rest = subset_at(self._allowed, index, self.k - 1)
            return as_ktuple(rest + (self.anchor,))
        inner = comb(len(self.free), self.k)
        wing = comb(len(self.free), self.k - 1)
        if index < inner:
            return subset_at(self.free, index, self.k)
        if index < inner + wing:
            rest = subset_at(self.free, index - inner, self.k - 1)
            return as_ktuple(rest + (self.end_a,))
        rest = subset_at(self.free, index - inner - wing, self.k - 1)
        return as_ktuple(rest + (self.end_b,))

    def members(self) -> Iterator[tuple[int, ...]]:
        """Enumerate all members (small sets only; used by oracles and tests)."""
        size = self.size()
        if size > _DENSE_LIMIT:
            raise CandidateSizeError(f"refusing to enumerate {size} members")
        return (self.member_at(i) for i in range(size))

    def to_dict(self) -> dict:
        d: dict = {"variant": self.variant, "n": self.n, "k": self.k}
        if self.variant == "extend":
            d["anchor"] = self.anchor
            d["forbidden"] = sorted(self.forbidden)
        elif self.variant == "closing":
            d["free"] = list(self.free)
            d["a"] = self.end_a
            d["b"] = self.end_b
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateSet":
        if d["variant"] == "all":
            return cls.all_tuples(d["n"], d["k"])
        if d["variant"] == "extend":
            return cls.extend(d["n"], d["k"], d["anchor"], d["forbidden"])
        return cls.closing(d["n"], d["k"], d["free"], d["a"], d["b"])


@dataclass(frozen=True)
class QueryRecord:
    round_i: int
    step_j: int
    rep_t: int
    cand: CandidateSet
    prob: float
    hits: tuple[tuple[int, ...], ...]

    def to_dict(self) -> dict:
        return {
            "i": self.round_i,
            "j": self.step_j,
            "t": self.rep_t,
            "cand": self.cand.to_dict(),
            "p": self.prob,
            "hits": [list(h) for h in self.hits],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QueryRecord":
        return cls(
            d["i"], d["j"], d["t"],
            CandidateSet.from_dict(d["cand"]),
            d["p"],
            tuple(as_ktuple(h) for h in d["hits"]),
        )


class QueryLedger:
    """Append-only log of every coloring repetition, strictly ordered by
    (round, step, repetition). Accumulated mass is a pure function of it."""

    def __init__(self, n: int, k: int):
        self.n = n
        self.k = k
        self.records: list[QueryRecord] = []
        self._t_counts: dict[tuple[int, int], int] = {}

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[QueryRecord]:
        return iter(self.records)

    def append(self, rec: QueryRecord) -> None:
        key = (rec.round_i, rec.step_j, rec.rep_t)
        if self.records:
            last = self.records[-1]
            if key <= (last.round_i, last.step_j, last.rep_t):
                raise ValueError(f"record {key} out of order")
        expected = self._t_counts.get((rec.round_i, rec.step_j), 0) + 1
        if rec.rep_t != expected:
            raise ValueError(
                f"repetition {rec.rep_t} for step {(rec.round_i, rec.step_j)}, expected {expected}"
            )
        self.records.append(rec)
        self._t_counts[(rec.round_i, rec.step_j)] = rec.rep_t

    @property
    def t_counts(self) -> dict[tuple[int, int], int]:
        return dict(self._t_counts)

    def colored(self) -> list[tuple[int, ...]]:
        """Distinct tuples that succeeded in at least one repetition."""
        seen: set[tuple[int, ...]] = set()
        for rec in self.records:
            seen.update(rec.hits)
        return sorted(seen)

    def colored_hypergraph(self):
        from .hypergraph import Hypergraph

        return Hypergraph(self.n, self.k, frozenset(self.colored()))

    def step_groups(self) -> list[tuple[int, int, CandidateSet, float, int]]:
        """(round, step, candidate, prob, repetition count) per step, in order."""
        groups: list[tuple[int, int, CandidateSet, float, int]] = []
        for rec in self.records:
            if groups and groups[-1][0] == rec.round_i and groups[-1][1] == rec.step_j:
                i, j, cand, prob, t = groups[-1]
                groups[-1] = (i, j, cand, prob, rec.rep_t)
            else:
                groups.append((rec.round_i, rec.step_j, rec.cand, rec.prob, rec.rep_t))
        return groups

    def replay_product(self, e: Sequence[int], upto: int | None = None) -> float:
        """Product of (1 - prob) over records whose candidate set contains e."""
        t = tuple(e)
        prod = 1.0
        for rec in self.records[:upto]:
            if rec.cand.contains(t):
                prod *= 1.0 - rec.prob
        return prod

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str, n: int, k: int) -> "QueryLedger":
        led = cls(n, k)
        for line in text.splitlines():
            if line.strip():
                led.append(QueryRecord.from_dict(json.loads(line)))
        return led


def replay_mass(ledger: QueryLedger, e: Sequence[int], upto: int | None = None) -> float:
    """Exact accumulated mass of tuple e: 1 - prod(1 - prob) over every record
    containing it. Switches to log-space when any touching probability is
    small enough to underflow a plain product."""
    t = tuple(e)
    probs = [rec.prob for rec in ledger.records[:upto] if rec.cand.contains(t)]
    if not probs:
        return 0.0
    if min(probs) < _LOG_SPACE_CUTOFF:
        return -math.expm1(math.fsum(math.log1p(-p) for p in probs))
    prod = 1.0
    for p in probs:
        prod *= 1.0 - p
    return 1.0 - prod


def _binomial_inverse(size: int, prob: float, py: random.Random) -> int:
    log_p0 = size * math.log1p(-prob)
    if log_p0 < -700.0:
        raise CandidateSizeError(
            f"binomial inversion underflow: size={size}, prob={prob}"
        )
    u = py.random()
    pmf = math.exp(log_p0)
    cdf = pmf
    x = 0
    ratio = prob / (1.0 - prob)
    mean = size * prob
    limit = int(mean + 20.0 * math.sqrt(mean) + 50.0)
    while u > cdf and x < limit:
        pmf *= ratio * (size - x) / (x + 1)
        x += 1
        cdf += pmf
    return x


def _binomial_count(size: int, prob: float, rng: SubRng) -> int:
    if prob <= 0.0 or size == 0:
        return 0
    if prob >= 1.0:
        return size
    if size <= 64:
        return sum(rng.py.random() < prob for _ in range(size))
    if size < 2**62:
        return int(rng.np.binomial(size, prob))
    return _binomial_inverse(size, prob, rng.py)


def _sample_ranks(size: int, count: int, rng: SubRng) -> list[int]:
    if count == 0:
        return []
    if 3 * count >= size:
        if size > _DENSE_LIMIT:
            raise CandidateSizeError(f"dense sampling from {size} members")
        return sorted(rng.py.sample(range(size), count))
    seen: set[int] = set()
    while len(seen) < count:
        seen.add(rng.py.randrange(size))
    return sorted(seen)


def sample_colored(cand: CandidateSet, prob: float, rng: SubRng) -> list[tuple[int, ...]]:
    """One coloring pass: each member of the candidate set independently with
    probability `prob`. Draws a binomial count, then that many distinct
    members by unranking; the set itself is never enumerated."""
    if not (0.0 <= prob <= 1.0):
        raise ValueError(f"probability {prob} outside [0, 1]")
    size = cand.size()
    count = _binomial_count(size, prob, rng)
    ranks = _sample_ranks(size, count, rng)
    return sorted(cand.member_at(i) for i in ranks)


class UniformSource:
    """Per-tuple uniforms keyed by colex rank, derived from a master seed.

    Tuples that succeed in a coupled run get a resolved value drawn from the
    conditional law of their uniform given the success, using the mass window
    [S_before, S_after) of the resolving query; the value never exceeds the
    tuple's final accumulated mass. Unresolved tuples fall back to the raw
    keyed-hash uniform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._resolved: dict[int, float] = {}

    def base_uniform(self, rank: int) -> float:
        return _hash_unit(self.seed, 0, rank)

    def is_resolved(self, rank: int) -> bool:
        return rank in self._resolved

    def resolve(self, rank: int, s_before: float, s_after: float) -> float:
        """Instantiate the uniform of a tuple succeeding with mass window
        [s_before, s_after): with probability s_before the success rode an
        independent coin and the uniform is below s_before; otherwise it
        lies inside the window. Floating arithmetic is arranged so the value
        never exceeds s_after."""
        u1 = _hash_unit(self.seed, 1, rank)
        u2 = _hash_unit(self.seed, 2, rank)
        if u1 < s_before:
            value = u2 * s_before
        else:
            value = s_after - (1.0 - u2) * (s_after - s_before)
        self._resolved[rank] = value
        return value

    def value(self, rank: int) -> float:
        return self._resolved.get(rank, self.base_uniform(rank))

    def resolved_items(self) -> list[tuple[int, float]]:
        return sorted(self._resolved.items())


def coupled_query(
    cand: CandidateSet,
    prob: float,
    source: UniformSource,
    rng: SubRng,
    ledger: QueryLedger,
    round_i: int,
    step_j: int,
    rep_t: int,
) -> list[tuple[int, ...]]:
    """One coloring pass that also maintains the embedding bookkeeping.

    Successes are drawn exactly as in sample_colored (so each member succeeds
    with probability `prob`, independently of the past); each first-time
    success resolves the tuple's uniform against its replayed mass window.
    The record is appended after resolution so the window covers only prior
    queries.
    """
    hits = sample_colored(cand, prob, rng)
    for e in hits:
        rank = tuple_rank(e)
        if not source.is_resolved(rank):
            prod = ledger.replay_product(e)
            s_before = 1.0 - prod
            s_after = 1.0 - prod * (1.0 - prob)
            source.resolve(rank, s_before, s_after)
    ledger.append(QueryRecord(round_i, step_j, rep_t, cand, prob, tuple(hits)))
    return hits


def plain_query(
    cand: CandidateSet,
    prob: float,
    rng: SubRng,
    ledger: QueryLedger,
    round_i: int,
    step_j: int,
    rep_t: int,
) -> list[tuple[int, ...]]:
    hits = sample_colored(cand, prob, rng)
    ledger.append(QueryRecord(round_i, step_j, rep_t, cand, prob, tuple(hits)))
    return hits


def run_trials(
    cand: CandidateSet,
    prob: float,
    cap: int,
    seeds: SeedTree,
    ledger: QueryLedger,
    round_i: int,
    step_j: int,
    source: UniformSource | None = None,
) -> tuple[int, list[tuple[int, ...]]]:
    """Repeat coloring passes until one succeeds or `cap` passes are spent.

    Returns (T, hits); empty hits means the step failed after exactly T = cap
    logged repetitions. cap = 0 fails immediately with no records (a desk
    escape hatch for forced failures).
    """
    cap = int(cap)
    for t in range(1, cap + 1):
        rng = seeds.rng(round_i, step_j, t, _STREAM_COLOR)
        if source is not None:
            hits = coupled_query(cand, prob, source, rng, ledger, round_i, step_j, t)
        else:
            hits = plain_query(cand, prob, rng, ledger, round_i, step_j, t)
        if hits:
            return t, hits
    return cap, []


def final_embedding_check(ledger: QueryLedger, source: UniformSource, p: float) -> bool:
    """True iff every tuple ever colored has uniform value <= p, i.e. the run
    embeds into the one-shot hypergraph keeping e iff U_e <= p."""
    return witness_embedding_failure(ledger, source, p) is None


def witness_embedding_failure(
    ledger: QueryLedger, source: UniformSource, p: float
) -> tuple[tuple[int, ...], float] | None:
    """First colored tuple (by colex order) whose uniform exceeds p, or None."""
    for e in ledger.colored():
        u = source.value(tuple_rank(e))
        if u > p:
            return e, u
    return None


class IncrementalMassTracker:
    """Dense oracle for accumulated mass: applies S <- S + prob * (1 - S) to
    every member of every observed query. Enumerates candidate sets, so it is
    only usable at small scale; kept deliberately independent of replay."""

    def __init__(self, n: int, k: int):
        self.n = n
        self.k = k
        self.s: dict[tuple[int, ...], float] = {}

    def observe(self, rec: QueryRecord) -> None:
        for e in rec.cand.members():
            s = self.s.get(e, 0.0)
            self.s[e] = s + rec.prob * (1.0 - s)

    def mass(self, e: Sequence[int]) -> float:
        return self.s.get(tuple(e), 0.0)


class SprinkleEngine:
    """Bundles one run's seeded randomness, ledger, and uniform source."""

    def __init__(self, n: int, k: int, seed: int, coupled: bool = True):
        self.n = n
        self.k = k
        self.coupled = coupled
        self.seeds = SeedTree(seed)
        self.source = UniformSource(self.seeds.seed_for(-1))
        self.ledger = QueryLedger(n, k)

    def run_trials(self, cand: CandidateSet, prob: float, cap: int, round_i: int, step_j: int):
        return run_trials(
            cand, prob, cap, self.seeds, self.ledger, round_i, step_j,
            source=self.source if self.coupled else None,
        )

    def query_once(self, cand: CandidateSet, prob: float, round_i: int, step_j: int, rep_t: int):
        rng = self.seeds.rng(round_i, step_j, rep_t, _STREAM_COLOR)
        if self.coupled:
            return coupled_query(cand, prob, self.source, rng, self.ledger, round_i, step_j, rep_t)
        return plain_query(cand, prob, rng, self.ledger, round_i, step_j, rep_t)

    def selection_rng(self, round_i: int, step_j: int) -> SubRng:
        return self.seeds.rng(round_i, step_j, 0, _STREAM_SELECT)

    def solver_rng(self, round_i: int, rep_t: int) -> SubRng:
        return self.seeds.rng(round_i, 0, rep_t, _STREAM_SOLVER)

    def final_check(self, p: float) -> bool:
        return final_embedding_check(self.ledger, self.source, p)

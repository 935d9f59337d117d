"""Schedule derivation and round execution for loose Hamilton cycle packing.

A run consists of N independent rounds against one query ledger. Each round
grows a loose path edge by edge with coloring queries, then closes it into a
spanning cycle through a small auxiliary hypergraph on the leftover vertices
plus one junction vertex. Failures at any step are data, not errors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from math import ceil, comb, log
from typing import Sequence

from .engine import CandidateSet, SprinkleEngine
from .hypergraph import LooseCycle, LoosePath, validate_loose_cycle, validate_loose_path
from .solver import (
    A_SIDE,
    B_SIDE,
    CAP_EXCEEDED,
    DEFAULT_NODE_CAP,
    PLAIN,
    AuxInstance,
    find_constrained_hc,
)

# step-failure causes
NO_COLOR = "NO_COLOR"
NO_CYCLE_CAUSE = "NO_CYCLE"
SOLVER_CAP = "SOLVER_CAP"

OVERRIDE_KEYS = ("omega_n", "q", "alpha_n", "A", "r", "N")


class ParamError(ValueError):
    """A parameter precondition failed; carries the offending field name."""

    def __init__(self, fld: str, message: str):
        super().__init__(message)
        self.field = fld


@dataclass(frozen=True)
class Params:
    """All derived run constants. `A[j-2]` is the repetition cap of path step
    j for j in 2..K; the leftover vertex count alpha_n satisfies
    n - K(k-1) - 1 = alpha_n exactly."""

    n: int
    k: int
    p: float
    epsilon: float
    omega_n: float
    q: float
    alpha_n: int
    K: int
    A: tuple[int, ...]
    r: float
    N: int
    overridden: tuple[str, ...] = ()
    desk_scale: bool = False

    @property
    def step1_prob(self) -> float:
        return float(self.n) ** (-self.k)

    @property
    def step1_cap(self) -> int:
        return ceil(max(0.0, self.omega_n))

    @property
    def closing_cap(self) -> int:
        return ceil(max(0.0, self.omega_n))

    @property
    def aux_edge_count(self) -> int:
        return (self.alpha_n + 1) // (self.k - 1)

    def a_cap(self, j: int) -> int:
        if not 2 <= j <= self.K:
            raise ValueError(f"step {j} outside 2..{self.K}")
        return self.A[j - 2]

    def extend_pool(self, j: int) -> int:
        """Unused-vertex count available to step j's extension tuples."""
        return self.n - (j - 1) * (self.k - 1) - 1

    def to_dict(self) -> dict:
        return {
            "n": self.n, "k": self.k, "p": self.p, "epsilon": self.epsilon,
            "omega_n": self.omega_n, "q": self.q, "alpha_n": self.alpha_n,
            "K": self.K, "A": list(self.A), "r": self.r, "N": self.N,
            "overridden": list(self.overridden), "desk_scale": self.desk_scale,
        }


def _search_alpha(n: int, k: int, target: float) -> int:
    """Smallest integer >= target with 2(k-1) | (alpha+1) and
    (k-1) | (n-1-alpha), scanned over a bounded window."""
    start = max(1, ceil(target))
    period = 2 * (k - 1)
    for alpha in range(start, start + 2 * (k - 1) ** 2 + 1):
        if (alpha + 1) % period == 0 and (n - 1 - alpha) % (k - 1) == 0:
            return alpha
    raise ParamError(
        "alpha_n",
        f"no admissible leftover count in [{start}, {start + 2 * (k - 1) ** 2}] for n={n}, k={k}",
    )


def derive_params(
    n: int,
    k: int,
    p: float,
    epsilon: float,
    overrides: dict | None = None,
    desk_scale: bool = False,
) -> Params:
    """Derive the full schedule from (n, k, p, epsilon).

    Defaults: omega_n = (ln n)^(1/6k); q = 1/(n^(k-1) ln n); alpha_n the
    smallest admissible integer >= n/(omega_n^3 ln n); K from the leftover
    identity; A_j = ceil(2 ln n / (q C(n-(j-1)(k-1)-1, k-1)));
    r = omega_n ln n / alpha_n^(k-1) clipped to 1; N = floor((1-eps) C(n,k) p
    (k-1)/n). Any entry of `overrides` replaces its default. A derived (not
    overridden) probability >= 1 is refused unless desk_scale is set.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(OVERRIDE_KEYS)
    if unknown:
        raise ParamError(sorted(unknown)[0], f"unknown override(s): {sorted(unknown)}")
    if k < 3:
        raise ParamError("k", f"k must be >= 3, got {k}")
    if n % (k - 1) != 0:
        raise ParamError("n", f"(k-1)={k - 1} must divide n={n}")
    if not 0.0 < p < 1.0:
        raise ParamError("p", f"p must lie in (0, 1), got {p}")
    if not 0.0 < epsilon < 0.5:
        raise ParamError("epsilon", f"epsilon must lie in (0, 1/2), got {epsilon}")

    ln_n = log(n)
    omega_n = float(overrides.get("omega_n", ln_n ** (1.0 / (6 * k))))
    if omega_n < 0.0 or (omega_n < 1.0 and "omega_n" not in overrides):
        raise ParamError("omega_n", f"omega_n must be >= 1, got {omega_n}")

    if "q" in overrides:
        q = float(overrides["q"])
        if not 0.0 <= q <= 1.0:
            raise ParamError("q", f"q override must lie in [0, 1], got {q}")
    else:
        q = 1.0 / (n ** (k - 1) * ln_n)
        if q >= 1.0 and not desk_scale:
            raise ParamError("q", f"derived q={q} >= 1; pass desk_scale or override")

    if "alpha_n" in overrides:
        alpha_n = int(overrides["alpha_n"])
        if (n - 1 - alpha_n) % (k - 1) != 0:
            raise ParamError(
                "alpha_n",
                f"(k-1) must divide n-1-alpha_n; alpha_n={alpha_n} breaks the leftover identity",
            )
    else:
        alpha_n = _search_alpha(n, k, n / (omega_n**3 * ln_n))
    if not 1 <= alpha_n <= n - k:
        raise ParamError("alpha_n", f"alpha_n={alpha_n} leaves no room for the path")
    K = (n - 1 - alpha_n) // (k - 1)
    assert n - K * (k - 1) - 1 == alpha_n

    if "A" in overrides:
        raw = overrides["A"]
        if isinstance(raw, int):
            A = tuple([raw] * max(0, K - 1))
        else:
            A = tuple(int(a) for a in raw)
            if len(A) != K - 1:
                raise ParamError("A", f"schedule needs {K - 1} caps for steps 2..{K}, got {len(A)}")
        if any(a < 1 for a in A):
            raise ParamError("A", "repetition caps must be >= 1")
    else:
        A = tuple(
            max(1, ceil(2.0 * ln_n / (q * comb(n - (j - 1) * (k - 1) - 1, k - 1))))
            for j in range(2, K + 1)
        )

    if "r" in overrides:
        r = float(overrides["r"])
        if not 0.0 <= r <= 1.0:
            raise ParamError("r", f"r override must lie in [0, 1], got {r}")
    else:
        raw_r = omega_n * ln_n / float(alpha_n) ** (k - 1)
        if raw_r >= 1.0 and not desk_scale:
            raise ParamError("r", f"derived r={raw_r} >= 1; pass desk_scale or override")
        r = min(raw_r, 1.0)

    if "N" in overrides:
        N = int(overrides["N"])
        if N < 0:
            raise ParamError("N", f"round count must be >= 0, got {N}")
    else:
        N = math.floor((1.0 - epsilon) * comb(n, k) * p * (k - 1) / n)

    return Params(
        n=n, k=k, p=p, epsilon=epsilon, omega_n=omega_n, q=q,
        alpha_n=alpha_n, K=K, A=A, r=r, N=N,
        overridden=tuple(sorted(overrides)), desk_scale=desk_scale,
    )


@dataclass(frozen=True)
class AuditReport:
    """Closed-form failure and collision bounds for one schedule."""

    n: int
    k: int
    step_fail_sum: float          # sum over steps 2..K with the actual caps
    step_fail_sum_exact: float    # same with the pre-ceiling cap formula
    exact_summand_max: float      # largest per-step term of the exact sum
    exact_summand_min: float      # smallest per-step term of the exact sum
    step1_fail_bound: float
    closing_fail_bound: float
    round_fail_bound: float
    p_prime: float
    p_prime_capped: float
    collision_estimate: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def lines(self) -> list[str]:
        return [
            f"path-step failure sum (actual caps)   {self.step_fail_sum:.6g}",
            f"path-step failure sum (exact caps)    {self.step_fail_sum_exact:.6g}",
            f"largest exact per-step term           {self.exact_summand_max:.6g}",
            f"step-1 failure bound                  {self.step1_fail_bound:.6g}",
            f"closing failure bound                 {self.closing_fail_bound:.6g}",
            f"per-round failure bound               {self.round_fail_bound:.6g}",
            f"per-round coloring bound p'           {self.p_prime:.6g}"
            + ("" if self.p_prime <= 1 else f" (capped to {self.p_prime_capped:.6g})"),
            f"cross-round collision estimate        {self.collision_estimate:.6g}",
        ]


def audit_params(params: Params) -> AuditReport:
    """Evaluate the schedule's failure bounds and the union-bound collision
    estimate, both with the actual caps and with the exact (pre-ceiling) cap
    formula whose per-step terms are n^-2 by construction."""
    n, k, q = params.n, params.k, params.q
    ln_n = log(n)
    s_actual = 0.0
    s_exact = 0.0
    summand_max = 0.0
    summand_min = math.inf
    for j in range(2, params.K + 1):
        pool = comb(n - (j - 1) * (k - 1) - 1, k - 1)
        s_actual += math.exp(-q * params.a_cap(j) * pool)
        a_exact = 2.0 * ln_n / (q * pool)
        term = math.exp(-q * a_exact * pool)
        s_exact += term
        summand_max = max(summand_max, term)
        summand_min = min(summand_min, term)
    if params.K < 2:
        summand_min = 0.0
    step1 = math.exp(-params.step1_prob * comb(n, k) * params.omega_n)
    closing = (1.0 - 1.0 / (2 * k)) ** params.closing_cap
    max_a = max(params.A) if params.A else 0
    p_prime = params.omega_n * params.step1_prob + max(q * max_a, params.r * params.omega_n)
    p_capped = min(p_prime, 1.0)
    estimate = comb(n, k) * comb(params.N, 2) * p_capped**2
    return AuditReport(
        n=n, k=k,
        step_fail_sum=s_actual,
        step_fail_sum_exact=s_exact,
        exact_summand_max=summand_max,
        exact_summand_min=summand_min,
        step1_fail_bound=step1,
        closing_fail_bound=closing,
        round_fail_bound=min(1.0, step1 + s_actual + closing),
        p_prime=p_prime,
        p_prime_capped=p_capped,
        collision_estimate=estimate,
    )


def split_regime(n: int, k: int, p: float) -> tuple[int, float]:
    """Split a large edge probability into M independent slices; packing each
    slice and concatenating the outputs handles the general regime."""
    window = log(n) ** (2 * k + 2) / n ** (k - 1)
    if p <= 2.0 * window:
        return 1, p
    m = math.floor(p / window)
    return m, p / m


@dataclass(frozen=True)
class RoundOutcome:
    index: int
    cycle: LooseCycle | None
    failed_step: int | None
    cause: str | None
    t_values: dict[int, int]
    solver_nodes: tuple[int, ...] = ()

    @property
    def success(self) -> bool:
        return self.cycle is not None

    def to_dict(self) -> dict:
        return {
            "round": self.index,
            "success": self.success,
            "cycle": list(self.cycle.vertices) if self.cycle else None,
            "failed_step": self.failed_step,
            "cause": self.cause,
            "t_values": {str(j): t for j, t in sorted(self.t_values.items())},
            "solver_nodes": list(self.solver_nodes),
        }


@dataclass(frozen=True)
class ClosingFailure:
    cause: str
    attempts: int
    solver_nodes: tuple[int, ...]


def _build_aux(
    colored: set[tuple[int, ...]],
    free: Sequence[int],
    end_a: int,
    end_b: int,
    n: int,
    k: int,
    node_cap: int,
) -> AuxInstance:
    v0 = n  # reserved junction label, outside [0, n)
    free_set = set(free)
    edges: dict[tuple[int, ...], set[str]] = {}
    for e in colored:
        s = set(e)
        if s <= free_set:
            edges.setdefault(e, set()).add(PLAIN)
        elif end_a in s:
            aux = tuple(sorted((s - {end_a}) | {v0}))
            edges.setdefault(aux, set()).add(A_SIDE)
        elif end_b in s:
            aux = tuple(sorted((s - {end_b}) | {v0}))
            edges.setdefault(aux, set()).add(B_SIDE)
        else:  # pragma: no cover - closing membership forbids this
            raise AssertionError(f"colored tuple {e} outside the closing set")
    frozen = {e: frozenset(tags) for e, tags in edges.items()}
    return AuxInstance(tuple(sorted(free) + [v0]), k, frozen, v0, node_cap)


def close_round(
    path: Sequence[int],
    params: Params,
    engine: SprinkleEngine,
    round_i: int,
    solver_cap: int = DEFAULT_NODE_CAP,
) -> LooseCycle | ClosingFailure:
    """Close a full-length loose path into a spanning cycle.

    Repeats up to the closing cap: one coloring pass over the closing set at
    probability r (colored tuples accumulate across passes), then a solver
    call on the auxiliary hypergraph whose junction vertex stands in for the
    path. On success the two junction edges are swapped for their colored
    preimages and the path is spliced between them.
    """
    n, k = params.n, params.k
    end_a, end_b = path[0], path[-1]
    free = sorted(set(range(n)) - set(path))
    if len(free) != params.alpha_n:
        raise ValueError(f"path leaves {len(free)} vertices, expected {params.alpha_n}")
    cand = CandidateSet.closing(n, k, free, end_a, end_b)
    step = params.K + 1
    colored: set[tuple[int, ...]] = set()
    nodes: list[int] = []
    for t in range(1, params.closing_cap + 1):
        colored.update(engine.query_once(cand, params.r, round_i, step, t))
        inst = _build_aux(colored, free, end_a, end_b, n, k, solver_cap)
        result = find_constrained_hc(inst, engine.solver_rng(round_i, t))
        nodes.append(result.nodes)
        if result.found:
            seq = result.cycle.vertices  # starts at the junction vertex
            assert seq[0] == n
            full = tuple(reversed(path)) + seq[1:]
            cycle = LooseCycle(full, k)
            check = validate_loose_cycle(cycle, n, k)
            assert check.ok, f"spliced cycle invalid: {check.code} {check.detail}"
            return cycle
        if result.outcome == CAP_EXCEEDED:
            return ClosingFailure(SOLVER_CAP, t, tuple(nodes))
    return ClosingFailure(NO_CYCLE_CAUSE, params.closing_cap, tuple(nodes))


def run_round(
    round_i: int,
    params: Params,
    engine: SprinkleEngine,
    solver_cap: int = DEFAULT_NODE_CAP,
) -> RoundOutcome:
    """Execute one round: seed an edge, extend K-1 times, close. Any step
    failure ends the round; its queries stay in the ledger regardless."""
    n, k = params.n, params.k
    t_values: dict[int, int] = {}

    cand = CandidateSet.all_tuples(n, k)
    t1, hits = engine.run_trials(cand, params.step1_prob, params.step1_cap, round_i, 1)
    t_values[1] = t1
    if not hits:
        return RoundOutcome(round_i, None, 1, NO_COLOR, t_values)
    sel = engine.selection_rng(round_i, 1)
    first = list(sel.py.choice(hits))
    sel.py.shuffle(first)
    path: list[int] = first

    for j in range(2, params.K + 1):
        anchor = path[-1]
        forbidden = frozenset(path[:-1])
        cand = CandidateSet.extend(n, k, anchor, forbidden)
        tj, hits = engine.run_trials(cand, params.q, params.a_cap(j), round_i, j)
        t_values[j] = tj
        if not hits:
            return RoundOutcome(round_i, None, j, NO_COLOR, t_values)
        sel = engine.selection_rng(round_i, j)
        chosen = sel.py.choice(hits)
        assert anchor in chosen and not (set(chosen) & forbidden)
        fresh = [v for v in chosen if v != anchor]
        sel.py.shuffle(fresh)
        path.extend(fresh)
        assert validate_loose_path(path, k).ok and (len(path) - 1) // (k - 1) == j

    closed = close_round(path, params, engine, round_i, solver_cap)
    t_values[params.K + 1] = engine.ledger.t_counts.get((round_i, params.K + 1), 0)
    if isinstance(closed, ClosingFailure):
        return RoundOutcome(round_i, None, params.K + 1, closed.cause, t_values, closed.solver_nodes)
    assert _contains_path(closed, path, k)
    return RoundOutcome(round_i, closed, None, None, t_values)


def _contains_path(cycle: LooseCycle, path: Sequence[int], k: int) -> bool:
    doubled = cycle.vertices * 2
    n = len(cycle.vertices)
    for orient in (tuple(path), tuple(reversed(path))):
        for start in range(n):
            if doubled[start:start + len(orient)] == orient:
                return True
    return False


@dataclass
class PackResult:
    params: Params
    seed: int
    cycles: list[LooseCycle]
    outcomes: list[RoundOutcome]
    ledger: "QueryLedger"
    source: "UniformSource"

    def outcomes_jsonl(self) -> str:
        return "".join(json.dumps(o.to_dict(), sort_keys=True) + "\n" for o in self.outcomes)


def pack(
    params: Params,
    seed: int,
    solver_cap: int = DEFAULT_NODE_CAP,
    coupled: bool = True,
) -> PackResult:
    """Run all N rounds sequentially on one ledger. Returns every successful
    cycle and every outcome; edge-disjointness is measured afterwards, never
    enforced during the run."""
    engine = SprinkleEngine(params.n, params.k, seed, coupled=coupled)
    cycles: list[LooseCycle] = []
    outcomes: list[RoundOutcome] = []
    for i in range(1, params.N + 1):
        outcome = run_round(i, params, engine, solver_cap)
        outcomes.append(outcome)
        if outcome.success:
            cycles.append(outcome.cycle)
    return PackResult(params, seed, cycles, outcomes, engine.ledger, engine.source)

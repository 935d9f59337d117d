"""Checks of every property a finished run is supposed to satisfy.

All checks are read-only over the finalized ledger, cycles, and uniform
source, and are deterministic given their inputs (sampling takes an explicit
seed).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

from .engine import QueryLedger, UniformSource, replay_mass, witness_embedding_failure
from .hypergraph import (
    LooseCycle,
    ValidationResult,
    collision_report,
    tuple_rank,
    tuple_unrank,
    validate_loose_cycle,
)
from .packer import Params, audit_params


@dataclass(frozen=True)
class PackingSection:
    cycle_results: tuple[ValidationResult, ...]
    all_valid: bool
    collisions: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    collision_count: int

    def to_dict(self) -> dict:
        return {
            "cycles_checked": len(self.cycle_results),
            "all_valid": self.all_valid,
            "invalid": [
                {"index": i, "code": r.code, "detail": r.detail}
                for i, r in enumerate(self.cycle_results) if not r.ok
            ],
            "collision_count": self.collision_count,
            "collisions": [
                {"tuple": list(e), "cycles": list(idxs)} for e, idxs in self.collisions
            ],
        }


def verify_packing(cycles: Sequence[LooseCycle], n: int, k: int) -> PackingSection:
    """Validate every cycle and list every tuple used by two or more of them.
    Collisions are reported, not failed: the run is measured as it happened."""
    results = tuple(validate_loose_cycle(c, n, k) for c in cycles)
    coll = tuple((e, tuple(idxs)) for e, idxs in collision_report(list(cycles)))
    return PackingSection(
        cycle_results=results,
        all_valid=all(r.ok for r in results),
        collisions=coll,
        collision_count=len(coll),
    )


@dataclass(frozen=True)
class MassSection:
    colored_count: int
    max_qe: float
    argmax: tuple[int, ...] | None
    mean_qe_sample: float
    mean_qe_linearized: float
    violations: tuple[tuple[tuple[int, ...], float], ...]  # tuples with Q_e > p
    coupling_ok: bool  # every colored tuple has U_e <= Q_e
    window_low: float
    window_high: float
    mean_inside_window: bool
    sample_size: int
    spot_check_max_err: float

    def to_dict(self) -> dict:
        return {
            "colored_count": self.colored_count,
            "max_Qe": self.max_qe,
            "argmax": list(self.argmax) if self.argmax else None,
            "mean_Qe_sample": self.mean_qe_sample,
            "mean_Qe_linearized": self.mean_qe_linearized,
            "violations": [{"tuple": list(e), "Qe": q} for e, q in self.violations],
            "coupling_ok": self.coupling_ok,
            "window": [self.window_low, self.window_high],
            "mean_inside_window": self.mean_inside_window,
            "sample_size": self.sample_size,
            "spot_check_max_err": self.spot_check_max_err,
        }


def closed_form_mass(groups, e: Sequence[int]) -> float:
    """Accumulated mass from per-step groups: 1 - prod (1-prob)^T over the
    steps whose candidate set contains e. Equals replay up to re-association."""
    t = tuple(e)
    prod = 1.0
    for _, _, cand, prob, reps in groups:
        if cand.contains(t):
            prod *= (1.0 - prob) ** reps
    return 1.0 - prod


def linearized_mass(groups, e: Sequence[int]) -> float:
    """First-order mass: sum of prob * T over containing steps."""
    t = tuple(e)
    return sum(prob * reps for _, _, cand, prob, reps in groups if cand.contains(t))


def verify_mass(
    ledger: QueryLedger,
    params: Params,
    source: UniformSource | None = None,
    sample_size: int = 200,
    seed: int = 0,
) -> MassSection:
    """Replay the mass of every colored tuple, plus a uniform sample of tuples
    never touched by an extension query (their mass has the grouped closed
    form). Reports the maximum, the sample mean against the expectation window
    [p(1-2e), p(1-e/2)] (diagnostic at desk scale), any tuples over p, and the
    exact coupling comparison U_e <= Q_e for colored tuples."""
    n, k, p = params.n, params.k, params.p
    groups = ledger.step_groups()
    extend_groups = [g for g in groups if g[2].variant == "extend"]

    colored = ledger.colored()
    masses: dict[tuple[int, ...], float] = {e: replay_mass(ledger, e) for e in colored}

    coupling_ok = True
    if source is not None:
        for e in colored:
            if source.value(tuple_rank(e)) > masses[e]:
                coupling_ok = False
                break

    rng = random.Random(seed)
    total = comb(n, k)
    sample: list[tuple[int, ...]] = []
    spot_err = 0.0
    attempts = 0
    while len(sample) < sample_size and attempts < 50 * sample_size:
        attempts += 1
        e = tuple_unrank(rng.randrange(total), k)
        if any(cand.contains(e) for _, _, cand, _, _ in extend_groups):
            continue
        sample.append(e)
        q_closed = closed_form_mass(groups, e)
        if len(sample) <= 10:
            spot_err = max(spot_err, abs(q_closed - replay_mass(ledger, e)))
        if e not in masses:
            masses[e] = q_closed

    sample_masses = [closed_form_mass(groups, e) for e in sample]
    mean_sample = sum(sample_masses) / len(sample_masses) if sample_masses else 0.0
    mean_lin = (
        sum(linearized_mass(groups, e) for e in sample) / len(sample) if sample else 0.0
    )

    max_e, max_q = None, 0.0
    for e, q in sorted(masses.items()):
        if q > max_q:
            max_e, max_q = e, q
    violations = tuple((e, q) for e, q in sorted(masses.items()) if q > p)
    low, high = p * (1.0 - 2.0 * params.epsilon), p * (1.0 - params.epsilon / 2.0)
    return MassSection(
        colored_count=len(colored),
        max_qe=max_q,
        argmax=max_e,
        mean_qe_sample=mean_sample,
        mean_qe_linearized=mean_lin,
        violations=violations,
        coupling_ok=coupling_ok,
        window_low=low,
        window_high=high,
        mean_inside_window=low <= mean_sample <= high,
        sample_size=len(sample),
        spot_check_max_err=spot_err,
    )


def mcdiarmid_bound(lam: float, ranges: Sequence[tuple[float, float]]) -> float:
    """Two-sided bounded-differences tail bound 2 exp(-2 lam^2 / sum (b-a)^2)
    for a sum of independent variables with the given ranges."""
    if lam < 0:
        raise ValueError(f"deviation must be nonnegative, got {lam}")
    if not ranges:
        raise ValueError("ranges must be nonempty")
    denom = sum((b - a) ** 2 for a, b in ranges)
    if denom == 0.0:
        return 2.0 if lam == 0.0 else 0.0
    return 2.0 * math.exp(-2.0 * lam * lam / denom)


def mass_concentration_bound(params: Params) -> float:
    """Tail bound on one tuple's accumulated mass deviating by eps*p/3, with
    each round's contribution bounded by 2 omega^2 ln(n) / alpha_n^(k-1)."""
    width = 2.0 * params.omega_n**2 * math.log(params.n) / float(params.alpha_n) ** (params.k - 1)
    if params.N == 0:
        return 0.0
    return mcdiarmid_bound(params.epsilon * params.p / 3.0, [(0.0, width)] * params.N)


@dataclass(frozen=True)
class EmbeddingSection:
    ok: bool
    witness: tuple[int, ...] | None
    witness_u: float | None
    witness_qe: float | None

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "witness": list(self.witness) if self.witness else None,
            "witness_u": self.witness_u,
            "witness_Qe": self.witness_qe,
        }


def verify_embedding(ledger: QueryLedger, source: UniformSource, p: float) -> EmbeddingSection:
    """Delegates to the engine's final embedding comparison and reports the
    witness tuple on failure."""
    bad = witness_embedding_failure(ledger, source, p)
    if bad is None:
        return EmbeddingSection(True, None, None, None)
    e, u = bad
    return EmbeddingSection(False, e, u, replay_mass(ledger, e))


@dataclass(frozen=True)
class VerificationReport:
    packing: PackingSection
    mass: MassSection
    embedding: EmbeddingSection
    collision_estimate: float
    concentration_bound: float

    def to_dict(self) -> dict:
        return {
            "packing": self.packing.to_dict(),
            "mass": self.mass.to_dict(),
            "embedding": self.embedding.to_dict(),
            "bounds": {
                "collision_estimate": self.collision_estimate,
                "concentration_bound": self.concentration_bound,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def summary_line(self) -> str:
        return (
            f"cycles={len(self.packing.cycle_results)} valid={self.packing.all_valid} "
            f"collisions={self.packing.collision_count} max_Qe={self.mass.max_qe:.6g} "
            f"violations={len(self.mass.violations)} embedding={self.embedding.ok}"
        )


def build_report(result, sample_size: int = 200, seed: int = 0) -> VerificationReport:
    """Full verification of one pack result."""
    params = result.params
    audit = audit_params(params)
    return VerificationReport(
        packing=verify_packing(result.cycles, params.n, params.k),
        mass=verify_mass(result.ledger, params, result.source, sample_size, seed),
        embedding=verify_embedding(result.ledger, result.source, params.p),
        collision_estimate=audit.collision_estimate,
        concentration_bound=mass_concentration_bound(params),
    )

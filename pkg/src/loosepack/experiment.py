"""Batch orchestration: seeded packing runs, verification, and tabular output.

Every run is a pure function of the configuration and one seed; summaries are
reproducible byte-for-byte apart from the wall-clock block, which is kept in
a separate "timing" section precisely so the rest can be compared.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .packer import OVERRIDE_KEYS, ParamError, audit_params, derive_params, pack
from .solver import DEFAULT_NODE_CAP
from .verifier import build_report

CSV_COLUMNS = [
    "seed", "n", "k", "p", "N", "cycles_found", "fail_step1", "fail_mid",
    "fail_close", "collisions", "max_Qe", "wall_ms",
]

AGGREGATE_FIELDS = ["cycles_found", "fail_step1", "fail_mid", "fail_close", "collisions", "max_Qe"]


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class ExperimentConfig:
    n: int
    k: int
    p: float
    epsilon: float = 0.25
    seeds: list[int] = field(default_factory=list)
    trials: int = 0
    overrides: dict[str, Any] = field(default_factory=dict)
    desk_scale: bool = False
    solver_cap: int = DEFAULT_NODE_CAP
    out: str | None = None
    log_queries: bool = False
    fmt: str = "json"
    verbosity: int = 0
    mass_sample: int = 100

    def seed_list(self) -> list[int]:
        if self.seeds:
            return list(self.seeds)
        return list(range(self.trials))

    def validate(self) -> list[str]:
        errors: list[str] = []
        if self.fmt not in ("json", "csv"):
            errors.append(f"format: must be json or csv, got {self.fmt!r}")
        if self.trials < 0:
            errors.append(f"trials: must be >= 0, got {self.trials}")
        if self.solver_cap < 1:
            errors.append(f"solver_cap: must be >= 1, got {self.solver_cap}")
        if len(set(self.seed_list())) != len(self.seed_list()):
            errors.append("seeds: duplicate seeds")
        bad = set(self.overrides) - set(OVERRIDE_KEYS)
        if bad:
            errors.append(f"overrides: unknown keys {sorted(bad)}")
        try:
            params = derive_params(
                self.n, self.k, self.p, self.epsilon, self.overrides, self.desk_scale
            )
            if not self.desk_scale:
                for name, value in (("q", params.q), ("r", params.r)):
                    if value >= 1.0:
                        errors.append(
                            f"{name}: probability {value} >= 1 at n={self.n}; pass desk_scale"
                        )
        except ParamError as exc:
            errors.append(f"{exc.field}: {exc}")
        return errors

    def to_dict(self) -> dict:
        return {
            "n": self.n, "k": self.k, "p": self.p, "epsilon": self.epsilon,
            "seeds": self.seed_list(), "overrides": dict(self.overrides),
            "desk_scale": self.desk_scale, "solver_cap": self.solver_cap,
            "mass_sample": self.mass_sample,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        extra = set(d) - known - {"format"}
        if extra:
            raise ConfigError([f"unknown config keys: {sorted(extra)}"])
        d = dict(d)
        if "format" in d:
            d["fmt"] = d.pop("format")
        return cls(**d)


@dataclass
class SeedRow:
    seed: int
    n: int
    k: int
    p: float
    N: int
    cycles_found: int
    fail_step1: int
    fail_mid: int
    fail_close: int
    collisions: int
    max_Qe: float
    all_valid: bool
    embedding_ok: bool
    mass_violations: int
    wall_ms: float

    def record(self) -> dict:
        d = dict(self.__dict__)
        d.pop("wall_ms")
        return d


@dataclass
class ExperimentSummary:
    config: dict
    rows: list[SeedRow]
    aggregate: dict[str, dict[str, float]]
    wall_ms: list[float]

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "config": self.config,
            "rows": [r.record() for r in self.rows],
            "aggregate": self.aggregate,
        }
        if include_timing:
            d["timing"] = {"wall_ms": self.wall_ms, "total_wall_ms": sum(self.wall_ms)}
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2) + "\n"

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for row, ms in zip(self.rows, self.wall_ms):
            values = {**row.record(), "wall_ms": ms}
            lines.append(",".join(_csv_cell(values[c]) for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"


def _csv_cell(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _aggregate(rows: list[SeedRow]) -> dict[str, dict[str, float]]:
    agg: dict[str, dict[str, float]] = {}
    for name in AGGREGATE_FIELDS:
        values = [float(getattr(r, name)) for r in rows]
        if not values:
            agg[name] = {"mean": 0.0, "se": 0.0}
            continue
        mean = sum(values) / len(values)
        if len(values) > 1:
            var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
            se = math.sqrt(var / len(values))
        else:
            se = 0.0
        agg[name] = {"mean": mean, "se": se}
    return agg


def run_one_seed(config: ExperimentConfig, seed: int):
    """Derive, pack, and verify for a single seed. Returns the summary row and
    the full artifacts for optional logging."""
    start = time.perf_counter()
    params = derive_params(
        config.n, config.k, config.p, config.epsilon, config.overrides, config.desk_scale
    )
    result = pack(params, seed, solver_cap=config.solver_cap)
    report = build_report(result, sample_size=config.mass_sample, seed=seed)
    fail_steps = [o.failed_step for o in result.outcomes if not o.success]
    row = SeedRow(
        seed=seed,
        n=params.n,
        k=params.k,
        p=params.p,
        N=params.N,
        cycles_found=len(result.cycles),
        fail_step1=sum(1 for s in fail_steps if s == 1),
        fail_mid=sum(1 for s in fail_steps if s is not None and 2 <= s <= params.K),
        fail_close=sum(1 for s in fail_steps if s == params.K + 1),
        collisions=report.packing.collision_count,
        max_Qe=report.mass.max_qe,
        all_valid=report.packing.all_valid,
        embedding_ok=report.embedding.ok,
        mass_violations=len(report.mass.violations),
        wall_ms=(time.perf_counter() - start) * 1000.0,
    )
    return row, result, report


def run_experiment(config: ExperimentConfig) -> ExperimentSummary:
    """Run every configured seed, verify each run, and aggregate. Partial
    results are flushed on interrupt."""
    errors = config.validate()
    if errors:
        raise ConfigError(errors)
    rows: list[SeedRow] = []
    wall: list[float] = []
    artifacts: list[tuple] = []
    try:
        for seed in config.seed_list():
            row, result, report = run_one_seed(config, seed)
            rows.append(row)
            wall.append(row.wall_ms)
            if config.out:
                artifacts.append((seed, result, report))
            if config.verbosity:
                print(f"seed {seed}: {report.summary_line()}")
    except KeyboardInterrupt:  # pragma: no cover - interactive path
        pass
    summary = ExperimentSummary(
        config=config.to_dict(), rows=rows, aggregate=_aggregate(rows), wall_ms=wall
    )
    if config.out:
        _write_artifacts(config, artifacts)
    return summary


def _write_artifacts(config: ExperimentConfig, artifacts: list[tuple]) -> None:
    base = Path(config.out)
    base.mkdir(parents=True, exist_ok=True)
    for seed, result, report in artifacts:
        (base / f"outcomes_{seed}.jsonl").write_text(result.outcomes_jsonl())
        (base / f"report_{seed}.json").write_text(report.to_json() + "\n")
        cycles = [list(c.vertices) for c in result.cycles]
        (base / f"cycles_{seed}.json").write_text(json.dumps(cycles) + "\n")
        if config.log_queries:
            (base / f"queries_{seed}.jsonl").write_text(result.ledger.to_jsonl())


def emit(summary: ExperimentSummary, fmt: str, out: str | Path, include_timing: bool = True) -> list[Path]:
    """Write the summary as JSON or CSV; returns the paths written."""
    if fmt not in ("json", "csv"):
        raise ValueError(f"format must be json or csv, got {fmt!r}")
    path = Path(out)
    try:
        if fmt == "json":
            path.write_text(summary.to_json(include_timing))
        else:
            path.write_text(summary.csv_text())
    except OSError as exc:
        raise OSError(f"writing summary to {path}: {exc}") from exc
    return [path]

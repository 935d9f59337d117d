"""Command line surface: pack / audit / verify / solve-aux.

Flags mirror the JSON config file one-to-one; flags win over the file. Round
failures are data and leave the exit code at 0; only operational errors
(bad config, I/O) are nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import SubRng
from .experiment import ConfigError, ExperimentConfig, emit, run_experiment, run_one_seed
from .packer import ParamError, audit_params, derive_params
from .solver import AuxInstance, brute_force_hc, find_constrained_hc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, help="JSON config file mirroring the flags")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--eps", type=float, dest="epsilon")
    p.add_argument("--seeds", type=str, help="comma-separated seed list")
    p.add_argument("--trials", type=int)
    p.add_argument("--override-omega-n", type=float, dest="omega_n")
    p.add_argument("--override-q", type=float, dest="q")
    p.add_argument("--override-alpha-n", type=int, dest="alpha_n")
    p.add_argument("--override-A", type=str, dest="A", help="int, or comma list for steps 2..K")
    p.add_argument("--override-r", type=float, dest="r")
    p.add_argument("--override-N", type=int, dest="N")
    p.add_argument("--desk-scale", action="store_true", default=None)
    p.add_argument("--solver-cap", type=int)
    p.add_argument("--out", type=str)
    p.add_argument("--log-queries", action="store_true", default=None)
    p.add_argument("--format", type=str, choices=["json", "csv"], dest="fmt")
    p.add_argument("-v", "--verbose", action="count", default=None, dest="verbosity")


def _parse_seeds(raw: str) -> list[int]:
    return [int(s) for s in raw.replace(";", ",").split(",") if s.strip()]


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    file_cfg: dict = {}
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
    overrides = dict(file_cfg.pop("overrides", {}))
    for key in ("omega_n", "q", "alpha_n", "A", "r", "N"):
        value = getattr(args, key, None)
        if value is not None:
            if key == "A":
                parts = _parse_seeds(value)
                value = parts[0] if len(parts) == 1 else parts
            overrides[key] = value
    merged = dict(file_cfg)
    for key in ("n", "k", "p", "epsilon", "trials", "solver_cap", "out", "fmt", "verbosity"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if args.seeds is not None:
        merged["seeds"] = _parse_seeds(args.seeds)
    for key in ("desk_scale", "log_queries"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    merged["overrides"] = overrides
    missing = [k for k in ("n", "k", "p") if k not in merged]
    if missing:
        raise ConfigError([f"{k}: required (flag --{k} or config file)" for k in missing])
    return ExperimentConfig.from_dict(merged)


def _cmd_pack(args: argparse.Namespace) -> int:
    config = _build_config(args)
    summary = run_experiment(config)
    fmt = config.fmt
    out = config.out
    if out:
        target = Path(out) / f"summary.{fmt}"
        target.parent.mkdir(parents=True, exist_ok=True)
        emit(summary, fmt, target)
        print(f"wrote {target}")
    else:
        text = summary.to_json() if fmt == "json" else summary.csv_text()
        sys.stdout.write(text)
    return 0


def _cmd_audit(args: argparse.Namespace) -> int:
    config = _build_config(args)
    params = derive_params(
        config.n, config.k, config.p, config.epsilon, config.overrides, config.desk_scale
    )
    report = audit_params(params)
    shown = params.to_dict()
    if len(shown["A"]) > 8:
        shown["A"] = shown["A"][:4] + ["..."] + shown["A"][-4:]
    print(json.dumps(shown, sort_keys=True))
    for line in report.lines():
        print(line)
    if config.out:
        path = Path(config.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(
            {"params": params.to_dict(), "audit": report.to_dict()}, sort_keys=True, indent=2
        ) + "\n")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    # Replays each configured seed deterministically and verifies the run;
    # no stored query logs are needed.
    config = _build_config(args)
    errors = config.validate()
    if errors:
        raise ConfigError(errors)
    for seed in config.seed_list():
        _, _, report = run_one_seed(config, seed)
        print(f"seed {seed}: {report.summary_line()}")
        if config.out:
            path = Path(config.out)
            path.mkdir(parents=True, exist_ok=True)
            (path / f"verify_{seed}.json").write_text(report.to_json() + "\n")
    return 0


def _cmd_solve_aux(args: argparse.Namespace) -> int:
    inst = AuxInstance.from_json(Path(args.instance).read_text())
    if args.cap:
        inst = AuxInstance(inst.vertices, inst.k, inst.edges, inst.v0, args.cap)
    if args.brute:
        result = brute_force_hc(inst)
    else:
        result = find_constrained_hc(inst, SubRng(args.seed))
    print(json.dumps(result.to_dict(), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loosepack")
    sub = parser.add_subparsers(dest="command", required=True)

    p_pack = sub.add_parser("pack", help="run seeded packing experiments and summarize")
    _add_common(p_pack)
    p_pack.set_defaults(func=_cmd_pack)

    p_audit = sub.add_parser("audit", help="derive parameters and report analytic bounds")
    _add_common(p_audit)
    p_audit.set_defaults(func=_cmd_audit)

    p_verify = sub.add_parser("verify", help="replay seeds deterministically and verify")
    _add_common(p_verify)
    p_verify.set_defaults(func=_cmd_verify)

    p_solve = sub.add_parser("solve-aux", help="solve a closing instance from JSON")
    p_solve.add_argument("instance", type=str, help="AuxInstance JSON file")
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--cap", type=int, default=0, help="override the node cap")
    p_solve.add_argument("--brute", action="store_true", help="exhaustive count instead of search")
    p_solve.set_defaults(func=_cmd_solve_aux)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    except ParamError as exc:
        print(f"parameter error [{exc.field}]: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line interface.

Exit codes: 0 on success, 1 on a domain error (bad documents, inconsistent
inputs), 2 on usage errors.  All error text goes to standard error prefixed
with "error:".  A single --seed flag controls every source of randomness.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .benchmark import ingest as ingest_benchmark
from .benchmark import load_manifest
from .evaluation import evaluate_portfolio, load_matrix, save_matrix
from .invention import (
    CampaignConfig,
    checkpoint,
    fresh_state,
    invent,
    resume,
    select_initial,
)
from .landscape import SyntheticBackend, load_landscape
from .report import (
    CoverItem,
    escalate,
    greedy_cover,
    option_frequency,
    progress_to_csv,
    render_report,
)
from .runner import (
    SOLVED,
    ExternalBackend,
    ProblemRef,
    SolverConfig,
    outcome_cache,
    read_outcomes,
)
from .space import load_space, load_strategies, save_strategies
from .tuner import Tuner, TunerConfig


class UsageError(Exception):
    """Bad command-line usage; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"cannot read {path}: {e}") from None


def _read_id_file(path: str | Path) -> list[str]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise ValueError(f"cannot read {path}: {e}") from None
    return [line.strip() for line in lines if line.strip()]


def _solver_from_doc(doc: Mapping[str, Any]) -> SolverConfig:
    if "solver" in doc:
        doc = doc["solver"]
    try:
        command = tuple(doc["command"])
        success = tuple(doc["success_patterns"])
    except KeyError as e:
        raise ValueError(f"solver config missing field {e.args[0]!r}") from None
    return SolverConfig(
        command=command,
        success_patterns=success,
        failure_patterns=tuple(doc.get("failure_patterns", ())),
        working_dir=doc.get("working_dir"),
        grace_period_s=float(doc.get("grace_period_s", 1.0)),
        cpu_time_limit=bool(doc.get("cpu_time_limit", False)),
        memory_mb=doc.get("memory_mb"),
        raw_log_dir=doc.get("raw_log_dir"),
    )


def _make_backend(args) -> tuple[Any, Any]:
    """Returns (backend, landscape-or-None) from --landscape / --config."""
    if getattr(args, "landscape", None):
        landscape = load_landscape(args.landscape)
        return SyntheticBackend(landscape), landscape
    if args.config:
        return ExternalBackend(_solver_from_doc(_read_json(args.config))), None
    raise UsageError("either --landscape or --config with a solver entry is required")


def _problem_refs(args, landscape) -> list[ProblemRef]:
    if getattr(args, "manifest", None):
        bench = load_manifest(args.manifest)
        return bench.problem_refs(args.variant)
    if getattr(args, "problems", None):
        return [ProblemRef(pid) for pid in _read_id_file(args.problems)]
    if landscape is not None:
        return landscape.problem_refs()
    raise UsageError("no problem source: pass --manifest or --problems")


# -- subcommands ---------------------------------------------------------------


def _cmd_space_validate(args) -> int:
    space = load_space(args.space, tier=args.tier)
    size = space.canonical_size()
    print(f"space: {space.name}")
    print(f"params: {len(space.params)}")
    print(f"dependencies: {len(space.dependencies)}")
    print(f"canonical strategies: {size}")
    if size > 10**6:
        print(f"log10 size: {round(math.log10(size), 2)}")
    return 0


def _cmd_eval(args) -> int:
    if args.limit is None:
        raise UsageError("eval requires --limit")
    space = load_space(args.space, tier=args.tier)
    strategies = load_strategies(space, args.strategies)
    backend, landscape = _make_backend(args)
    problems = _problem_refs(args, landscape)
    cache = outcome_cache(read_outcomes(args.cache)) if args.cache else None
    matrix = evaluate_portfolio(
        strategies, problems, backend, args.limit, args.variant,
        workers=args.workers, cache=cache, log_path=args.log,
    )
    save_matrix(args.out, matrix)
    print(f"strategies: {len(matrix.registry)}")
    print(f"problems: {len(problems)}")
    print(f"solved: {len(matrix.solved_union())}")
    return 0


def _cmd_tune(args) -> int:
    if args.limit is None:
        raise UsageError("tune requires --limit")
    space = load_space(args.space, tier=args.tier)
    strategies = load_strategies(space, args.strategies)
    seed_strategy = strategies[0]
    if args.seed_label is not None:
        matches = [s for s in strategies if s.label == args.seed_label]
        if not matches:
            raise ValueError(f"no strategy labeled {args.seed_label!r}")
        seed_strategy = matches[0]
    backend, landscape = _make_backend(args)
    problems = _problem_refs(args, landscape)
    config = TunerConfig(
        limit_s=args.limit,
        eval_budget=args.budget,
        rng_seed=args.seed,
        perturb_strength=args.perturb_strength,
        restart_prob=args.restart_prob,
        workers=args.workers,
    )
    session = Tuner(problems, config, backend, args.variant)
    best = session.tune(seed_strategy)
    if args.trace:
        session.write_trace(args.trace)
    save_strategies(args.out, [replace(best, label=best.label or "tuned")])
    print(f"evaluations: {session.evals_used}")
    print(f"best: {best.canonical_key()}")
    return 0


def _campaign_from_doc(path: str, args) -> tuple[CampaignConfig, Any]:
    doc = _read_json(path)
    base = Path(path).parent
    space = load_space(_resolve(base, doc["space"]), tier=doc.get("tier"))
    if "landscape" in doc:
        landscape = load_landscape(_resolve(base, doc["landscape"]))
        backend = SyntheticBackend(landscape)
    elif "solver" in doc:
        landscape = None
        backend = ExternalBackend(_solver_from_doc(doc))
    else:
        raise ValueError("campaign config needs a landscape or solver entry")
    variant = doc.get("variant", "default")
    if doc.get("manifest"):
        problems = load_manifest(_resolve(base, doc["manifest"])).problem_refs(variant)
    elif doc.get("problems"):
        problems = [ProblemRef(pid) for pid in doc["problems"]]
    elif landscape is not None:
        problems = landscape.problem_refs()
    else:
        raise ValueError("campaign config needs a problem source")
    initial = doc.get("initial_strategies")
    if isinstance(initial, str):
        strategies = load_strategies(space, _resolve(base, initial))
    elif isinstance(initial, Mapping):
        strategies = load_strategies(space, initial)
    elif "initial_select" in doc:
        sel = doc["initial_select"]
        baseline = load_matrix(_resolve(base, sel["matrix"]), space)
        strategies = select_initial(baseline, int(sel.get("count", 2)),
                                    sel.get("mode", "cover"))
    else:
        raise ValueError("campaign config needs initial_strategies or initial_select")
    tdoc = doc.get("tuner", {})
    tuner = TunerConfig(
        limit_s=float(tdoc["limit_s"]),
        eval_budget=int(tdoc.get("eval_budget", 500)),
        wall_budget_s=tdoc.get("wall_budget_s"),
        perturb_strength=int(tdoc.get("perturb_strength", 3)),
        restart_prob=float(tdoc.get("restart_prob", 0.01)),
        rng_seed=int(tdoc.get("rng_seed", 0)),
        workers=int(tdoc.get("workers", 1)),
    )
    if args.seed is not None:
        tuner = replace(tuner, rng_seed=args.seed)
    eval_limit = float(doc["eval_limit_s"])
    if args.limit is not None:
        eval_limit = args.limit
    workers = int(doc.get("workers", 1))
    if args.workers_given:
        workers = args.workers
    config = CampaignConfig(
        space=space,
        initial=tuple(strategies),
        problems=tuple(problems),
        eval_limit_s=eval_limit,
        wall_budget_s=float(doc["wall_budget_s"]),
        tuner=tuner,
        variant=variant,
        workers=workers,
    )
    return config, backend


def _cmd_invent(args) -> int:
    if not args.config:
        raise UsageError("invent requires --config with a campaign document")
    config, backend = _campaign_from_doc(args.config, args)
    state = None
    if args.resume:
        if not args.checkpoint:
            raise UsageError("--resume needs --checkpoint")
        state = resume(args.checkpoint)
    state = invent(
        config, backend,
        state=state,
        checkpoint_path=args.checkpoint,
        progress_path=args.progress,
    )
    print(f"portfolio: {len(state.portfolio)}")
    print(f"invented: {state.counters.invented}")
    print(f"specializations: {state.counters.specializations_total}")
    print(f"failed: {state.counters.specializations_failed}")
    print(f"solved: {len(state.matrix.solved_union())}")
    return 0


def _items_from_logs(paths: Sequence[str]) -> list[CoverItem]:
    solved: dict[tuple[str, float, str], set[str]] = {}
    for path in paths:
        for o in read_outcomes(path):
            label = (o.variant, o.limit_s, o.strategy_key)
            bucket = solved.setdefault(label, set())
            if o.verdict == SOLVED:
                bucket.add(o.problem_id)
    return [
        CoverItem(variant, limit_s, key, frozenset(pids))
        for (variant, limit_s, key), pids in solved.items()
    ]


def _cmd_cover(args) -> int:
    items = _items_from_logs(args.inputs)
    if not items:
        raise ValueError("no outcomes found in the given logs")
    baseline = set(_read_id_file(args.baseline_unsolved)) if args.baseline_unsolved else None
    steps = greedy_cover(items, baseline)
    if args.csv:
        Path(args.csv).write_text(render_report(steps, "csv"))
    print(render_report(steps, "text"), end="")
    return 0


def _cmd_escalate(args) -> int:
    if args.high_limit is None:
        raise UsageError("escalate requires --high-limit")
    space = load_space(args.space, tier=args.tier)
    pool = [load_matrix(p, space) for p in args.inputs]
    backend, landscape = _make_backend(args)
    variants = {m.variant for m in pool}
    problems_by_variant: dict[str, list[ProblemRef]] = {}
    for variant in variants:
        if getattr(args, "manifest", None):
            problems_by_variant[variant] = load_manifest(args.manifest).problem_refs(variant)
        elif landscape is not None:
            problems_by_variant[variant] = landscape.problem_refs()
        else:
            raise UsageError("external escalation needs --manifest")
    cache = outcome_cache(read_outcomes(args.cache)) if args.cache else None
    items, steps, produced = escalate(
        pool, args.high_limit, backend, problems_by_variant,
        workers=args.workers, cache=cache, log_path=args.log,
        max_evaluations=args.max_evals, only_unsolved=args.only_unsolved,
    )
    if args.csv:
        Path(args.csv).write_text(render_report(steps, "csv"))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, matrix in enumerate(produced):
            save_matrix(out / f"escalated_{i:03d}.jsonl", matrix)
    print(render_report(steps, "text"), end="")
    return 0


def _cmd_report(args) -> int:
    records = []
    try:
        with open(args.progress) as fh:
            for line in fh:
                if line.strip():
                    records.append(json.loads(line))
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"cannot read progress log: {e}") from None
    text = progress_to_csv(records)
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        print(text, end="")
    return 0


def _cmd_analyze(args) -> int:
    space = load_space(args.space, tier=args.tier)
    strategies = load_strategies(space, args.strategies)
    freq = option_frequency(strategies)
    lines = []
    for (name, value), fraction in freq.items():
        lines.append(f"{name}={value}\t{fraction:.4f}")
    if args.csv:
        rows = ["param,value,frequency"]
        rows += [f"{name},{value},{fraction:.4f}" for (name, value), fraction in freq.items()]
        Path(args.csv).write_text("\n".join(rows) + "\n")
    print("\n".join(lines))
    return 0


def _cmd_ingest(args) -> int:
    bench = ingest_benchmark(args.spec, args.out,
                             log=lambda msg: print(msg, file=sys.stderr))
    print(f"benchmark: {bench.name}")
    print(f"variants: {len(bench.variants)}")
    print(f"problems: {len(bench.problems)}")
    print(f"warnings: {bench.warnings}")
    print(f"manifest: {Path(args.out) / 'manifest.json'}")
    return 0


# -- parser --------------------------------------------------------------------


def _add_common(parser: _Parser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for all randomness")
    parser.add_argument("--workers", type=int, default=1,
                        help="max concurrent solver runs")
    parser.add_argument("--limit", type=float, default=None,
                        help="per-run wall-clock limit in seconds")
    parser.add_argument("--config", default=None,
                        help="JSON config file (solver or campaign)")
    parser.add_argument("--tier", choices=["regular", "full"], default=None,
                        help="parameter tier filter for the space")


def build_parser() -> _Parser:
    parser = _Parser(prog="stratforge",
                     description="Invent, evaluate, and combine solver strategies.")
    sub = parser.add_subparsers(dest="command")

    space_p = sub.add_parser("space", help="space document utilities")
    space_sub = space_p.add_subparsers(dest="space_command")
    validate = space_sub.add_parser("validate", help="check a space document")
    validate.add_argument("space")
    _add_common(validate)
    validate.set_defaults(func=_cmd_space_validate)

    eval_p = sub.add_parser("eval", help="evaluate strategies over problems")
    eval_p.add_argument("--space", required=True)
    eval_p.add_argument("--strategies", required=True)
    eval_p.add_argument("--variant", default="default")
    eval_p.add_argument("--landscape", default=None)
    eval_p.add_argument("--manifest", default=None)
    eval_p.add_argument("--problems", default=None, help="file with one problem id per line")
    eval_p.add_argument("--cache", default=None, help="outcome log to reuse")
    eval_p.add_argument("--log", default=None, help="outcome log to append to")
    eval_p.add_argument("--out", required=True, help="matrix file to write")
    _add_common(eval_p)
    eval_p.set_defaults(func=_cmd_eval)

    tune_p = sub.add_parser("tune", help="specialize a strategy on a problem set")
    tune_p.add_argument("--space", required=True)
    tune_p.add_argument("--strategies", required=True, help="seed strategy document")
    tune_p.add_argument("--seed-label", default=None)
    tune_p.add_argument("--variant", default="default")
    tune_p.add_argument("--landscape", default=None)
    tune_p.add_argument("--manifest", default=None)
    tune_p.add_argument("--problems", default=None)
    tune_p.add_argument("--budget", type=int, default=500)
    tune_p.add_argument("--perturb-strength", type=int, default=3)
    tune_p.add_argument("--restart-prob", type=float, default=0.01)
    tune_p.add_argument("--trace", default=None)
    tune_p.add_argument("--out", required=True)
    _add_common(tune_p)
    tune_p.set_defaults(func=_cmd_tune, seed=0)

    invent_p = sub.add_parser("invent", help="run an invention campaign")
    invent_p.add_argument("--checkpoint", default=None)
    invent_p.add_argument("--progress", default=None)
    invent_p.add_argument("--resume", action="store_true")
    _add_common(invent_p)
    invent_p.set_defaults(func=_cmd_invent)

    cover_p = sub.add_parser("cover", help="greedy cover over outcome logs")
    cover_p.add_argument("--in", dest="inputs", action="append", required=True)
    cover_p.add_argument("--baseline-unsolved", default=None)
    cover_p.add_argument("--csv", default=None)
    _add_common(cover_p)
    cover_p.set_defaults(func=_cmd_cover)

    esc_p = sub.add_parser("escalate", help="re-evaluate best strategies at a higher limit")
    esc_p.add_argument("--space", required=True)
    esc_p.add_argument("--in", dest="inputs", action="append", required=True,
                       help="matrix files forming the pool")
    esc_p.add_argument("--high-limit", type=float, default=None)
    esc_p.add_argument("--landscape", default=None)
    esc_p.add_argument("--manifest", default=None)
    esc_p.add_argument("--cache", default=None)
    esc_p.add_argument("--log", default=None)
    esc_p.add_argument("--max-evals", type=int, default=None)
    esc_p.add_argument("--only-unsolved", action="store_true")
    esc_p.add_argument("--out-dir", default=None)
    esc_p.add_argument("--csv", default=None)
    _add_common(esc_p)
    esc_p.set_defaults(func=_cmd_escalate)

    report_p = sub.add_parser("report", help="plot-ready CSV from a progress log")
    report_p.add_argument("--progress", required=True)
    report_p.add_argument("--csv", default=None)
    _add_common(report_p)
    report_p.set_defaults(func=_cmd_report)

    analyze_p = sub.add_parser("analyze", help="option frequencies of a portfolio")
    analyze_p.add_argument("--space", required=True)
    analyze_p.add_argument("--strategies", required=True)
    analyze_p.add_argument("--csv", default=None)
    _add_common(analyze_p)
    analyze_p.set_defaults(func=_cmd_analyze)

    ingest_p = sub.add_parser("ingest", help="materialize a benchmark")
    ingest_p.add_argument("--spec", required=True)
    ingest_p.add_argument("--out", required=True)
    _add_common(ingest_p)
    ingest_p.set_defaults(func=_cmd_ingest)

    return parser


def dispatch(argv: Sequence[str]) -> int:
    """Parse and run one invocation; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:  # --help and friends
        return int(e.code or 0)
    if not hasattr(args, "func"):
        print("error: missing subcommand (see --help)", file=sys.stderr)
        return 2
    args.workers_given = "--workers" in argv
    try:
        return int(args.func(args) or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

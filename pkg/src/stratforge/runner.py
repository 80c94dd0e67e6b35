"""Run external solvers under wall-clock limits with process-group cleanup,
classify verdicts from captured output, and log outcomes as JSON Lines.
"""

from __future__ import annotations

import hashlib
import json
import os
import signal
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

SOLVED = "solved"
UNSOLVED = "unsolved"
TIMEOUT = "timeout"
ERROR = "error"
VERDICTS = (SOLVED, UNSOLVED, TIMEOUT, ERROR)

# Cache key for one evaluation cell: (strategy_key, problem_id, variant, limit_s).
CacheKey = tuple[str, str, str, float]


class RunnerError(ValueError):
    """Raised for invalid runner configuration."""


@dataclass(frozen=True)
class ProblemRef:
    """A benchmark problem: a stable id plus an optional on-disk path."""

    pid: str
    path: str | None = None


@dataclass(frozen=True)
class SolverConfig:
    """How to invoke one external solver.

    command is a token sequence containing the placeholder {problem} exactly
    once; {strategy_options} (a standalone token) splices the strategy tokens
    in place and {timeout_s} substitutes the per-task limit.  Patterns are
    plain substrings searched in the captured output.
    """

    command: tuple[str, ...]
    success_patterns: tuple[str, ...]
    failure_patterns: tuple[str, ...] = ()
    working_dir: str | None = None
    grace_period_s: float = 1.0
    cpu_time_limit: bool = False
    memory_mb: int | None = None
    raw_log_dir: str | None = None

    def __post_init__(self) -> None:
        if self.grace_period_s < 0:
            raise RunnerError("grace_period_s must be non-negative")
        if not self.success_patterns:
            raise RunnerError("at least one success pattern is required")
        n_problem = sum(tok.count("{problem}") for tok in self.command)
        if n_problem != 1:
            raise RunnerError("command must contain the {problem} placeholder exactly once")
        for tok in self.command:
            if "{strategy_options}" in tok and tok != "{strategy_options}":
                raise RunnerError("{strategy_options} must be a standalone command token")


@dataclass(frozen=True)
class Task:
    """One (problem, strategy, limit) run request."""

    problem_id: str
    problem_path: str | None
    strategy_key: str
    strategy_tokens: tuple[str, ...]
    limit_s: float
    variant: str = "default"

    def __post_init__(self) -> None:
        if self.limit_s <= 0:
            raise RunnerError("limit_s must be positive")


@dataclass(frozen=True)
class EvalOutcome:
    """Result of one run.  timeout implies runtime_s >= limit_s (up to clock
    resolution); solved implies the process finished inside the limit."""

    problem_id: str
    strategy_key: str
    variant: str
    limit_s: float
    verdict: str
    runtime_s: float
    status: str = ""

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise RunnerError(f"unknown verdict: {self.verdict!r}")
        if self.runtime_s < 0:
            raise RunnerError("runtime_s must be non-negative")


def build_command(config: SolverConfig, task: Task) -> list[str]:
    """Substitute placeholders; {strategy_options} expands to many tokens."""
    out: list[str] = []
    for tok in config.command:
        if tok == "{strategy_options}":
            out.extend(task.strategy_tokens)
            continue
        tok = tok.replace("{problem}", task.problem_path or task.problem_id)
        tok = tok.replace("{timeout_s}", _format_limit(task.limit_s))
        out.append(tok)
    return out


def _format_limit(limit_s: float) -> str:
    return str(int(limit_s)) if float(limit_s).is_integer() else str(limit_s)


def _rlimit_preexec(config: SolverConfig, limit_s: float):
    import resource

    def apply() -> None:
        if config.cpu_time_limit:
            cpu = int(limit_s + config.grace_period_s) + 1
            resource.setrlimit(resource.RLIMIT_CPU, (cpu, cpu))
        if config.memory_mb is not None:
            cap = config.memory_mb * 1024 * 1024
            resource.setrlimit(resource.RLIMIT_AS, (cap, cap))

    return apply


def _kill_group(proc: subprocess.Popen, sig: int) -> None:
    try:
        os.killpg(proc.pid, sig)
    except (ProcessLookupError, PermissionError):
        pass


def _classify(output: str, returncode: int, config: SolverConfig) -> tuple[str, str]:
    for pat in config.success_patterns:
        if pat in output:
            return SOLVED, f"exit:{returncode}"
    for pat in config.failure_patterns:
        if pat in output:
            return UNSOLVED, f"exit:{returncode}"
    if returncode == 0:
        return UNSOLVED, "exit:0 no pattern"
    return ERROR, f"exit:{returncode} no pattern"


def _write_raw_log(config: SolverConfig, task: Task, output: str) -> None:
    ident = f"{task.variant}|{task.strategy_key}|{task.problem_id}|{task.limit_s}"
    digest = hashlib.sha256(ident.encode()).hexdigest()[:16]
    directory = Path(config.raw_log_dir)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{digest}.log").write_text(f"# {ident}\n{output}")


def run_task(config: SolverConfig, task: Task) -> EvalOutcome:
    """Run one task under a wall-clock limit.

    The solver runs in its own process group.  At the limit the whole group
    gets SIGTERM, then SIGKILL after grace_period_s, so no child survives.
    """
    cmd = build_command(config, task)
    start = time.monotonic()
    verdict = ERROR
    status = ""
    output = ""
    preexec = None
    if config.cpu_time_limit or config.memory_mb is not None:
        preexec = _rlimit_preexec(config, task.limit_s)
    try:
        proc = subprocess.Popen(
            cmd,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            cwd=config.working_dir,
            text=True,
            start_new_session=True,
            preexec_fn=preexec,
        )
    except OSError as e:
        runtime = round(time.monotonic() - start, 3)
        return EvalOutcome(task.problem_id, task.strategy_key, task.variant,
                           task.limit_s, ERROR, runtime, f"launch failed: {e}")
    try:
        output, _ = proc.communicate(timeout=task.limit_s)
        verdict, status = _classify(output, proc.returncode, config)
    except subprocess.TimeoutExpired:
        _kill_group(proc, signal.SIGTERM)
        try:
            output, _ = proc.communicate(timeout=config.grace_period_s)
        except subprocess.TimeoutExpired:
            _kill_group(proc, signal.SIGKILL)
            output, _ = proc.communicate()
        verdict, status = TIMEOUT, "killed at limit"
    except OSError as e:
        _kill_group(proc, signal.SIGKILL)
        proc.wait()
        verdict, status = ERROR, f"io failure: {e}"
    runtime = round(time.monotonic() - start, 3)
    if config.raw_log_dir is not None:
        _write_raw_log(config, task, output or "")
    return EvalOutcome(task.problem_id, task.strategy_key, task.variant,
                       task.limit_s, verdict, runtime, status)


class ExternalBackend:
    """Backend adapter over run_task; the campaign clock is real wall time."""

    def __init__(self, config: SolverConfig):
        self.config = config
        self._t0 = time.monotonic()

    def run(self, task: Task, strategy: Any = None) -> EvalOutcome:
        return run_task(self.config, task)

    def account(self, outcomes: Sequence[EvalOutcome]) -> None:
        pass

    @property
    def clock_elapsed_s(self) -> float:
        return time.monotonic() - self._t0


def run_jobs(backend, jobs: Sequence[tuple[Task, Any]], workers: int = 1) -> list[EvalOutcome]:
    """Run (task, strategy) jobs with bounded parallelism.

    Results come back in input order; the backend accounts elapsed time once
    per batch, in input order, so synthetic clocks stay deterministic.
    """
    if workers < 1:
        raise RunnerError("workers must be >= 1")
    if workers == 1 or len(jobs) <= 1:
        outcomes = [backend.run(task, strategy) for task, strategy in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(backend.run, task, strategy) for task, strategy in jobs]
            outcomes = [f.result() for f in futures]
    backend.account(outcomes)
    return outcomes


def run_batch(config: SolverConfig, tasks: Sequence[Task], workers: int = 1) -> list[EvalOutcome]:
    """Run external tasks concurrently; at most workers solver processes at once."""
    return run_jobs(ExternalBackend(config), [(t, None) for t in tasks], workers)


# -- outcome log (the interchange format) ------------------------------------


def outcome_to_record(o: EvalOutcome) -> dict[str, Any]:
    return {
        "problem": o.problem_id,
        "strategy": o.strategy_key,
        "variant": o.variant,
        "limit_s": o.limit_s,
        "verdict": o.verdict,
        "runtime_s": o.runtime_s,
        "status": o.status,
    }


def record_to_outcome(rec: Mapping[str, Any]) -> EvalOutcome:
    return EvalOutcome(
        problem_id=rec["problem"],
        strategy_key=rec["strategy"],
        variant=rec["variant"],
        limit_s=float(rec["limit_s"]),
        verdict=rec["verdict"],
        runtime_s=float(rec["runtime_s"]),
        status=rec.get("status", ""),
    )


def append_outcomes(path: str | Path, outcomes: Iterable[EvalOutcome]) -> None:
    with open(path, "a") as fh:
        for o in outcomes:
            fh.write(json.dumps(outcome_to_record(o), sort_keys=True) + "\n")


def read_outcomes(path: str | Path) -> list[EvalOutcome]:
    """Read an outcome log, skipping header or other non-outcome records."""
    out: list[EvalOutcome] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "verdict" in rec and "problem" in rec:
                out.append(record_to_outcome(rec))
    return out


def outcome_cache(outcomes: Iterable[EvalOutcome]) -> dict[CacheKey, EvalOutcome]:
    return {(o.strategy_key, o.problem_id, o.variant, o.limit_s): o for o in outcomes}

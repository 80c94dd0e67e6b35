"""Synthetic solvability landscapes: a deterministic, process-free stand-in
for a real solver, used for tests, demos, and reproducible campaigns.

A landscape maps each problem id to an ordered rule list.  A rule matches a
strategy when every listed parameter is active and assigned an admissible
token; the first matching rule decides solvability and synthetic runtime.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .runner import (
    ERROR,
    SOLVED,
    TIMEOUT,
    UNSOLVED,
    EvalOutcome,
    ProblemRef,
    Task,
)
from .space import Strategy


class LandscapeError(ValueError):
    """Raised for malformed landscape documents."""


@dataclass(frozen=True)
class Rule:
    """Conjunction over active option assignments -> (solvable, runtime)."""

    when: tuple[tuple[str, tuple[str, ...]], ...]
    solvable: bool = True
    runtime_s: float = 0.0

    def matches(self, strategy: Strategy) -> bool:
        active = strategy.active_params()
        for name, admissible in self.when:
            if name not in active or strategy.value(name) not in admissible:
                return False
        return True


@dataclass(frozen=True)
class Landscape:
    """Problem -> rule list, with a default for strategies no rule matches."""

    problems: Mapping[str, tuple[Rule, ...]]
    default_solvable: bool = False
    default_runtime_s: float = 0.0

    def problem_ids(self) -> list[str]:
        return sorted(self.problems)

    def problem_refs(self) -> list[ProblemRef]:
        return [ProblemRef(pid) for pid in self.problem_ids()]

    def outcome_for(self, problem_id: str, strategy: Strategy) -> tuple[bool, float]:
        if problem_id not in self.problems:
            raise LandscapeError(f"unknown problem id: {problem_id!r}")
        for rule in self.problems[problem_id]:
            if rule.matches(strategy):
                return rule.solvable, rule.runtime_s
        return self.default_solvable, self.default_runtime_s


def _parse_rule(entry: Mapping[str, Any]) -> Rule:
    when = []
    for name, tokens in entry.get("when", {}).items():
        if isinstance(tokens, (list, tuple)):
            admissible = tuple(str(t) for t in tokens)
        else:
            admissible = (str(tokens),)
        when.append((str(name), admissible))
    return Rule(
        when=tuple(when),
        solvable=bool(entry.get("solvable", True)),
        runtime_s=float(entry.get("runtime_s", 0.0)),
    )


def load_landscape(source: str | Path | Mapping[str, Any]) -> Landscape:
    if isinstance(source, Mapping):
        doc: Mapping[str, Any] = source
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise LandscapeError(f"cannot load landscape: {e}") from None
    default = doc.get("default", {})
    problems = {
        str(pid): tuple(_parse_rule(r) for r in rules)
        for pid, rules in doc.get("problems", {}).items()
    }
    return Landscape(
        problems=problems,
        default_solvable=bool(default.get("solvable", False)),
        default_runtime_s=float(default.get("runtime_s", 0.0)),
    )


def landscape_to_doc(landscape: Landscape) -> dict[str, Any]:
    return {
        "default": {
            "solvable": landscape.default_solvable,
            "runtime_s": landscape.default_runtime_s,
        },
        "problems": {
            pid: [
                {
                    "when": {name: list(tokens) for name, tokens in rule.when},
                    "solvable": rule.solvable,
                    "runtime_s": rule.runtime_s,
                }
                for rule in rules
            ]
            for pid, rules in landscape.problems.items()
        },
    }


def run_synthetic(landscape: Landscape, task: Task, strategy: Strategy) -> EvalOutcome:
    """Deterministic oracle run: no process is spawned.

    A solvable problem whose synthetic runtime exceeds the limit times out at
    the limit; an unsolvable one reports unsolved after the full limit (the
    pessimistic reading of a solver that never gives up early).
    """
    solvable, runtime = landscape.outcome_for(task.problem_id, strategy)
    if solvable and runtime <= task.limit_s:
        return EvalOutcome(task.problem_id, task.strategy_key, task.variant,
                           task.limit_s, SOLVED, runtime, "synthetic")
    if solvable:
        return EvalOutcome(task.problem_id, task.strategy_key, task.variant,
                           task.limit_s, TIMEOUT, task.limit_s, "synthetic")
    return EvalOutcome(task.problem_id, task.strategy_key, task.variant,
                       task.limit_s, UNSOLVED, task.limit_s, "synthetic")


class SyntheticBackend:
    """Backend over a landscape with a virtual clock.

    The clock advances by the summed runtimes of each completed batch, in
    input order, so identical job sequences yield identical elapsed times.
    """

    def __init__(self, landscape: Landscape):
        self.landscape = landscape
        self._elapsed = 0.0

    def run(self, task: Task, strategy: Strategy) -> EvalOutcome:
        if strategy is None:
            raise LandscapeError("synthetic runs need the strategy object")
        return run_synthetic(self.landscape, task, strategy)

    def account(self, outcomes: Sequence[EvalOutcome]) -> None:
        for o in outcomes:
            self._elapsed += o.runtime_s

    @property
    def clock_elapsed_s(self) -> float:
        return self._elapsed

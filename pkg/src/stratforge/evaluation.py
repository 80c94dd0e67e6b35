"""Portfolio evaluation: outcome matrices at one limit, win-set partitions,
and merging matrices across variants and limits into a coverage view.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .runner import (
    SOLVED,
    CacheKey,
    EvalOutcome,
    ProblemRef,
    Task,
    append_outcomes,
    outcome_to_record,
    record_to_outcome,
    run_jobs,
)
from .space import Strategy, StrategySpace

MATRIX_SCHEMA_VERSION = 1

# A partition assigns every solved problem to exactly one winning strategy.
Partition = dict[str, set[str]]

# Coverage view: (variant, limit_s, strategy_key) -> solved problem ids.
ViewLabel = tuple[str, float, str]
SolvedView = dict[ViewLabel, set[str]]


class MatrixError(ValueError):
    """Raised for inconsistent matrix construction or lookups."""


class MergeError(ValueError):
    """Raised when merged matrices disagree on a shared cell."""


@dataclass
class EvalMatrix:
    """Strategy x problem outcomes at a single (variant, limit)."""

    limit_s: float
    variant: str
    cells: dict[tuple[str, str], EvalOutcome]
    registry: dict[str, Strategy]

    def __post_init__(self) -> None:
        for (key, pid), o in self.cells.items():
            if o.limit_s != self.limit_s or o.variant != self.variant:
                raise MatrixError(
                    f"cell ({key!r}, {pid!r}) disagrees with matrix limit or variant"
                )
            if key not in self.registry:
                raise MatrixError(f"cell strategy {key!r} missing from registry")

    def solved_set(self, strategy_key: str) -> set[str]:
        if strategy_key not in self.registry:
            raise MatrixError(f"unknown strategy key: {strategy_key!r}")
        return {
            pid for (key, pid), o in self.cells.items()
            if key == strategy_key and o.verdict == SOLVED
        }

    def solved_union(self) -> set[str]:
        return {pid for (_, pid), o in self.cells.items() if o.verdict == SOLVED}

    def problem_ids(self) -> set[str]:
        return {pid for _, pid in self.cells}

    def outcome(self, strategy_key: str, problem_id: str) -> EvalOutcome:
        try:
            return self.cells[(strategy_key, problem_id)]
        except KeyError:
            raise MatrixError(
                f"no cell for strategy {strategy_key!r} on problem {problem_id!r}"
            ) from None

    def extended(self, other: EvalMatrix) -> EvalMatrix:
        """New matrix with the union of cells; both inputs stay untouched."""
        if other.limit_s != self.limit_s or other.variant != self.variant:
            raise MatrixError("can only extend with a matrix at the same limit and variant")
        return EvalMatrix(
            self.limit_s,
            self.variant,
            {**self.cells, **other.cells},
            {**self.registry, **other.registry},
        )


def evaluate_portfolio(
    strategies: Sequence[Strategy],
    problems: Sequence[ProblemRef],
    backend,
    limit_s: float,
    variant: str = "default",
    workers: int = 1,
    cache: Mapping[CacheKey, EvalOutcome] | None = None,
    log_path: str | Path | None = None,
) -> EvalMatrix:
    """Evaluate every strategy on every problem at one limit.

    Cells found in the cache are reused without running anything; freshly
    produced outcomes are appended to log_path when given.  Strategies that
    share a canonical key are evaluated once.
    """
    if not strategies:
        raise MatrixError("evaluate_portfolio needs at least one strategy")
    if not problems:
        raise MatrixError("evaluate_portfolio needs at least one problem")
    registry: dict[str, Strategy] = {}
    for s in strategies:
        registry.setdefault(s.canonical_key(), s)
    cells: dict[tuple[str, str], EvalOutcome] = {}
    jobs: list[tuple[Task, Strategy]] = []
    slots: list[tuple[str, str]] = []
    for key, strat in registry.items():
        tokens = strat.render()
        for p in problems:
            hit = cache.get((key, p.pid, variant, limit_s)) if cache else None
            if hit is not None:
                cells[(key, p.pid)] = hit
                continue
            jobs.append((Task(p.pid, p.path, key, tokens, limit_s, variant), strat))
            slots.append((key, p.pid))
    fresh = run_jobs(backend, jobs, workers) if jobs else []
    for slot, o in zip(slots, fresh):
        cells[slot] = o
    if log_path is not None and fresh:
        append_outcomes(log_path, fresh)
    return EvalMatrix(limit_s, variant, cells, registry)


def best_partition(matrix: EvalMatrix) -> Partition:
    """Assign each solved problem to its fastest solver.

    Runtime ties go to the lexicographically smallest strategy key, so the
    partition is invariant under uniform positive scaling of runtimes.
    """
    best: dict[str, tuple[float, str]] = {}
    for (key, pid), o in matrix.cells.items():
        if o.verdict != SOLVED:
            continue
        cand = (o.runtime_s, key)
        if pid not in best or cand < best[pid]:
            best[pid] = cand
    partition: Partition = {}
    for pid, (_, key) in best.items():
        partition.setdefault(key, set()).add(pid)
    return partition


def merge(matrices: Sequence[EvalMatrix]) -> SolvedView:
    """Combine matrices into one coverage view keyed (variant, limit, strategy).

    Problem identity is variant-independent.  Two matrices may overlap, but a
    shared cell must carry the same verdict; a disagreement is a merge error.
    """
    seen: dict[tuple[str, float, str, str], str] = {}
    view: SolvedView = {}
    for m in matrices:
        for (key, pid), o in m.cells.items():
            ident = (m.variant, m.limit_s, key, pid)
            prev = seen.get(ident)
            if prev is not None and prev != o.verdict:
                raise MergeError(
                    f"conflicting verdicts for strategy {key!r} on problem {pid!r} "
                    f"at ({m.variant!r}, {m.limit_s})"
                )
            seen[ident] = o.verdict
        for key in m.registry:
            label = (m.variant, m.limit_s, key)
            view.setdefault(label, set()).update(m.solved_set(key))
    return view


# -- persistence --------------------------------------------------------------


def save_matrix(path: str | Path, matrix: EvalMatrix) -> None:
    """One header record, then outcome records sorted for byte stability."""
    header = {
        "kind": "matrix",
        "schema_version": MATRIX_SCHEMA_VERSION,
        "variant": matrix.variant,
        "limit_s": matrix.limit_s,
        "strategies": {
            key: {"label": s.label, "options": s.assignment(), "space": s.space.name}
            for key, s in matrix.registry.items()
        },
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for slot in sorted(matrix.cells):
            fh.write(json.dumps(outcome_to_record(matrix.cells[slot]), sort_keys=True) + "\n")


def load_matrix(path: str | Path, space: StrategySpace) -> EvalMatrix:
    with open(path) as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise MatrixError(f"empty matrix file: {path}")
    header = json.loads(lines[0])
    if header.get("kind") != "matrix":
        raise MatrixError(f"not a matrix file: {path}")
    if header.get("schema_version") != MATRIX_SCHEMA_VERSION:
        raise MatrixError(f"unsupported matrix schema version in {path}")
    registry = {
        key: space.strategy(entry.get("options", {}), entry.get("label"))
        for key, entry in header.get("strategies", {}).items()
    }
    cells = {}
    for line in lines[1:]:
        o = record_to_outcome(json.loads(line))
        cells[(o.strategy_key, o.problem_id)] = o
    return EvalMatrix(float(header["limit_s"]), header["variant"], cells, registry)

"""Portfolio construction and reporting: greedy set cover over solved sets,
timeout escalation, table rendering, and option-frequency analysis.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Mapping, Sequence

from .evaluation import EvalMatrix, SolvedView, evaluate_portfolio, merge
from .runner import CacheKey, EvalOutcome, ProblemRef
from .space import Strategy


class ReportError(ValueError):
    """Raised for inconsistent report inputs."""


@dataclass(frozen=True)
class CoverItem:
    """One candidate for the cover: a strategy run at a (variant, limit)."""

    variant: str
    limit_s: float
    strategy_key: str
    solved: frozenset[str]

    @property
    def label(self) -> tuple[str, float, str]:
        return (self.variant, self.limit_s, self.strategy_key)


@dataclass(frozen=True)
class CoverStep:
    """One greedy step.  addon_pct is addon over the cumulative total before
    this step, undefined (None) for the first step; new counts solved problems
    from an optional baseline-unsolved set."""

    variant: str
    limit_s: float
    strategy_key: str
    addon: int
    addon_pct: float | None
    total: int
    alone: int
    new: int | None = None


def items_from_view(view: SolvedView) -> list[CoverItem]:
    """Cover items in view insertion order (merge preserves input order)."""
    return [
        CoverItem(variant, limit_s, key, frozenset(solved))
        for (variant, limit_s, key), solved in view.items()
    ]


def greedy_cover(items: Sequence[CoverItem],
                 baseline_unsolved: set[str] | frozenset[str] | None = None) -> list[CoverStep]:
    """Greedy set cover by maximal marginal gain.

    Ties go to the earliest input position; the cover stops at the first step
    whose best marginal gain is zero.
    """
    covered: set[str] = set()
    remaining = list(items)
    steps: list[CoverStep] = []
    while remaining:
        best_gain = 0
        best_pos = None
        for pos, item in enumerate(remaining):
            gain = len(item.solved - covered)
            if gain > best_gain:
                best_gain, best_pos = gain, pos
        if best_pos is None:
            break
        item = remaining.pop(best_pos)
        prev_total = len(covered)
        covered |= item.solved
        steps.append(CoverStep(
            variant=item.variant,
            limit_s=item.limit_s,
            strategy_key=item.strategy_key,
            addon=best_gain,
            addon_pct=(best_gain / prev_total) if steps else None,
            total=len(covered),
            alone=len(item.solved),
            new=len(item.solved & baseline_unsolved) if baseline_unsolved is not None else None,
        ))
    return steps


def escalate(
    pool: Sequence[EvalMatrix],
    high_limit_s: float,
    backend,
    problems_by_variant: Mapping[str, Sequence[ProblemRef]],
    workers: int = 1,
    cache: Mapping[CacheKey, EvalOutcome] | None = None,
    log_path: str | Path | None = None,
    max_evaluations: int | None = None,
    only_unsolved: bool = False,
) -> tuple[list[CoverItem], list[CoverStep], list[EvalMatrix]]:
    """Iteratively re-evaluate the best cover strategies at a higher limit.

    Each round recomputes the greedy cover and picks its highest-gain
    strategy not yet evaluated at high_limit_s; that strategy runs over the
    variant's whole problem set (or, with only_unsolved, just the problems
    outside the current cover, which skews the alone column but saves time).
    Stops when candidates run out, the last evaluation covered nothing new,
    or max_evaluations is reached.  Returns the final items, their cover, and
    the high-limit matrices produced along the way.
    """
    matrices = list(pool)
    evaluated_high: set[tuple[str, str]] = set()
    for m in matrices:
        if m.limit_s >= high_limit_s:
            evaluated_high.update((m.variant, key) for key in m.registry)
    produced: list[EvalMatrix] = []
    rounds = 0
    while True:
        if max_evaluations is not None and rounds >= max_evaluations:
            break
        view = merge(matrices)
        steps = greedy_cover(items_from_view(view))
        candidate = None
        for step in steps:
            if (step.variant, step.strategy_key) not in evaluated_high:
                candidate = step
                break
        if candidate is None:
            break
        strategy = None
        for m in matrices:
            if m.variant == candidate.variant and candidate.strategy_key in m.registry:
                strategy = m.registry[candidate.strategy_key]
                break
        assert strategy is not None
        if candidate.variant not in problems_by_variant:
            raise ReportError(f"no problem set for variant {candidate.variant!r}")
        problems = list(problems_by_variant[candidate.variant])
        covered_before = set().union(*view.values()) if view else set()
        if only_unsolved:
            problems = [p for p in problems if p.pid not in covered_before]
            if not problems:
                break
        high = evaluate_portfolio([strategy], problems, backend, high_limit_s,
                                  candidate.variant, workers, cache, log_path)
        matrices.append(high)
        produced.append(high)
        evaluated_high.add((candidate.variant, candidate.strategy_key))
        rounds += 1
        if high.solved_set(candidate.strategy_key) <= covered_before:
            break
    final_view = merge(matrices)
    final_items = items_from_view(final_view)
    return final_items, greedy_cover(final_items), produced


# -- rendering ----------------------------------------------------------------


def _format_limit(limit_s: float) -> str:
    return str(int(limit_s)) if float(limit_s).is_integer() else str(limit_s)


def format_pct(fraction: float | None) -> str:
    """Percentage with two decimals, rounded half-up; '-' when undefined."""
    if fraction is None:
        return "-"
    value = Decimal(repr(fraction * 100)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return f"{value}%"


def _step_row(step: CoverStep) -> list[str]:
    return [
        step.variant,
        _format_limit(step.limit_s),
        step.strategy_key,
        str(step.addon),
        format_pct(step.addon_pct),
        str(step.total),
        str(step.alone),
        "" if step.new is None else str(step.new),
    ]


REPORT_COLUMNS = ["version", "timeout", "strat", "addon", "addon_pct", "total", "alone", "new"]


def render_report(steps: Sequence[CoverStep], fmt: str = "csv") -> str:
    """Bit-stable cover table, either CSV or aligned text."""
    rows = [_step_row(s) for s in steps]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise ReportError(f"unknown report format: {fmt!r}")
    display = []
    for row in rows:
        row = list(row)
        row[3] = f"+{row[3]}"
        if row[4] not in ("-", ""):
            row[4] = f"+{row[4]}"
        if row[7] == "":
            row[7] = "-"
        display.append(row)
    table = [REPORT_COLUMNS] + display
    widths = [max(len(r[i]) for r in table) for i in range(len(REPORT_COLUMNS))]
    lines = [
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in table
    ]
    return "\n".join(lines) + "\n"


def progress_to_csv(records: Sequence[Mapping[str, Any]]) -> str:
    """Plot-ready CSV (elapsed_s, new, total) from evaluation progress records."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["elapsed_s", "new", "total"])
    for rec in records:
        if rec.get("event") != "evaluated":
            continue
        writer.writerow([rec["elapsed_s"], rec["new"], rec["total"]])
    return buf.getvalue()


# -- analysis -----------------------------------------------------------------


def option_frequency(strategies: Sequence[Strategy]) -> dict[tuple[str, str], float]:
    """Fraction of strategies carrying each active (parameter, value) pair.

    Inactive parameters do not count.  Entries are ordered by descending
    frequency, then parameter and value name.  All strategies must share one
    space; mixing spaces would make the counts meaningless.
    """
    if not strategies:
        raise ReportError("option_frequency needs at least one strategy")
    space = strategies[0].space
    for s in strategies[1:]:
        if s.space != space:
            raise ReportError("strategies from different spaces cannot be compared")
    counts: dict[tuple[str, str], int] = {}
    for s in strategies:
        active = s.active_params()
        for name, value in s.assignment().items():
            if name in active:
                counts[(name, value)] = counts.get((name, value), 0) + 1
    n = len(strategies)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))
    return {pair: count / n for pair, count in ordered}

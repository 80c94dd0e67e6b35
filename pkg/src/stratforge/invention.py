"""The invention campaign: evaluate a portfolio at the full limit, pick the
strategy with the largest win set, specialize it on that win set under a
reduced limit, fold any genuinely new strategy back into the portfolio, and
repeat until nothing is left to specialize or the wall budget runs out.

A specialization that lands on an already-known strategy still marks its
target as specialized, so the loop cannot retry the same target forever.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

from .evaluation import EvalMatrix, best_partition, evaluate_portfolio
from .runner import EvalOutcome, ProblemRef, outcome_to_record, record_to_outcome
from .space import Strategy, StrategySpace, load_space, space_to_doc
from .tuner import SEED_STRIDE, TunerConfig, tune

CHECKPOINT_SCHEMA_VERSION = 1

TunerFn = Callable[..., Strategy]


class CampaignError(ValueError):
    """Raised for invalid campaign configuration."""


class CheckpointError(ValueError):
    """Raised when a checkpoint cannot be loaded."""


@dataclass(frozen=True)
class Provenance:
    """Where a portfolio strategy came from.

    Invented strategies record the parent's canonical key, the size of the
    win set they were tuned on, and the campaign-elapsed time of invention.
    """

    kind: str
    parent_key: str | None = None
    win_set_size: int | None = None
    invented_at_s: float | None = None


@dataclass(frozen=True)
class PortfolioEntry:
    strategy: Strategy
    provenance: Provenance


@dataclass
class Counters:
    specializations_total: int = 0
    specializations_failed: int = 0

    @property
    def invented(self) -> int:
        return self.specializations_total - self.specializations_failed


@dataclass(frozen=True)
class CampaignConfig:
    """Inputs of one campaign.

    eval_limit_s is the full evaluation limit and must not be below the
    tuner's per-run limit; wall_budget_s caps total campaign time on the
    backend's clock (virtual for synthetic backends, wall for external).
    """

    space: StrategySpace
    initial: tuple[Strategy, ...]
    problems: tuple[ProblemRef, ...]
    eval_limit_s: float
    wall_budget_s: float
    tuner: TunerConfig
    variant: str = "default"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.eval_limit_s < self.tuner.limit_s:
            raise CampaignError("eval_limit_s must be at least the tuner limit")
        if self.tuner.limit_s <= 0:
            raise CampaignError("tuner limit must be positive")
        if self.wall_budget_s <= 0:
            raise CampaignError("wall_budget_s must be positive")


@dataclass
class CampaignState:
    """Everything the loop needs to continue: the portfolio with provenance,
    the evaluation matrix at the full limit, which strategies have been
    specialized, counters, the progress log, and elapsed campaign time."""

    space: StrategySpace
    variant: str
    eval_limit_s: float
    portfolio: list[PortfolioEntry]
    matrix: EvalMatrix
    specialized: set[str]
    counters: Counters
    progress: list[dict[str, Any]]
    elapsed_s: float = 0.0

    def portfolio_keys(self) -> list[str]:
        return [e.strategy.canonical_key() for e in self.portfolio]


def fresh_state(config: CampaignConfig) -> CampaignState:
    portfolio = []
    seen: set[str] = set()
    for s in config.initial:
        key = s.canonical_key()
        if key in seen:
            raise CampaignError(f"duplicate initial strategy: {key!r}")
        seen.add(key)
        portfolio.append(PortfolioEntry(s, Provenance("initial")))
    empty = EvalMatrix(config.eval_limit_s, config.variant, {}, {})
    return CampaignState(
        space=config.space,
        variant=config.variant,
        eval_limit_s=config.eval_limit_s,
        portfolio=portfolio,
        matrix=empty,
        specialized=set(),
        counters=Counters(),
        progress=[],
    )


def select_target(state: CampaignState) -> str | None:
    """Unspecialized strategy with the largest win set; ties go to the
    lexicographically smallest key; None when no candidate has a win set."""
    partition = best_partition(state.matrix)
    best_key = None
    best_size = 0
    for key in state.portfolio_keys():
        if key in state.specialized:
            continue
        size = len(partition.get(key, ()))
        if size > best_size or (size == best_size and size > 0
                                and best_key is not None and key < best_key):
            best_key, best_size = key, size
    return best_key


def most_complementary(items_or_steps, count: int = 2) -> list[str]:
    """Strategy keys of the first greedy-cover steps: the canonical way to
    pick the most complementary subset of a baseline portfolio."""
    from .report import CoverItem, greedy_cover

    steps = items_or_steps
    if steps and isinstance(steps[0], CoverItem):
        steps = greedy_cover(steps)
    return [s.strategy_key for s in steps[:count]]


def select_initial(matrix: EvalMatrix, count: int, mode: str = "cover") -> list[Strategy]:
    """Pick a starting portfolio from an evaluated baseline.

    mode "cover" takes the first greedy-cover steps (complementary sets);
    mode "solo" ranks by individual solved count.
    """
    from .report import CoverItem, greedy_cover

    if mode == "solo":
        ranked = sorted(
            matrix.registry,
            key=lambda key: (-len(matrix.solved_set(key)), key),
        )
        keys = ranked[:count]
    elif mode == "cover":
        items = [
            CoverItem(matrix.variant, matrix.limit_s, key, frozenset(matrix.solved_set(key)))
            for key in matrix.registry
        ]
        keys = [s.strategy_key for s in greedy_cover(items)[:count]]
    else:
        raise CampaignError(f"unknown selection mode: {mode!r}")
    return [matrix.registry[k] for k in keys]


def _append_progress(state: CampaignState, record: dict[str, Any],
                     progress_path: str | Path | None) -> None:
    state.progress.append(record)
    if progress_path is not None:
        with open(progress_path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def invent(
    config: CampaignConfig,
    backend,
    state: CampaignState | None = None,
    checkpoint_path: str | Path | None = None,
    progress_path: str | Path | None = None,
    tuner_fn: TunerFn = tune,
) -> CampaignState:
    """Run the campaign loop, resuming from state when given.

    Newly invented strategies are evaluated at the full limit immediately,
    before the next target is selected.  The budget is checked before every
    evaluation and every tuner call, so the campaign overruns wall_budget_s
    by at most the duration of the operation in flight.  tuner_fn may swap in
    an external tuner with the same (seed, problems, config, backend,
    variant) interface.
    """
    if state is None:
        state = fresh_state(config)
    clock_mark = backend.clock_elapsed_s
    base_elapsed = state.elapsed_s

    def now() -> float:
        return round(base_elapsed + (backend.clock_elapsed_s - clock_mark), 6)

    def out_of_budget() -> bool:
        return now() >= config.wall_budget_s

    path_by_pid = {p.pid: p for p in config.problems}

    try:
        stopped = False
        while not stopped:
            # Evaluate portfolio strategies that have no cells yet, one at a
            # time so the progress log gets one record per strategy.
            for entry in list(state.portfolio):
                key = entry.strategy.canonical_key()
                if key in state.matrix.registry or not config.problems:
                    continue
                if out_of_budget():
                    stopped = True
                    break
                before = state.matrix.solved_union()
                addition = evaluate_portfolio(
                    [entry.strategy], config.problems, backend,
                    config.eval_limit_s, config.variant, config.workers,
                )
                state.matrix = state.matrix.extended(addition)
                after = state.matrix.solved_union()
                _append_progress(state, {
                    "elapsed_s": now(),
                    "event": "evaluated",
                    "strategy_key": key,
                    "new": len(after) - len(before),
                    "total": len(after),
                }, progress_path)
            state.elapsed_s = now()
            if stopped:
                break
            target_key = select_target(state)
            if target_key is None or out_of_budget():
                break
            partition = best_partition(state.matrix)
            win_set = sorted(partition[target_key])
            win_problems = [path_by_pid[pid] for pid in win_set]
            call_seed = config.tuner.rng_seed * SEED_STRIDE + state.counters.specializations_total
            call_config = replace(config.tuner, rng_seed=call_seed)
            result = tuner_fn(state.matrix.registry[target_key], win_problems,
                              call_config, backend, config.variant)
            state.counters.specializations_total += 1
            result_key = result.canonical_key()
            if result_key in state.portfolio_keys():
                state.counters.specializations_failed += 1
                _append_progress(state, {
                    "elapsed_s": now(),
                    "event": "specialization_failed",
                    "strategy_key": target_key,
                    "new": 0,
                    "total": len(state.matrix.solved_union()),
                }, progress_path)
            else:
                label = f"inv{state.counters.invented:03d}"
                invented = replace(result, label=label)
                state.portfolio.append(PortfolioEntry(
                    invented,
                    Provenance("invented", parent_key=target_key,
                               win_set_size=len(win_set), invented_at_s=now()),
                ))
                _append_progress(state, {
                    "elapsed_s": now(),
                    "event": "invented",
                    "strategy_key": result_key,
                    "new": 0,
                    "total": len(state.matrix.solved_union()),
                }, progress_path)
            state.specialized.add(target_key)
            state.elapsed_s = now()
            if checkpoint_path is not None:
                checkpoint(state, checkpoint_path)
    except Exception:
        state.elapsed_s = now()
        if checkpoint_path is not None:
            checkpoint(state, checkpoint_path)
        raise
    state.elapsed_s = now()
    if checkpoint_path is not None:
        checkpoint(state, checkpoint_path)
    return state


# -- checkpointing ------------------------------------------------------------


def _provenance_to_doc(p: Provenance) -> dict[str, Any]:
    return {
        "kind": p.kind,
        "parent_key": p.parent_key,
        "win_set_size": p.win_set_size,
        "invented_at_s": p.invented_at_s,
    }


def checkpoint(state: CampaignState, path: str | Path) -> None:
    """Atomic snapshot: write to a temp file, then rename over the target."""
    doc = {
        "kind": "campaign",
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "space": space_to_doc(state.space),
        "variant": state.variant,
        "eval_limit_s": state.eval_limit_s,
        "elapsed_s": state.elapsed_s,
        "counters": {
            "specializations_total": state.counters.specializations_total,
            "specializations_failed": state.counters.specializations_failed,
        },
        "specialized": sorted(state.specialized),
        "portfolio": [
            {
                "label": e.strategy.label,
                "options": e.strategy.assignment(),
                "provenance": _provenance_to_doc(e.provenance),
            }
            for e in state.portfolio
        ],
        "cells": [
            outcome_to_record(state.matrix.cells[slot])
            for slot in sorted(state.matrix.cells)
        ],
        "registry_order": list(state.matrix.registry),
        "progress": state.progress,
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    os.replace(tmp, path)


def resume(path: str | Path) -> CampaignState:
    """Rebuild campaign state from a checkpoint; the space travels inside."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot load checkpoint: {e}") from None
    if not isinstance(doc, dict) or doc.get("kind") != "campaign":
        raise CheckpointError(f"not a campaign checkpoint: {path}")
    if doc.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint schema version: {doc.get('schema_version')!r}"
        )
    try:
        space = load_space(doc["space"])
        portfolio = []
        for entry in doc["portfolio"]:
            strategy = space.strategy(entry["options"], entry["label"])
            prov = Provenance(**entry["provenance"])
            portfolio.append(PortfolioEntry(strategy, prov))
        by_key = {e.strategy.canonical_key(): e.strategy for e in portfolio}
        registry = {key: by_key[key] for key in doc["registry_order"]}
        cells = {}
        for rec in doc["cells"]:
            o = record_to_outcome(rec)
            cells[(o.strategy_key, o.problem_id)] = o
        matrix = EvalMatrix(float(doc["eval_limit_s"]), doc["variant"], cells, registry)
        counters = Counters(**doc["counters"])
        return CampaignState(
            space=space,
            variant=doc["variant"],
            eval_limit_s=float(doc["eval_limit_s"]),
            portfolio=portfolio,
            matrix=matrix,
            specialized=set(doc["specialized"]),
            counters=counters,
            progress=list(doc["progress"]),
            elapsed_s=float(doc["elapsed_s"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from None

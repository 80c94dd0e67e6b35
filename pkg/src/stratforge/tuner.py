"""Strategy tuning by iterated local search over one-exchange neighborhoods.

Scoring is lexicographic: more problems solved wins, then less total time
over the solved ones.  The search keeps two notions of progress: a *home*
strategy that accepts equal-or-better candidates (so plateaus can drift) and
the returned *best*, replaced only on strict improvement, so a seed that no
candidate strictly beats is returned unchanged.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from .runner import SOLVED, ProblemRef, Task, run_jobs
from .space import Strategy

# Multiplier for deriving per-call seeds from a base seed and a call index.
SEED_STRIDE = 100003

# Consecutive search rounds allowed to score nothing fresh before tuning
# stops: at that point everything the search keeps reaching is cached, and
# only budget would be burned re-visiting it.  Keeps small, fully explored
# spaces from spinning forever while leaving one unlucky round harmless.
STAGNATION_LIMIT = 25


class TunerError(ValueError):
    """Raised for invalid tuner configuration."""


@dataclass(frozen=True)
class Objective:
    """(solved, total_time_s): compared lexicographically, more solved first."""

    solved: int
    total_time_s: float

    def sort_key(self) -> tuple[int, float]:
        return (-self.solved, self.total_time_s)

    def better_than(self, other: Objective) -> bool:
        return self.sort_key() < other.sort_key()

    def at_least(self, other: Objective) -> bool:
        return self.sort_key() <= other.sort_key()


@dataclass(frozen=True)
class TunerConfig:
    """Search budget and knobs for one tuning session.

    limit_s is the per-run limit while tuning (typically well below the
    evaluation limit); eval_budget caps distinct strategies scored.  The
    perturbation strength and restart probability are modest defaults that
    worked well in practice, not tuned constants.
    """

    limit_s: float
    eval_budget: int = 500
    wall_budget_s: float | None = None
    perturb_strength: int = 3
    restart_prob: float = 0.01
    rng_seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.limit_s <= 0:
            raise TunerError("limit_s must be positive")
        if self.eval_budget < 0:
            raise TunerError("eval_budget must be non-negative")
        if self.perturb_strength < 0:
            raise TunerError("perturb_strength must be non-negative")
        if not 0.0 <= self.restart_prob <= 1.0:
            raise TunerError("restart_prob must be a probability")
        if self.workers < 1:
            raise TunerError("workers must be >= 1")


class Tuner:
    """One tuning session: memoized scoring, local search, iterated restarts.

    A strategy is never re-scored within a session; only fresh canonical keys
    consume eval_budget.  With a synthetic backend the whole trajectory is a
    deterministic function of the seed.
    """

    def __init__(self, problems: Sequence[ProblemRef], config: TunerConfig,
                 backend, variant: str = "default"):
        if not problems:
            raise TunerError("tuning needs a non-empty problem set")
        self.problems = list(problems)
        self.config = config
        self.backend = backend
        self.variant = variant
        self.trace: list[dict[str, Any]] = []
        self._rng = random.Random(config.rng_seed)
        self._cache: dict[str, Objective] = {}
        self._evals = 0
        self._best: tuple[Objective, Strategy] | None = None
        self._t0 = time.monotonic()

    @property
    def evals_used(self) -> int:
        return self._evals

    def _wall_exceeded(self) -> bool:
        budget = self.config.wall_budget_s
        return budget is not None and time.monotonic() - self._t0 >= budget

    def score(self, strategy: Strategy) -> Objective | None:
        """Objective of one strategy, or None once the budget is exhausted.

        Cache hits are free; a fresh canonical key costs one budget unit and
        appends a trace record.
        """
        key = strategy.canonical_key()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self._evals >= self.config.eval_budget or self._wall_exceeded():
            return None
        tokens = strategy.render()
        jobs = [
            (Task(p.pid, p.path, key, tokens, self.config.limit_s, self.variant), strategy)
            for p in self.problems
        ]
        outcomes = run_jobs(self.backend, jobs, self.config.workers)
        solved = sum(1 for o in outcomes if o.verdict == SOLVED)
        total = round(sum(o.runtime_s for o in outcomes if o.verdict == SOLVED), 6)
        obj = Objective(solved, total)
        self._evals += 1
        self._cache[key] = obj
        accepted = self._best is None or obj.better_than(self._best[0])
        if accepted:
            self._best = (obj, strategy)
        self.trace.append({
            "iteration": self._evals,
            "canonical_key": key,
            "solved": obj.solved,
            "total_time_s": obj.total_time_s,
            "accepted": accepted,
        })
        return obj

    def local_search(self, start: Strategy) -> Strategy:
        """First-improvement hill climbing over shuffled one-exchange moves."""
        current = start
        current_obj = self.score(current)
        if current_obj is None:
            return start
        improved = True
        while improved:
            improved = False
            neighborhood = start.space.neighbors(current)
            self._rng.shuffle(neighborhood)
            for candidate in neighborhood:
                obj = self.score(candidate)
                if obj is None:
                    return current
                if obj.better_than(current_obj):
                    current, current_obj = candidate, obj
                    improved = True
                    break
        return current

    def _perturb(self, strategy: Strategy, strength: int) -> Strategy:
        s = strategy
        params = strategy.space.params
        for _ in range(strength):
            i = self._rng.randrange(len(params))
            n_values = len(params[i].values)
            if n_values < 2:
                continue
            j = self._rng.randrange(n_values - 1)
            if j >= s.indices[i]:
                j += 1
            s = s.with_index(i, j)
        return s

    def tune(self, seed: Strategy) -> Strategy:
        """Iterated local search from the seed strategy.

        Each round perturbs the home strategy (or, with restart_prob, jumps
        to a uniform sample), descends, and accepts the result as the new
        home when not worse.  Once rounds stop scoring anything fresh the
        search ends: the budget can no longer change the outcome.
        """
        space = seed.space
        home = self.local_search(seed)
        if self._best is None:
            return seed
        stagnant = 0
        while self._evals < self.config.eval_budget and not self._wall_exceeded():
            evals_before = self._evals
            if self._rng.random() < self.config.restart_prob:
                start = space.sample_uniform(self._rng)
            else:
                start = self._perturb(home, self.config.perturb_strength)
            candidate = self.local_search(start)
            cand_obj = self._cache.get(candidate.canonical_key())
            home_obj = self._cache.get(home.canonical_key())
            if cand_obj is not None and home_obj is not None and cand_obj.at_least(home_obj):
                home = candidate
            if self._evals == evals_before:
                stagnant += 1
                if stagnant >= STAGNATION_LIMIT:
                    break
            else:
                stagnant = 0
        return self._best[1]

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def score(strategy: Strategy, problems: Sequence[ProblemRef], config: TunerConfig,
          backend, variant: str = "default") -> Objective:
    """One-shot scoring outside any session (ignores the eval budget)."""
    session = Tuner(problems, replace(config, eval_budget=1), backend, variant)
    obj = session.score(strategy)
    assert obj is not None
    return obj


def local_search(start: Strategy, problems: Sequence[ProblemRef], config: TunerConfig,
                 backend, variant: str = "default") -> tuple[Strategy, Tuner]:
    session = Tuner(problems, config, backend, variant)
    return session.local_search(start), session


def tune(seed: Strategy, problems: Sequence[ProblemRef], config: TunerConfig,
         backend, variant: str = "default",
         trace_path: str | Path | None = None) -> Strategy:
    """Convenience wrapper: run one full tuning session and return the best."""
    session = Tuner(problems, config, backend, variant)
    result = session.tune(seed)
    if trace_path is not None:
        session.write_trace(trace_path)
    return result

"""Shared fixtures and small generators used across the test suite."""

from __future__ import annotations

import itertools
import random
from pathlib import Path

import pytest

from stratforge.runner import UNSOLVED, EvalOutcome
from stratforge.space import Dependency, ParamSpec, StrategySpace

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


class ScriptedBackend:
    """Table-driven backend that counts how many runs it actually performs."""

    def __init__(self, table=None):
        self.table = table or {}
        self.calls = 0
        self._elapsed = 0.0

    def run(self, task, strategy):
        self.calls += 1
        verdict, runtime = self.table.get(
            (task.strategy_key, task.problem_id), (UNSOLVED, task.limit_s)
        )
        return EvalOutcome(task.problem_id, task.strategy_key, task.variant,
                           task.limit_s, verdict, runtime)

    def account(self, outcomes):
        for o in outcomes:
            self._elapsed += o.runtime_s

    @property
    def clock_elapsed_s(self):
        return self._elapsed


@pytest.fixture
def toy_space() -> StrategySpace:
    return StrategySpace(
        "toy",
        (
            ParamSpec("a", ("off", "on"), default_index=0),
            ParamSpec("b", ("1", "2", "3"), default_index=0),
        ),
        (Dependency("b", "a", frozenset({"on"})),),
    )


def make_random_space(rng: random.Random, n_params: int | None = None,
                      max_values: int = 4, dep_prob: float = 0.5) -> StrategySpace:
    """A random acyclic space: parents always precede children."""
    n = n_params if n_params is not None else rng.randint(2, 6)
    params = []
    for i in range(n):
        k = rng.randint(1, max_values)
        values = tuple(f"v{j}" for j in range(k))
        params.append(ParamSpec(f"p{i}", values, default_index=rng.randrange(k)))
    deps = []
    for i in range(1, n):
        if rng.random() < dep_prob:
            parent = rng.randrange(i)
            domain = params[parent].values
            size = rng.randint(1, len(domain))
            enabling = frozenset(rng.sample(domain, size))
            deps.append(Dependency(f"p{i}", f"p{parent}", enabling))
    return StrategySpace("random", tuple(params), tuple(deps))


def brute_force_canonical_count(space: StrategySpace) -> int:
    """Oracle: enumerate every total assignment and count distinct keys."""
    domains = [range(len(p.values)) for p in space.params]
    keys = set()
    for combo in itertools.product(*domains):
        from stratforge.space import Strategy

        keys.add(Strategy(space, tuple(combo)).canonical_key())
    return len(keys)

"""Acceptance gate: one test per shipped criterion, one verdict line each.

Each criterion prints `criterion NN: PASS|FAIL  <what it checks>` so the gate
can be read off a terminal without decoding pytest ids.
"""

from __future__ import annotations

import json
import random
import time
from contextlib import contextmanager

import pytest

from stratforge.cli import _items_from_logs, dispatch
from stratforge.evaluation import (
    EvalMatrix,
    best_partition,
    evaluate_portfolio,
    merge,
)
from stratforge.invention import CampaignConfig, invent
from stratforge.landscape import Landscape, SyntheticBackend, load_landscape
from stratforge.report import escalate, greedy_cover, option_frequency, render_report
from stratforge.runner import (
    SOLVED,
    TIMEOUT,
    UNSOLVED,
    EvalOutcome,
    ProblemRef,
    SolverConfig,
    Task,
    append_outcomes,
    run_batch,
)
from stratforge.space import (
    Dependency,
    ParamSpec,
    Strategy,
    StrategySpace,
    load_space,
    load_strategies,
)
from stratforge.tuner import Objective, Tuner, TunerConfig
from conftest import FIXTURES, brute_force_canonical_count, make_random_space


@contextmanager
def _verdict(capsys, number: int, what: str):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"criterion {number:2d}: FAIL  {what}", flush=True)
        raise
    with capsys.disabled():
        print(f"criterion {number:2d}: PASS  {what}", flush=True)


# -- 1: greedy cover vs a from-scratch oracle ----------------------------------


def _oracle_steps(items):
    """Recompute every marginal gain from scratch at every step."""
    covered: set[str] = set()
    used: set[int] = set()
    steps = []
    while True:
        best_gain, best_idx = 0, None
        for idx, item in enumerate(items):
            if idx in used:
                continue
            gain = len(item.solved - covered)
            if gain > best_gain:
                best_gain, best_idx = gain, idx
        if best_idx is None:
            return steps
        used.add(best_idx)
        covered |= items[best_idx].solved
        steps.append((items[best_idx].strategy_key, best_gain, len(covered)))


def test_criterion_01_greedy_cover_oracle(capsys):
    with _verdict(capsys, 1, "greedy cover matches a from-scratch oracle on "
                             "100 random instances"):
        from stratforge.report import CoverItem

        rng = random.Random(20260814)
        t0 = time.monotonic()
        for _ in range(100):
            universe = [f"m{i}" for i in range(rng.randint(1, 50))]
            items = [
                CoverItem("v", 30.0, f"--s={i}",
                          frozenset(rng.sample(universe,
                                               rng.randint(0, len(universe)))))
                for i in range(rng.randint(1, 10))
            ]
            got = [(s.strategy_key, s.addon, s.total) for s in greedy_cover(items)]
            assert got == _oracle_steps(items)
        assert time.monotonic() - t0 < 5.0


# -- 2: two-step cover fixture arithmetic --------------------------------------


def test_criterion_02_cover_fixture_arithmetic(capsys, tmp_path):
    with _verdict(capsys, 2, "cover fixture yields 3034, then +521 = 17.17% "
                             "to 3555"):
        first = [f"m{i:04d}" for i in range(3034)]
        second = first[:503] + [f"g{i:04d}" for i in range(521)]
        log = tmp_path / "fixture.jsonl"
        append_outcomes(log, [
            EvalOutcome(pid, "--first", "v1", 30.0, SOLVED, 1.0)
            for pid in first
        ])
        append_outcomes(log, [
            EvalOutcome(pid, "--second", "v1", 30.0, SOLVED, 1.0)
            for pid in second
        ])
        steps = greedy_cover(_items_from_logs([str(log)]))
        assert [(s.strategy_key, s.addon, s.total) for s in steps] == [
            ("--first", 3034, 3034),
            ("--second", 521, 3555),
        ]
        assert steps[0].addon_pct is None
        assert abs(steps[1].addon_pct * 100 - 17.17) <= 0.01
        assert ",521,17.17%,3555," in render_report(steps, "csv")


# -- 3: partition properties over random matrices ------------------------------


def test_criterion_03_partition_properties(capsys, toy_space):
    with _verdict(capsys, 3, "partitions are disjoint, exhaustive, fastest-"
                             "first, and scale-invariant on 200 matrices"):
        rng = random.Random(31337)
        opts = [{"a": "off"}, {"a": "on", "b": "1"},
                {"a": "on", "b": "2"}, {"a": "on", "b": "3"}]
        t0 = time.monotonic()
        for _ in range(200):
            registry, cells = {}, {}
            pids = [f"p{i}" for i in range(rng.randint(1, 12))]
            for o in opts:
                s = toy_space.strategy(o)
                key = s.canonical_key()
                registry[key] = s
                for pid in pids:
                    verdict = rng.choice([SOLVED, SOLVED, UNSOLVED, TIMEOUT])
                    runtime = (round(rng.uniform(0.1, 9.9), 3)
                               if verdict == SOLVED else 10.0)
                    cells[(key, pid)] = EvalOutcome(pid, key, "v", 10.0,
                                                    verdict, runtime)
            matrix = EvalMatrix(10.0, "v", cells, registry)
            part = best_partition(matrix)

            claimed = [pid for wins in part.values() for pid in wins]
            assert len(claimed) == len(set(claimed))
            assert set(claimed) == matrix.solved_union()
            for key, wins in part.items():
                for pid in wins:
                    solved_times = [
                        o.runtime_s for (k, p), o in cells.items()
                        if p == pid and o.verdict == SOLVED
                    ]
                    assert cells[(key, pid)].runtime_s == min(solved_times)

            for scale in (0.5, 2.0, 117.0):
                scaled = {
                    slot: EvalOutcome(o.problem_id, o.strategy_key, o.variant,
                                      o.limit_s, o.verdict, o.runtime_s * scale)
                    for slot, o in cells.items()
                }
                assert best_partition(EvalMatrix(10.0, "v", scaled, registry)) == part
        assert time.monotonic() - t0 < 5.0


# -- 4: tuner recovery of a planted conjunction --------------------------------


def _planted_space() -> StrategySpace:
    params = [
        ParamSpec("a", ("off", "on")),
        ParamSpec("b", ("1", "2", "3")),
        ParamSpec("c", ("slow", "fast")),
    ]
    params += [ParamSpec(f"n{i}", ("off", "on")) for i in range(9)]
    return StrategySpace("planted", tuple(params))


def _planted_landscape() -> Landscape:
    problems = {}
    for i in range(20):
        problems[f"q{i:02d}"] = [{"when": {"a": "on"}, "runtime_s": 1.0}]
    for i in range(20, 35):
        problems[f"q{i:02d}"] = [{"when": {"a": "on", "b": "3"},
                                  "runtime_s": 1.0}]
    for i in range(35, 50):
        problems[f"q{i:02d}"] = [{"when": {"a": "on", "b": "3", "c": "fast"},
                                  "runtime_s": 1.0}]
    return load_landscape({"problems": problems})


def test_criterion_04_planted_optimum_recovery(capsys):
    with _verdict(capsys, 4, "tuning recovers the planted 3-option conjunction "
                             "in >= 18/20 seeds with monotone traces"):
        space = _planted_space()
        land = _planted_landscape()
        problems = land.problem_refs()
        t0 = time.monotonic()
        hits = 0
        for seed in range(20):
            config = TunerConfig(limit_s=5.0, eval_budget=200, rng_seed=seed)
            session = Tuner(problems, config, SyntheticBackend(land))
            best = session.tune(space.default_strategy())

            solved = sum(
                1 for p in problems
                if land.outcome_for(p.pid, best)[0]
                and land.outcome_for(p.pid, best)[1] <= config.limit_s
            )
            if solved == len(problems):
                hits += 1

            running = None
            for rec in session.trace:
                obj = Objective(rec["solved"], rec["total_time_s"])
                if rec["accepted"]:
                    assert running is None or obj.better_than(running)
                    running = obj
            assert len(session.trace) <= 200
        assert hits >= 18
        assert time.monotonic() - t0 < 60.0


# -- 5: invention loop end to end ------------------------------------------------


def _niche_space() -> StrategySpace:
    params = (
        ParamSpec("mode-a", ("off", "on")),
        ParamSpec("tune-a", ("slow", "fast")),
        ParamSpec("mode-b", ("off", "on")),
        ParamSpec("tune-b", ("slow", "fast")),
        ParamSpec("n0", ("off", "on")),
        ParamSpec("n1", ("off", "on")),
        ParamSpec("n2", ("off", "on")),
        ParamSpec("n3", ("off", "on")),
    )
    deps = (
        Dependency("tune-a", "mode-a", frozenset({"on"})),
        Dependency("tune-b", "mode-b", frozenset({"on"})),
    )
    return StrategySpace("niches", params, deps)


def _niche_landscape() -> Landscape:
    problems = {}
    for i in range(70):
        problems[f"a{i:02d}"] = [
            {"when": {"mode-a": "on", "tune-a": "fast"}, "runtime_s": 1.0},
            {"when": {"mode-a": "on"}, "runtime_s": 8.0},
        ]
        problems[f"b{i:02d}"] = [
            {"when": {"mode-b": "on", "tune-b": "fast"}, "runtime_s": 1.0},
            {"when": {"mode-b": "on"}, "runtime_s": 8.0},
        ]
    for i in range(60):
        problems[f"c{i:02d}"] = [
            {"when": {"mode-a": "on", "tune-a": "fast"}, "runtime_s": 9.0},
            {"when": {"mode-b": "on", "tune-b": "fast"}, "runtime_s": 9.0},
        ]
    return load_landscape({"problems": problems})


def test_criterion_05_invention_loop(capsys):
    with _verdict(capsys, 5, "niche campaigns cover >= 95% over 10 seeds with "
                             "exact specialization accounting"):
        space = _niche_space()
        land = _niche_landscape()
        eval_limit = 10.0
        solvable = sum(
            1 for rules in land.problems.values()
            if any(r.solvable and r.runtime_s <= eval_limit for r in rules)
        )
        assert solvable == 200
        t0 = time.monotonic()
        for seed in range(10):
            config = CampaignConfig(
                space=space,
                initial=(space.strategy({"mode-a": "on"}, "nicheA"),
                         space.strategy({"mode-b": "on"}, "nicheB")),
                problems=tuple(land.problem_refs()),
                eval_limit_s=eval_limit,
                wall_budget_s=10.0**7,
                tuner=TunerConfig(limit_s=5.0, eval_budget=60, rng_seed=seed),
            )
            state = invent(config, SyntheticBackend(land))

            covered = len(state.matrix.solved_union())
            assert covered >= 0.95 * solvable

            counters = state.counters
            invented_entries = [e for e in state.portfolio
                                if e.provenance.kind == "invented"]
            assert len(invented_entries) == (counters.specializations_total
                                             - counters.specializations_failed)
            assert counters.invented >= 1

            totals = [r["total"] for r in state.progress]
            assert totals == sorted(totals)
        assert time.monotonic() - t0 < 120.0


# -- 6: timeout enforcement -------------------------------------------------------


def test_criterion_06_timeout_enforcement(capsys, tmp_path):
    with _verdict(capsys, 6, "sleepers die at the limit with runtime in "
                             "[1.0, 1.5] and no survivors"):
        import psutil

        pid_dir = tmp_path / "pids"
        pid_dir.mkdir()
        script = (
            "import os, pathlib, subprocess, sys, time; "
            "child = subprocess.Popen([sys.executable, '-c', "
            "'import time; time.sleep(10)']); "
            f"pathlib.Path({str(pid_dir)!r}, str(os.getpid())).write_text("
            "str(child.pid)); "
            "time.sleep(10)"
        )
        config = SolverConfig(
            command=("python3", "-c", script, "{problem}"),
            success_patterns=("EUREKA",),
        )
        t0 = time.monotonic()
        tasks = [Task(f"p{i}", None, "--x=1", (), limit_s=1.0) for i in range(2)]
        outcomes = run_batch(config, tasks, workers=2)
        assert time.monotonic() - t0 < 15.0
        for o in outcomes:
            assert o.verdict == TIMEOUT
            assert 1.0 <= o.runtime_s <= 1.5
        deadline = time.monotonic() + 3.0
        pids = [int(f.read_text()) for f in pid_dir.iterdir()]
        assert len(pids) == 2
        survivors = set(pids)
        while survivors and time.monotonic() < deadline:
            survivors = {
                pid for pid in survivors
                if psutil.pid_exists(pid)
                and psutil.Process(pid).status() != psutil.STATUS_ZOMBIE
            }
            time.sleep(0.05)
        assert not survivors, f"processes outlived the batch: {survivors}"


# -- 7: escalation convergence ----------------------------------------------------


def test_criterion_07_escalation_convergence(capsys, toy_space):
    with _verdict(capsys, 7, "escalation terminates, grows coverage "
                             "monotonically, and covers all reachable problems"):
        times = {"x1": 2.0, "x2": 2.0, "x3": 100.0,
                 "y4": 2.0, "y5": 300.0, "y6": 300.0,
                 "z7": 2.0, "z8": 500.0}
        land = load_landscape({"problems": {
            pid: [{"when": {"a": "on", "b": "2"}, "runtime_s": runtime}]
            for pid, runtime in times.items()
        }})
        backend = SyntheticBackend(land)
        s = toy_space.strategy({"a": "on", "b": "2"})
        by_variant = {
            "X": [ProblemRef(p) for p in ("x1", "x2", "x3")],
            "Y": [ProblemRef(p) for p in ("y4", "y5", "y6")],
            "Z": [ProblemRef(p) for p in ("z7", "z8")],
        }
        pool = [evaluate_portfolio([s], by_variant[v], backend, 30.0, v)
                for v in ("X", "Y", "Z")]

        t0 = time.monotonic()
        items, cover, produced = escalate(pool, 600.0, backend, by_variant)
        assert time.monotonic() - t0 < 30.0

        coverage = set()
        for i in range(len(produced) + 1):
            view = merge(pool + produced[:i])
            union = set().union(*view.values())
            assert coverage <= union
            coverage = union

        high_reachable = {pid for pid, rt in times.items() if rt <= 600.0}
        assert cover[-1].total == len(high_reachable)
        covered_by_steps = set()
        by_label = {i.label: i.solved for i in items}
        for step in cover:
            covered_by_steps |= by_label[(step.variant, step.limit_s,
                                          step.strategy_key)]
        assert covered_by_steps == high_reachable


# -- 8: byte-identical reruns -----------------------------------------------------


def test_criterion_08_determinism(capsys, tmp_path):
    with _verdict(capsys, 8, "two --seed 7 campaigns write byte-identical "
                             "checkpoints and progress logs"):
        t0 = time.monotonic()
        artifacts = []
        for tag in ("one", "two"):
            cp = tmp_path / f"cp-{tag}.json"
            prog = tmp_path / f"prog-{tag}.jsonl"
            code = dispatch([
                "invent", "--config", str(FIXTURES / "demo_campaign.json"),
                "--seed", "7", "--checkpoint", str(cp), "--progress", str(prog),
            ])
            assert code == 0
            artifacts.append((cp.read_bytes(), prog.read_bytes()))
        assert artifacts[0] == artifacts[1]
        assert time.monotonic() - t0 < 120.0


# -- 9: canonicalization ----------------------------------------------------------


def test_criterion_09_space_canonicalization(capsys):
    with _verdict(capsys, 9, "canonical-key equality tracks rendered tokens "
                             "and sizes match brute-force counts"):
        rng = random.Random(424242)
        t0 = time.monotonic()
        comparisons = 0
        while comparisons < 1000:
            space = make_random_space(rng, max_values=3)
            domains = [len(p.values) for p in space.params]
            for _ in range(4):
                left = Strategy(space, tuple(rng.randrange(n) for n in domains))
                right = Strategy(space, tuple(rng.randrange(n) for n in domains))
                same_key = left.canonical_key() == right.canonical_key()
                assert same_key == (left.render() == right.render())
                comparisons += 1
            if space.total_assignments() <= 1024:
                assert space.canonical_size() == brute_force_canonical_count(space)
        assert time.monotonic() - t0 < 10.0


# -- 10: option-frequency fixture ---------------------------------------------------


def test_criterion_10_option_frequency_fixture(capsys):
    with _verdict(capsys, 10, "all five bundled invented strategies carry "
                              "full-saturate-quant=on"):
        space = load_space(str(FIXTURES / "cvc5_space.json"))
        with open(FIXTURES / "invented_strategies.json") as fh:
            strategies = load_strategies(space, json.load(fh))
        assert len(strategies) == 5
        freq = option_frequency(strategies)
        assert freq[("full-saturate-quant", "on")] == 1.0

"""Solver option spaces: finite parameter domains, activation dependencies,
rendering to command-line tokens, and canonical strategy identity.

A space is a forest: every parameter has at most one controlling parent, and
a parameter contributes to the rendered command line only while its activation
chain is satisfied.  Two strategies are the same strategy exactly when their
rendered token sequences coincide, so the canonical key is the rendered
option string itself.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

REGULAR = "regular"
EXPERT = "expert"
RENDER_ASSIGN = "assign"
RENDER_FLAG = "flag"

_FLAG_ON = ("on", "true")
_FLAG_OFF = ("off", "false")


class SpaceError(ValueError):
    """Raised for malformed space documents or invalid strategies."""


@dataclass(frozen=True)
class ParamSpec:
    """One solver option: a named, finite, ordered value domain.

    render selects the token style: "assign" yields --name=value, "flag"
    yields --name / --no-name and requires an on/off-style domain.
    """

    name: str
    values: tuple[str, ...]
    default_index: int = 0
    tier: str = REGULAR
    render: str = RENDER_ASSIGN

    def __post_init__(self) -> None:
        if not self.name:
            raise SpaceError("parameter name must be non-empty")
        if not self.values:
            raise SpaceError(f"empty value domain for parameter {self.name!r}")
        if len(set(self.values)) != len(self.values):
            raise SpaceError(f"duplicate value token in parameter {self.name!r}")
        if not 0 <= self.default_index < len(self.values):
            raise SpaceError(f"default index out of range for parameter {self.name!r}")
        if self.tier not in (REGULAR, EXPERT):
            raise SpaceError(f"unknown tier {self.tier!r} for parameter {self.name!r}")
        if self.render not in (RENDER_ASSIGN, RENDER_FLAG):
            raise SpaceError(f"unknown render style {self.render!r} for parameter {self.name!r}")
        if self.render == RENDER_FLAG:
            for v in self.values:
                if v not in _FLAG_ON and v not in _FLAG_OFF:
                    raise SpaceError(
                        f"flag render requires on/off values, parameter {self.name!r} has {v!r}"
                    )

    @property
    def default(self) -> str:
        return self.values[self.default_index]

    def token(self, value: str) -> str:
        """Command-line token for one (parameter, value) assignment."""
        if self.render == RENDER_FLAG:
            return f"--{self.name}" if value in _FLAG_ON else f"--no-{self.name}"
        return f"--{self.name}={value}"


@dataclass(frozen=True)
class Dependency:
    """Activation rule: child is active only while parent holds an enabling value."""

    child: str
    parent: str
    enabling_values: frozenset[str]


@dataclass(frozen=True)
class StrategySpace:
    """An ordered set of parameters plus an acyclic, single-parent dependency forest."""

    name: str
    params: tuple[ParamSpec, ...]
    dependencies: tuple[Dependency, ...] = ()
    _index: dict[str, int] = field(init=False, repr=False, compare=False)
    _dep_by_child: dict[str, Dependency] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.params:
            raise SpaceError("space has an empty parameter list")
        index: dict[str, int] = {}
        for i, p in enumerate(self.params):
            if p.name in index:
                raise SpaceError(f"duplicate parameter name: {p.name!r}")
            index[p.name] = i
        dep_by_child: dict[str, Dependency] = {}
        for d in self.dependencies:
            if d.child not in index:
                raise SpaceError(f"unknown child parameter in dependency: {d.child!r}")
            if d.parent not in index:
                raise SpaceError(f"unknown parent parameter in dependency: {d.parent!r}")
            if d.child == d.parent:
                raise SpaceError(f"dependency child equals parent: {d.child!r}")
            if d.child in dep_by_child:
                raise SpaceError(f"multiple dependencies for child parameter: {d.child!r}")
            if not d.enabling_values:
                raise SpaceError(f"empty enabling value set for child {d.child!r}")
            domain = set(self.params[index[d.parent]].values)
            for v in d.enabling_values:
                if v not in domain:
                    raise SpaceError(
                        f"enabling value {v!r} not in domain of parent {d.parent!r}"
                    )
            dep_by_child[d.child] = d
        # Cycle check: with one parent per child, every cycle is a parent chain loop.
        for start in dep_by_child:
            seen = [start]
            node = start
            while node in dep_by_child:
                node = dep_by_child[node].parent
                if node in seen:
                    raise SpaceError(
                        "cyclic dependency: " + " -> ".join(seen + [node])
                    )
                seen.append(node)
        # Distinct (param, value) pairs must render distinct tokens, otherwise
        # canonical keys would conflate different strategies.
        tokens: dict[str, str] = {}
        for p in self.params:
            for v in p.values:
                t = p.token(v)
                if t in tokens:
                    raise SpaceError(
                        f"ambiguous render token {t!r} shared by parameters "
                        f"{tokens[t]!r} and {p.name!r}"
                    )
                tokens[t] = p.name
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_dep_by_child", dep_by_child)

    # -- lookups ---------------------------------------------------------

    def param(self, name: str) -> ParamSpec:
        try:
            return self.params[self._index[name]]
        except KeyError:
            raise SpaceError(f"unknown parameter: {name!r}") from None

    def index_of(self, name: str) -> int:
        if name not in self._index:
            raise SpaceError(f"unknown parameter: {name!r}")
        return self._index[name]

    def dependency_of(self, child: str) -> Dependency | None:
        return self._dep_by_child.get(child)

    # -- strategy construction -------------------------------------------

    def default_strategy(self, label: str | None = None) -> Strategy:
        return Strategy(self, tuple(p.default_index for p in self.params), label)

    def strategy(self, options: Mapping[str, str] | None = None,
                 label: str | None = None) -> Strategy:
        """Build a total assignment from defaults plus explicit option choices."""
        indices = [p.default_index for p in self.params]
        for name, value in (options or {}).items():
            i = self.index_of(name)
            p = self.params[i]
            if value not in p.values:
                raise SpaceError(f"value {value!r} not in domain of parameter {name!r}")
            indices[i] = p.values.index(value)
        return Strategy(self, tuple(indices), label)

    def sample_uniform(self, rng: int | random.Random) -> Strategy:
        """Sample every parameter independently and uniformly.

        Deterministic for a fixed integer seed or a caller-owned Random.
        """
        r = random.Random(rng) if isinstance(rng, int) else rng
        return Strategy(self, tuple(r.randrange(len(p.values)) for p in self.params))

    def neighbors(self, strategy: Strategy) -> list[Strategy]:
        """All one-exchange moves, in declaration order: sum(|values|-1) many."""
        out: list[Strategy] = []
        for i, p in enumerate(self.params):
            for j in range(len(p.values)):
                if j != strategy.indices[i]:
                    out.append(strategy.with_index(i, j))
        return out

    # -- size --------------------------------------------------------------

    def canonical_size(self) -> int:
        """Number of distinct canonical keys over all total assignments.

        Computed exactly by a forest product: an inactive subtree contributes
        a single (empty) rendering regardless of its assigned values.
        """
        children: dict[str, list[Dependency]] = {}
        for d in self.dependencies:
            children.setdefault(d.parent, []).append(d)
        memo: dict[str, int] = {}

        def count(name: str) -> int:
            if name in memo:
                return memo[name]
            total = 0
            for v in self.param(name).values:
                prod = 1
                for dep in children.get(name, ()):
                    if v in dep.enabling_values:
                        prod *= count(dep.child)
                total += prod
            memo[name] = total
            return total

        size = 1
        for p in self.params:
            if p.name not in self._dep_by_child:
                size *= count(p.name)
        return size

    def total_assignments(self) -> int:
        n = 1
        for p in self.params:
            n *= len(p.values)
        return n


@dataclass(frozen=True)
class Strategy:
    """A total assignment over a space, stored as value indices in parameter order."""

    space: StrategySpace
    indices: tuple[int, ...]
    label: str | None = None

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.space.params):
            raise SpaceError("assignment must cover every parameter exactly once")
        for p, i in zip(self.space.params, self.indices):
            if not 0 <= i < len(p.values):
                raise SpaceError(f"value index out of range for parameter {p.name!r}")

    def value(self, name: str) -> str:
        i = self.space.index_of(name)
        return self.space.params[i].values[self.indices[i]]

    def assignment(self) -> dict[str, str]:
        """Full name -> value-token mapping, in declaration order."""
        return {p.name: p.values[i] for p, i in zip(self.space.params, self.indices)}

    def with_index(self, param_index: int, value_index: int) -> Strategy:
        indices = list(self.indices)
        indices[param_index] = value_index
        return replace(self, indices=tuple(indices), label=None)

    def with_value(self, name: str, value: str) -> Strategy:
        i = self.space.index_of(name)
        p = self.space.params[i]
        if value not in p.values:
            raise SpaceError(f"value {value!r} not in domain of parameter {name!r}")
        return self.with_index(i, p.values.index(value))

    def active_params(self) -> frozenset[str]:
        """Names of parameters whose activation chain is satisfied."""
        state: dict[str, bool] = {}

        def is_active(name: str) -> bool:
            if name in state:
                return state[name]
            dep = self.space.dependency_of(name)
            if dep is None:
                res = True
            else:
                res = is_active(dep.parent) and self.value(dep.parent) in dep.enabling_values
            state[name] = res
            return res

        return frozenset(p.name for p in self.space.params if is_active(p.name))

    def render(self) -> tuple[str, ...]:
        """One token per active parameter, defaults included, declaration order."""
        active = self.active_params()
        return tuple(
            p.token(p.values[i])
            for p, i in zip(self.space.params, self.indices)
            if p.name in active
        )

    def canonical_key(self) -> str:
        """Identity of the strategy: the rendered option string."""
        return " ".join(self.render())


# -- document handling ------------------------------------------------------


def _parse_param(entry: Mapping[str, Any]) -> tuple[ParamSpec, str]:
    """Returns the parsed parameter plus its effective tier (tier_override wins)."""
    try:
        name = entry["name"]
        raw_values = entry["values"]
    except KeyError as e:
        raise SpaceError(f"parameter entry missing field {e.args[0]!r}") from None
    values = tuple(str(v) for v in raw_values)
    default = entry.get("default", 0)
    if isinstance(default, bool):
        raise SpaceError(f"default for parameter {name!r} must be a value or an index")
    if isinstance(default, int):
        default_index = default
    else:
        if str(default) not in values:
            raise SpaceError(f"default index out of range for parameter {name!r}")
        default_index = values.index(str(default))
    tier = entry.get("tier", REGULAR)
    effective = entry.get("tier_override", tier)
    spec = ParamSpec(
        name=str(name),
        values=values,
        default_index=default_index,
        tier=tier,
        render=entry.get("render", RENDER_ASSIGN),
    )
    return spec, effective


def load_space(source: str | Path | Mapping[str, Any], tier: str | None = None) -> StrategySpace:
    """Parse and validate a space document.

    source may be a JSON file path or an already-decoded mapping.  With
    tier="regular", expert parameters are dropped after full validation and
    any dependency touching a dropped parameter is dropped with it.
    """
    if isinstance(source, Mapping):
        doc: Mapping[str, Any] = source
    else:
        try:
            text = Path(source).read_text()
        except OSError as e:
            raise SpaceError(f"cannot read space document: {e}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise SpaceError(f"parse error in space document: {e}") from None
    if not isinstance(doc, Mapping):
        raise SpaceError("space document must be a JSON object")

    raw_params = doc.get("params", [])
    parsed = [_parse_param(p) for p in raw_params]
    deps = tuple(
        Dependency(
            child=str(d["child"]),
            parent=str(d["parent"]),
            enabling_values=frozenset(str(v) for v in d.get("when", ())),
        )
        for d in doc.get("deps", ())
    )
    name = str(doc.get("name", "space"))
    # Validate the full document before any tier filtering.
    space = StrategySpace(name, tuple(p for p, _ in parsed), deps)
    if tier in (None, "full"):
        return space
    if tier != REGULAR:
        raise SpaceError(f"unknown tier filter: {tier!r}")
    keep = {p.name for p, eff in parsed if eff == REGULAR}
    params = tuple(p for p, _ in parsed if p.name in keep)
    kept_deps = tuple(d for d in deps if d.child in keep and d.parent in keep)
    return StrategySpace(name, params, kept_deps)


def space_to_doc(space: StrategySpace) -> dict[str, Any]:
    """Inverse of load_space for an unfiltered space (round-trips semantically)."""
    return {
        "name": space.name,
        "params": [
            {
                "name": p.name,
                "values": list(p.values),
                "default": p.default,
                "tier": p.tier,
                "render": p.render,
            }
            for p in space.params
        ],
        "deps": [
            {"child": d.child, "parent": d.parent, "when": sorted(d.enabling_values)}
            for d in space.dependencies
        ],
    }


def strategy_to_doc(strategy: Strategy) -> dict[str, Any]:
    return {"label": strategy.label, "options": strategy.assignment()}


def load_strategies(space: StrategySpace,
                    source: str | Path | Mapping[str, Any]) -> list[Strategy]:
    """Load labeled strategies from a document.

    Accepts {"strategies": [{label, options}, ...]} or a single {label, options}
    entry; omitted options take their defaults.
    """
    if isinstance(source, Mapping):
        doc: Mapping[str, Any] = source
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise SpaceError(f"cannot load strategy document: {e}") from None
    entries: Iterable[Mapping[str, Any]]
    if "strategies" in doc:
        entries = doc["strategies"]
    else:
        entries = [doc]
    out = []
    for entry in entries:
        out.append(space.strategy(entry.get("options", {}), entry.get("label")))
    return out


def save_strategies(path: str | Path, strategies: Sequence[Strategy]) -> None:
    doc = {"strategies": [strategy_to_doc(s) for s in strategies]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

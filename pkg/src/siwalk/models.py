"""Walk models and their history-conditional one-step laws.

Three interacting models share one interface, plus the non-interacting
base walk used as the ``beta = 0`` reference:

* ``ExcitedWalk`` -- nearest-neighbour walk with first-coordinate drift
  ``beta/d`` on the first visit to a site, uniform afterwards.
* ``ReinforcedWalk`` -- directed edge weights with non-zero initial drift;
  a traversed edge gains reinforcement from a bounded sequence (default:
  once-reinforcement, a single increment on first traversal).
* ``PartialEnvironmentWalk`` -- annealed walk in a site-wise i.i.d.
  environment with finite support; the conditional law is the exact Bayes
  posterior mean given the departures recorded from the current site.

The conditional law of any model is a function of the history path only
through translation-invariant statistics (visited sites, directed-edge
traversal counts, per-site departure multisets).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence, Union

Coords = tuple[int, ...]
StepLaw = dict[Coords, float]

LAW_TOL = 1e-12


class ConfigError(ValueError):
    """A model configuration violates the schema or a model invariant."""


def _as_step(obj, dim: int) -> Coords:
    step = tuple(int(c) for c in obj)
    if len(step) != dim:
        raise ConfigError(f"step {step} has {len(step)} coordinates, expected {dim}")
    return step


def unit_steps(dim: int) -> list[Coords]:
    steps = []
    for i in range(dim):
        e = [0] * dim
        e[i] = 1
        steps.append(tuple(e))
        e[i] = -1
        steps.append(tuple(e))
    return sorted(steps)


# ---------------------------------------------------------------------------
# Model specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaseWalk:
    """Non-interacting walk with a fixed one-step distribution."""

    dim: int
    steps: tuple[tuple[Coords, float], ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dim}")
        total = sum(p for _, p in self.steps)
        if any(p < 0 for _, p in self.steps) or abs(total - 1.0) > LAW_TOL:
            raise ConfigError(f"base step law must be a probability law, mass {total}")

    @property
    def beta(self) -> float:
        return 0.0

    @property
    def step_set(self) -> list[Coords]:
        return sorted(s for s, p in self.steps if p > 0)

    @property
    def step_range(self) -> int:
        return max(max(abs(c) for c in s) for s in self.step_set)


@dataclass(frozen=True)
class ExcitedWalk:
    """Nearest-neighbour walk, excited on first visits."""

    dim: int
    beta: float

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dim}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"excitation parameter must be in [0, 1], got {self.beta}")

    @property
    def step_set(self) -> list[Coords]:
        return unit_steps(self.dim)

    @property
    def step_range(self) -> int:
        return 1

    def fresh_law(self) -> StepLaw:
        # (1 + beta * e1.x) / (2d) on unit steps
        return {
            s: (1.0 + self.beta * s[0]) / (2 * self.dim) for s in self.step_set
        }

    def stale_law(self) -> StepLaw:
        return {s: 1.0 / (2 * self.dim) for s in self.step_set}


@dataclass(frozen=True)
class ReinforcedWalk:
    """Once/boundedly edge-reinforced walk with drifting initial weights.

    ``weights`` assigns the translation-invariant initial weight to each
    directed step; ``reinforcement`` is the increment sequence indexed by
    the traversal count of the edge (entry ``t-1`` is added on the t-th
    traversal; increments beyond the sequence are zero).
    """

    dim: int
    weights: tuple[tuple[Coords, float], ...]
    reinforcement: tuple[float, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dim}")
        if not self.weights:
            raise ConfigError("reinforced walk needs a non-empty weight function")
        if any(w <= 0 for _, w in self.weights):
            raise ConfigError("initial edge weights must be positive")
        drift = [0.0] * self.dim
        for s, w in self.weights:
            for i, c in enumerate(s):
                drift[i] += c * w
        if all(abs(c) < LAW_TOL for c in drift):
            raise ConfigError("initial weights must induce a non-zero drift")
        # every reachable running weight w0 + prefix-sum must stay positive
        low = min(self.reinforcement_prefix)
        wmin = min(w for _, w in self.weights)
        if wmin + low <= 0:
            raise ConfigError(
                f"running edge weight can reach {wmin + low} <= 0; "
                "reduce the (negative) reinforcement")

    @cached_property
    def reinforcement_prefix(self) -> tuple[float, ...]:
        """Cumulative added weight after 0, 1, 2, ... traversals."""
        pref = [0.0]
        for b in self.reinforcement:
            pref.append(pref[-1] + b)
        return tuple(pref)

    @property
    def beta(self) -> float:
        return sum(abs(b) for b in self.reinforcement)

    @property
    def step_set(self) -> list[Coords]:
        return sorted(s for s, _ in self.weights)

    @property
    def step_range(self) -> int:
        return max(max(abs(c) for c in s) for s in self.step_set)

    def delta_constant(self) -> float:
        """A computed constant C with |Delta| <= C * beta.

        Per-edge reinforcement totals lie in [-beta, beta], so two weight
        configurations at a site differ by at most 2*beta per edge and the
        site totals by 2*|Omega|*beta; dividing by the smallest reachable
        site total gives the bound.
        """
        nsteps = len(self.step_set)
        low = min(0.0, min(self.reinforcement_prefix))
        s_min = sum(w for _, w in self.weights) + nsteps * low
        return 2.0 * (1 + nsteps) / s_min


@dataclass(frozen=True)
class PartialEnvironmentWalk:
    """Annealed nearest-neighbour walk in a partially random environment.

    The environment law has finite support: ``support`` lists pairs of
    (full weight vector on the 2d unit steps, probability).  The last
    ``d1`` coordinates get equal ("fair") weight in every environment.
    """

    d0: int
    d1: int
    support: tuple[tuple[tuple[tuple[Coords, float], ...], float], ...]
    beta: float

    def __post_init__(self):
        if self.d0 < 1 or self.d1 < 1:
            raise ConfigError("both coordinate blocks need dimension >= 1")
        if len(self.support) > 8:
            raise ConfigError("environment support capped at 8 weight vectors")
        probs = [p for _, p in self.support]
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > LAW_TOL:
            raise ConfigError("environment probabilities must form a law")
        d = self.dim
        steps = unit_steps(d)
        fast = [s for s in steps if any(s[self.d0:])]
        for w_vec, _ in self.support:
            w = dict(w_vec)
            if sorted(w) != steps:
                raise ConfigError("each environment weight vector must cover all unit steps")
            if any(v < 0 for v in w.values()) or abs(sum(w.values()) - 1.0) > LAW_TOL:
                raise ConfigError("environment weights must form a probability law")
            slow_mass = sum(w[s] for s in steps if s not in fast)
            if slow_mass >= 1.0 - LAW_TOL:
                raise ConfigError("the first coordinate block must not carry all the mass")
            fair = (1.0 - slow_mass) / (2 * self.d1)
            for s in fast:
                if abs(w[s] - fair) > LAW_TOL:
                    raise ConfigError(
                        f"weight on {s} must equal the fair split {fair}, got {w[s]}")
        mean = self.mean_weights()
        for w_vec, _ in self.support:
            for s, v in w_vec:
                if abs(v - mean[s]) > self.beta + LAW_TOL:
                    raise ConfigError(
                        f"weight deviation {abs(v - mean[s])} on {s} exceeds beta={self.beta}")

    @property
    def dim(self) -> int:
        return self.d0 + self.d1

    @property
    def step_set(self) -> list[Coords]:
        return unit_steps(self.dim)

    @property
    def step_range(self) -> int:
        return 1

    def mean_weights(self) -> StepLaw:
        mean: StepLaw = {s: 0.0 for s in self.step_set}
        for w_vec, p in self.support:
            for s, v in w_vec:
                mean[s] += p * v
        return mean

    def max_deviation(self) -> float:
        mean = self.mean_weights()
        return max(
            abs(v - mean[s]) for w_vec, _ in self.support for s, v in w_vec
        )


ModelSpec = Union[BaseWalk, ExcitedWalk, ReinforcedWalk, PartialEnvironmentWalk]


# ---------------------------------------------------------------------------
# Path histories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathHistory:
    """Ordered finite path with derived indices for O(1) model queries."""

    sites: tuple[Coords, ...]

    def __post_init__(self):
        if not self.sites:
            raise ValueError("a history has at least its starting site")

    @classmethod
    def origin(cls, dim: int) -> "PathHistory":
        return cls(((0,) * dim,))

    @classmethod
    def from_steps(cls, dim: int, steps: Sequence[Coords]) -> "PathHistory":
        sites = [(0,) * dim]
        for s in steps:
            sites.append(tuple(a + b for a, b in zip(sites[-1], s)))
        return cls(tuple(sites))

    @property
    def dim(self) -> int:
        return len(self.sites[0])

    @property
    def endpoint(self) -> Coords:
        return self.sites[-1]

    @property
    def nsteps(self) -> int:
        return len(self.sites) - 1

    @cached_property
    def strict_past(self) -> frozenset[Coords]:
        """Sites visited before the current one (all but the last entry)."""
        return frozenset(self.sites[:-1])

    @cached_property
    def edge_counts(self) -> dict[tuple[Coords, Coords], int]:
        counts: dict[tuple[Coords, Coords], int] = {}
        for a, b in zip(self.sites, self.sites[1:]):
            counts[(a, b)] = counts.get((a, b), 0) + 1
        return counts

    @cached_property
    def departures(self) -> dict[Coords, dict[Coords, int]]:
        """Per-site multiset of departure directions."""
        deps: dict[Coords, dict[Coords, int]] = {}
        for a, b in zip(self.sites, self.sites[1:]):
            s = tuple(y - x for x, y in zip(a, b))
            deps.setdefault(a, {})
            deps[a][s] = deps[a].get(s, 0) + 1
        return deps

    def extend(self, step: Coords) -> "PathHistory":
        nxt = tuple(a + b for a, b in zip(self.sites[-1], step))
        return PathHistory(self.sites + (nxt,))

    def concat(self, other: "PathHistory") -> "PathHistory":
        """Concatenation; ``other`` must start where this history ends."""
        if other.sites[0] != self.endpoint:
            raise ValueError(
                f"concatenation endpoint mismatch: {self.endpoint} vs {other.sites[0]}")
        return PathHistory(self.sites + other.sites[1:])

    def translate(self, v: Coords) -> "PathHistory":
        return PathHistory(
            tuple(tuple(a + b for a, b in zip(x, v)) for x in self.sites))


# ---------------------------------------------------------------------------
# Incremental walkers: push/pop path state with O(1) law queries
# ---------------------------------------------------------------------------

class ExcitedWalkState:
    def __init__(self, model: ExcitedWalk, start: Coords):
        self.model = model
        self.path = [start]
        self._counts = {start: 1}
        self._fresh = model.fresh_law()
        self._stale = model.stale_law()

    @property
    def position(self) -> Coords:
        return self.path[-1]

    def step_law(self) -> StepLaw:
        # current site lies in the strict past iff it occurs more than once
        if self._counts[self.path[-1]] >= 2:
            return self._stale
        return self._fresh

    def push(self, step: Coords) -> None:
        nxt = tuple(a + b for a, b in zip(self.path[-1], step))
        self.path.append(nxt)
        self._counts[nxt] = self._counts.get(nxt, 0) + 1

    def pop(self) -> None:
        last = self.path.pop()
        c = self._counts[last] - 1
        if c:
            self._counts[last] = c
        else:
            del self._counts[last]


class ReinforcedWalkState:
    def __init__(self, model: ReinforcedWalk, start: Coords):
        self.model = model
        self.path = [start]
        self._edge_counts: dict[tuple[Coords, Coords], int] = {}
        self._steps = model.step_set
        self._w0 = dict(model.weights)
        self._pref = model.reinforcement_prefix
        self._law_cache: dict[tuple[int, ...], StepLaw] = {}

    @property
    def position(self) -> Coords:
        return self.path[-1]

    def _local_counts(self) -> tuple[int, ...]:
        cur = self.path[-1]
        maxc = len(self._pref) - 1
        return tuple(
            min(self._edge_counts.get((cur, tuple(a + b for a, b in zip(cur, s))), 0), maxc)
            for s in self._steps
        )

    def step_law(self) -> StepLaw:
        key = self._local_counts()
        law = self._law_cache.get(key)
        if law is None:
            weights = [self._w0[s] + self._pref[c] for s, c in zip(self._steps, key)]
            total = sum(weights)
            assert total > 0, "edge weight sum must stay positive"
            law = {s: w / total for s, w in zip(self._steps, weights)}
            self._law_cache[key] = law
        return law

    def push(self, step: Coords) -> None:
        cur = self.path[-1]
        nxt = tuple(a + b for a, b in zip(cur, step))
        self._edge_counts[(cur, nxt)] = self._edge_counts.get((cur, nxt), 0) + 1
        self.path.append(nxt)

    def pop(self) -> None:
        nxt = self.path.pop()
        edge = (self.path[-1], nxt)
        c = self._edge_counts[edge] - 1
        if c:
            self._edge_counts[edge] = c
        else:
            del self._edge_counts[edge]


class PartialEnvironmentWalkState:
    def __init__(self, model: PartialEnvironmentWalk, start: Coords):
        self.model = model
        self.path = [start]
        self._departures: dict[Coords, dict[Coords, int]] = {}
        self._steps = model.step_set
        self._support = [(dict(w), p) for w, p in model.support]
        self._law_cache: dict[tuple[int, ...], StepLaw] = {}

    @property
    def position(self) -> Coords:
        return self.path[-1]

    def step_law(self) -> StepLaw:
        # Bayes posterior mean over the finite environment support, using
        # only the departure multiset at the current site.
        counts = self._departures.get(self.path[-1], {})
        key = tuple(counts.get(s, 0) for s in self._steps)
        law = self._law_cache.get(key)
        if law is None:
            posts = []
            for w, p in self._support:
                like = p
                for s, c in zip(self._steps, key):
                    if c:
                        like *= w[s] ** c
                posts.append(like)
            z = sum(posts)
            law = {
                s: sum(post * w[s] for post, (w, _) in zip(posts, self._support)) / z
                for s in self._steps
            }
            self._law_cache[key] = law
        return law

    def push(self, step: Coords) -> None:
        cur = self.path[-1]
        deps = self._departures.setdefault(cur, {})
        deps[step] = deps.get(step, 0) + 1
        self.path.append(tuple(a + b for a, b in zip(cur, step)))

    def pop(self) -> None:
        last = self.path.pop()
        cur = self.path[-1]
        step = tuple(a - b for a, b in zip(last, cur))
        deps = self._departures[cur]
        c = deps[step] - 1
        if c:
            deps[step] = c
        else:
            del deps[step]


class BaseWalkState:
    def __init__(self, model: BaseWalk, start: Coords):
        self.model = model
        self.path = [start]
        self._law = dict(model.steps)

    @property
    def position(self) -> Coords:
        return self.path[-1]

    def step_law(self) -> StepLaw:
        return self._law

    def push(self, step: Coords) -> None:
        self.path.append(tuple(a + b for a, b in zip(self.path[-1], step)))

    def pop(self) -> None:
        self.path.pop()


def make_walker(model: ModelSpec, start: Coords | None = None):
    if start is None:
        start = (0,) * model_dim(model)
    if isinstance(model, ExcitedWalk):
        return ExcitedWalkState(model, start)
    if isinstance(model, ReinforcedWalk):
        return ReinforcedWalkState(model, start)
    if isinstance(model, PartialEnvironmentWalk):
        return PartialEnvironmentWalkState(model, start)
    if isinstance(model, BaseWalk):
        return BaseWalkState(model, start)
    raise TypeError(f"unknown model {model!r}")


def model_dim(model: ModelSpec) -> int:
    return model.dim


def replay(model: ModelSpec, history: PathHistory):
    """Build a walker whose state reflects the given history."""
    walker = make_walker(model, history.sites[0])
    for a, b in zip(history.sites, history.sites[1:]):
        walker.push(tuple(y - x for x, y in zip(a, b)))
    return walker


# ---------------------------------------------------------------------------
# Public one-step laws
# ---------------------------------------------------------------------------

def conditional_step_law(model: ModelSpec, history: PathHistory) -> StepLaw:
    """The one-step law from the endpoint of ``history``."""
    if history.dim != model_dim(model):
        raise ConfigError(
            f"history dimension {history.dim} does not match model dimension {model_dim(model)}")
    return dict(replay(model, history).step_law())


def first_step_law(model: ModelSpec) -> StepLaw:
    """The first-step distribution (single-site history at the origin)."""
    return conditional_step_law(model, PathHistory.origin(model_dim(model)))


def delta_factor(model: ModelSpec, outer: PathHistory, inner: PathHistory,
                 step: Coords) -> float:
    """Difference of conditional laws with and without the outer history.

    Returns p^{outer o inner}(end, end+step) - p^{inner}(end, end+step).
    """
    assert inner.sites[0] == outer.endpoint, \
        f"inner history must start at the outer endpoint, {inner.sites[0]} vs {outer.endpoint}"
    with_outer = conditional_step_law(model, outer.concat(inner))
    without = conditional_step_law(model, inner)
    return with_outer.get(step, 0.0) - without.get(step, 0.0)


def delta_bound_constant(model: ModelSpec) -> float:
    """Constant C such that |Delta| <= C * beta whenever the interaction bites."""
    if isinstance(model, ExcitedWalk):
        return 1.0
    if isinstance(model, PartialEnvironmentWalk):
        return 2.0
    if isinstance(model, ReinforcedWalk):
        return model.delta_constant()
    return 0.0


def validate_step_law(law: StepLaw) -> None:
    total = sum(law[s] for s in sorted(law))
    if any(p < -LAW_TOL for p in law.values()) or abs(total - 1.0) > LAW_TOL:
        raise AssertionError(f"step law has mass {total}")


# ---------------------------------------------------------------------------
# Configuration files
# ---------------------------------------------------------------------------

def model_from_obj(obj: Mapping) -> ModelSpec:
    try:
        variant = obj["variant"]
    except KeyError:
        raise ConfigError("config needs a 'variant' key") from None
    if variant == "erw":
        return ExcitedWalk(dim=int(obj["dim"]), beta=float(obj["beta"]))
    if variant == "base":
        dim = int(obj["dim"])
        steps = tuple((_as_step(s, dim), float(p)) for s, p in obj["steps"])
        return BaseWalk(dim=dim, steps=steps)
    if variant == "oerrw":
        dim = int(obj["dim"])
        weights = tuple((_as_step(s, dim), float(w)) for s, w in obj["weights"])
        reinforcement = tuple(float(b) for b in obj["reinforcement"])
        return ReinforcedWalk(dim=dim, weights=weights, reinforcement=reinforcement)
    if variant == "rwpre":
        d0, d1 = int(obj["d0"]), int(obj["d1"])
        d = d0 + d1
        support = []
        for entry in obj["environment"]:
            slow = {_as_step(s, d): float(w) for s, w in entry["weights"]}
            slow_mass = sum(slow.values())
            fair = (1.0 - slow_mass) / (2 * d1)
            w = dict(slow)
            for s in unit_steps(d):
                if any(s[d0:]):
                    w[s] = fair
                elif s not in w:
                    w[s] = 0.0
            support.append((tuple(sorted(w.items())), float(entry["prob"])))
        spec = PartialEnvironmentWalk(
            d0=d0, d1=d1, support=tuple(support),
            beta=float(obj["beta"]) if "beta" in obj else _support_deviation(support))
        return spec
    raise ConfigError(f"unknown model variant {variant!r}")


def _support_deviation(support) -> float:
    mean: dict[Coords, float] = {}
    for w_vec, p in support:
        for s, v in w_vec:
            mean[s] = mean.get(s, 0.0) + p * v
    return max(abs(v - mean[s]) for w_vec, _ in support for s, v in w_vec)


def load_model(path: str | Path) -> ModelSpec:
    """Load a model config from a JSON file, with line-referenced errors."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return model_from_obj(obj)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def model_to_obj(model: ModelSpec) -> dict:
    if isinstance(model, ExcitedWalk):
        return {"variant": "erw", "dim": model.dim, "beta": model.beta}
    if isinstance(model, BaseWalk):
        return {"variant": "base", "dim": model.dim,
                "steps": [[list(s), p] for s, p in model.steps]}
    if isinstance(model, ReinforcedWalk):
        return {"variant": "oerrw", "dim": model.dim,
                "weights": [[list(s), w] for s, w in model.weights],
                "reinforcement": list(model.reinforcement)}
    if isinstance(model, PartialEnvironmentWalk):
        return {"variant": "rwpre", "d0": model.d0, "d1": model.d1,
                "beta": model.beta,
                "environment": [
                    {"weights": [[list(s), w] for s, w in w_vec
                                 if not any(s[model.d0:])],
                     "prob": p}
                    for w_vec, p in model.support
                ]}
    raise TypeError(f"unknown model {model!r}")

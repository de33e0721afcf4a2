"""Exact occupation laws by exhaustive history enumeration.

This is the ground-truth oracle: depth-first traversal of the full step
tree, carrying the running path probability, accumulating leaf weights
into sparse fields.  Work splits by first-step prefix and partial fields
merge in lexicographic prefix order, so parallel and serial runs produce
bitwise-identical results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .lattice import SignedField
from .models import (Coords, ModelSpec, PathHistory, make_walker, model_dim,
                     replay)

DEFAULT_BUDGET = 10**8


class BudgetExceededError(RuntimeError):
    """Enumeration would exceed the node-visit budget."""

    def __init__(self, needed: int, budget: int):
        super().__init__(
            f"enumeration needs {needed} weighted node visits, budget is {budget}")
        self.needed = needed
        self.budget = budget


def _tree_size(branching: int, n: int) -> int:
    total = 0
    leaf = 1
    for _ in range(n):
        leaf *= branching
        total += leaf
    return total


def _check_budget(model: ModelSpec, n: int, budget: int, extra: int = 1) -> None:
    branching = len([s for s in model.step_set])
    needed = extra * _tree_size(branching, n)
    if needed > budget:
        raise BudgetExceededError(needed, budget)


def _descend(walker, depth: int, prob: float, per_depth: list[dict],
             reverse: bool) -> None:
    per_depth[0][walker.position] = per_depth[0].get(walker.position, 0.0) + prob
    if depth == 0:
        return
    law = walker.step_law()
    items = sorted(law.items(), reverse=reverse)
    for s, p in items:
        if p == 0.0:
            continue
        walker.push(s)
        _descend(walker, depth - 1, prob * p, per_depth[1:], reverse)
        walker.pop()


def _occupation_profile(model: ModelSpec, eta: PathHistory, n: int,
                        workers: int = 1, reverse: bool = False) -> list[SignedField]:
    """Occupation fields at every step 0..n, conditioned on history ``eta``."""
    d = model_dim(model)
    fields = [SignedField(d) for _ in range(n + 1)]
    fields[0].entries[eta.endpoint] = 1.0
    if n == 0:
        return fields

    base = replay(model, eta)
    first = base.step_law()
    prefixes = [(s, p) for s, p in sorted(first.items(), reverse=reverse) if p > 0.0]

    def run_prefix(item):
        s, p = item
        walker = replay(model, eta)
        walker.push(s)
        per_depth: list[dict] = [{} for _ in range(n)]
        _descend(walker, n - 1, p, per_depth, reverse)
        return per_depth

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run_prefix, prefixes))
    else:
        partials = [run_prefix(item) for item in prefixes]

    # fixed-shape reduction: merge prefix results in lexicographic order
    for per_depth in partials:
        for j, acc in enumerate(per_depth, start=1):
            tgt = fields[j].entries
            for x in sorted(acc):
                tgt[x] = tgt.get(x, 0.0) + acc[x]
    return fields


def two_point_profile(model: ModelSpec, n: int, *, budget: int = DEFAULT_BUDGET,
                      workers: int = 1, reverse: bool = False) -> list[SignedField]:
    """All occupation fields c_0 .. c_n in one sweep."""
    if n < 0:
        raise ValueError("n must be >= 0")
    _check_budget(model, n, budget)
    return _occupation_profile(model, PathHistory.origin(model_dim(model)), n,
                               workers=workers, reverse=reverse)


def two_point(model: ModelSpec, n: int, *, budget: int = DEFAULT_BUDGET,
              workers: int = 1, reverse: bool = False) -> SignedField:
    """Exact endpoint law after n steps."""
    return two_point_profile(model, n, budget=budget, workers=workers,
                             reverse=reverse)[n]


def conditional_two_point(model: ModelSpec, eta: PathHistory, n: int, *,
                          budget: int = DEFAULT_BUDGET,
                          workers: int = 1) -> SignedField:
    """Endpoint law after n further steps given the history ``eta``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    _check_budget(model, n, budget)
    return _occupation_profile(model, eta, n, workers=workers)[n]


def exact_moments(model: ModelSpec, n: int, *, budget: int = DEFAULT_BUDGET,
                  workers: int = 1) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact (mean, covariance) of the walk position at every step 0..n."""
    fields = two_point_profile(model, n, budget=budget, workers=workers)
    out = []
    for f in fields:
        mass, first, second = f.moments()
        assert abs(mass - 1.0) <= 1e-10, f"occupation mass drifted to {mass}"
        out.append((first, second - np.outer(first, first)))
    return out


def sup_return_probability(model: ModelSpec, n: int, history_len: int, *,
                           budget: int = DEFAULT_BUDGET) -> dict:
    """Worst-case return (and point) probability over short histories.

    Maximizes Q^eta(walk back at its start after n steps) over every
    history path of length <= history_len, and also the largest single
    point probability, for the transience diagnostics.
    """
    d = model_dim(model)
    steps = model.step_set
    _check_budget(model, n, budget, extra=_tree_size(len(steps), history_len) + 1)

    best_return = 0.0
    best_point = 0.0
    best_history: tuple[Coords, ...] | None = None

    def histories(length: int):
        if length == 0:
            yield PathHistory.origin(d)
            return
        for prefix in histories(length - 1):
            for s in steps:
                yield prefix.extend(s)

    for length in range(history_len + 1):
        for eta in histories(length):
            f = conditional_two_point(model, eta, n, budget=budget)
            ret = f[eta.endpoint]
            pt = f.max_abs()
            if ret > best_return:
                best_return = ret
                best_history = eta.sites
            best_point = max(best_point, pt)
    return {
        "n": n,
        "history_len": history_len,
        "sup_return": best_return,
        "sup_point": best_point,
        "argmax_history": list(map(list, best_history)) if best_history else None,
    }

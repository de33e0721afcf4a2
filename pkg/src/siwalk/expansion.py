"""Expansion coefficients of the two-point recurrence, two independent ways.

The recurrence

    c_{n+1}(x) = (D * c_n)(x) + sum_{m=2}^{n+1} (pi_m * c_{n+1-m})(x)

defines the correction coefficients pi_m uniquely (c_0 is a point mass, so
the m = n+1 term isolates pi_{n+1}).  ``pi_from_recurrence`` inverts the
recurrence against enumerated occupation laws; ``pi_direct`` evaluates the
nested sub-walk sums with their interaction-difference factors directly.
Their agreement is the central derivation check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .enumeration import DEFAULT_BUDGET, two_point_profile
from .lattice import SignedField
from .models import (Coords, ModelSpec, PathHistory, first_step_law,
                     make_walker, model_dim, replay)

DIRECT_M_CAP = 6


class DirectCapExceededError(RuntimeError):
    """The nested-sum evaluation was asked beyond its lag cap."""

    def __init__(self, m: int, cap: int):
        super().__init__(f"direct coefficient evaluation capped at lag {cap}, got {m}")
        self.m = m
        self.cap = cap


@dataclass
class PiTable:
    """Expansion coefficients up to a maximal lag.

    ``marginals[m]`` is pi_m(y); ``pairs[m]``, when present, is the
    two-argument pi_m(x, y) stored as a field on Z^d x Z^d; ``slices`` the
    per-loop-count contributions pi_m^{(N)}(x, y).
    """

    dim: int
    marginals: dict[int, SignedField] = field(default_factory=dict)
    pairs: dict[int, SignedField] = field(default_factory=dict)
    slices: dict[int, dict[int, SignedField]] = field(default_factory=dict)

    @property
    def m_max(self) -> int:
        return max(self.marginals, default=1)

    def lags(self) -> list[int]:
        return sorted(self.marginals)

    def marginal(self, m: int) -> SignedField:
        f = self.marginals.get(m)
        return f if f is not None else SignedField(self.dim)

    def first_moment(self, m: int) -> np.ndarray:
        """a_m = sum_y y pi_m(y)."""
        _, first, _ = self.marginal(m).moments()
        return first

    def second_moment(self, m: int) -> np.ndarray:
        """sum_y y y^T pi_m(y)."""
        _, _, second = self.marginal(m).moments()
        return second

    def abs_pair_mass(self, m: int) -> float:
        """S_m = sum_{x,y} |pi_m(x,y)|; marginal fallback if pairs absent."""
        if m in self.pairs:
            return self.pairs[m].total_abs_mass()
        return self.marginal(m).total_abs_mass()

    def row_sum_max(self, m: int) -> float:
        """max_x |sum_y pi_m(x,y)| over the pair table."""
        if m not in self.pairs:
            raise KeyError(f"pair table for lag {m} was not computed")
        d = self.dim
        rows: dict[Coords, float] = {}
        for xy in sorted(self.pairs[m].entries):
            x = xy[:d]
            rows[x] = rows.get(x, 0.0) + self.pairs[m].entries[xy]
        return max((abs(v) for v in rows.values()), default=0.0)

    def to_json_obj(self) -> dict:
        return {
            "dim": self.dim,
            "marginals": {str(m): f.to_json_obj() for m, f in sorted(self.marginals.items())},
            "pairs": {str(m): f.to_json_obj() for m, f in sorted(self.pairs.items())},
            "slices": {
                str(m): {str(n): f.to_json_obj() for n, f in sorted(by_n.items())}
                for m, by_n in sorted(self.slices.items())
            },
        }

    @classmethod
    def from_json_obj(cls, obj) -> "PiTable":
        return cls(
            dim=int(obj["dim"]),
            marginals={int(m): SignedField.from_json_obj(f)
                       for m, f in obj.get("marginals", {}).items()},
            pairs={int(m): SignedField.from_json_obj(f)
                   for m, f in obj.get("pairs", {}).items()},
            slices={int(m): {int(n): SignedField.from_json_obj(f)
                             for n, f in by_n.items()}
                    for m, by_n in obj.get("slices", {}).items()},
        )


def step_field(model: ModelSpec) -> SignedField:
    """The first-step law D as a field."""
    d = model_dim(model)
    return SignedField(d, dict(first_step_law(model)))


# ---------------------------------------------------------------------------
# Route 1: invert the recurrence against enumerated occupation laws
# ---------------------------------------------------------------------------

def pi_from_recurrence(model: ModelSpec, m_max: int, *,
                       budget: int = DEFAULT_BUDGET,
                       workers: int = 1) -> PiTable:
    """Marginals pi_2 .. pi_{m_max} by exact recurrence inversion."""
    d = model_dim(model)
    c = two_point_profile(model, m_max, budget=budget, workers=workers)
    D = step_field(model)
    table = PiTable(dim=d)
    for m in range(2, m_max + 1):
        resid = c[m] - D.convolve(c[m - 1])
        for l in range(2, m):
            resid = resid - table.marginals[l].convolve(c[m - l])
        table.marginals[m] = resid
    return table


# ---------------------------------------------------------------------------
# Route 2: the nested sub-walk sums, per loop count N
# ---------------------------------------------------------------------------

def _compositions(total: int, parts: int):
    """All tuples of ``parts`` non-negative integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def _accumulate_subwalks(model: ModelSpec, prev: PathHistory,
                         comps: tuple[int, ...], weight: float,
                         acc: dict[Coords, float], step_set) -> None:
    """Enumerate one sub-walk of length comps[0]+1 with ``prev`` as history.

    The first comps[0] steps carry conditional probabilities (history =
    prev concatenated with the partial sub-walk); the final step carries
    the difference factor of the laws with and without ``prev``.
    """
    j = comps[0]
    rest = comps[1:]
    start = prev.endpoint
    with_hist = replay(model, prev)      # sees prev + the growing sub-walk
    fresh = make_walker(model, start)    # sees the sub-walk alone
    cur_steps: list[Coords] = []

    def go(depth: int, prob: float) -> None:
        if depth == j:
            law_a = with_hist.step_law()
            law_b = fresh.step_law()
            for s in step_set:
                delta = law_a.get(s, 0.0) - law_b.get(s, 0.0)
                if delta == 0.0:
                    continue
                w = prob * delta
                if rest:
                    sub = PathHistory.from_steps(
                        len(start), cur_steps + [s]).translate(start)
                    _accumulate_subwalks(model, sub, rest, w, acc, step_set)
                else:
                    x = with_hist.position
                    y = tuple(a + b for a, b in zip(x, s))
                    key = x + y
                    acc[key] = acc.get(key, 0.0) + w
            return
        law = with_hist.step_law()
        for s in sorted(law):
            p = law[s]
            if p == 0.0:
                continue
            with_hist.push(s)
            fresh.push(s)
            cur_steps.append(s)
            go(depth + 1, prob * p)
            cur_steps.pop()
            fresh.pop()
            with_hist.pop()

    go(0, weight)


def pi_direct(model: ModelSpec, m: int, n_max: int | None = None, *,
              m_cap: int = DIRECT_M_CAP) -> dict[int, SignedField]:
    """Per-loop-count slices pi_m^{(N)}(x, y) for N = 1 .. n_max.

    Slices with N+1 > m are identically zero and returned as empty fields.
    """
    if m < 2:
        raise ValueError("expansion coefficients start at lag 2")
    if m > m_cap:
        raise DirectCapExceededError(m, m_cap)
    d = model_dim(model)
    n_top = m - 1 if n_max is None else n_max
    step_set = model.step_set
    D = first_step_law(model)
    out: dict[int, SignedField] = {}
    for N in range(1, n_top + 1):
        acc: dict[Coords, float] = {}
        if N + 1 <= m:
            for comp in _compositions(m - N - 1, N):
                for s0 in sorted(D):
                    p0 = D[s0]
                    if p0 == 0.0:
                        continue
                    first = PathHistory.from_steps(d, [s0])
                    _accumulate_subwalks(model, first, comp, p0, acc, step_set)
        f = SignedField(2 * d)
        f.entries = {xy: acc[xy] for xy in sorted(acc)}
        out[N] = f
    return out


def pi_direct_table(model: ModelSpec, m_max: int, *,
                    m_cap: int = DIRECT_M_CAP) -> PiTable:
    """Full table (slices, pairs, marginals) from the nested-sum route."""
    d = model_dim(model)
    table = PiTable(dim=d)
    for m in range(2, m_max + 1):
        slices = pi_direct(model, m, m_cap=m_cap)
        table.slices[m] = slices
        pair = SignedField(2 * d)
        for N in sorted(slices):
            pair = pair + slices[N]
        table.pairs[m] = pair
        marg = SignedField(d)
        for xy in sorted(pair.entries):
            y = xy[d:]
            marg.entries[y] = marg.entries.get(y, 0.0) + pair.entries[xy]
        table.marginals[m] = marg
    return table


# ---------------------------------------------------------------------------
# Verification and Fourier access
# ---------------------------------------------------------------------------

def k_grid(dim: int, points_per_axis: int = 11,
           half_width: float = np.pi / 2) -> list[tuple[float, ...]]:
    """Cartesian grid in [-half_width, half_width]^d plus the origin."""
    axis = np.linspace(-half_width, half_width, points_per_axis)
    grid = [tuple(float(v) for v in k) for k in itertools.product(axis, repeat=dim)]
    origin = (0.0,) * dim
    if origin not in grid:
        grid.append(origin)
    return grid


def verify_recurrence(model: ModelSpec, pi: PiTable, n_max: int, *,
                      grid: list[tuple[float, ...]] | None = None,
                      budget: int = DEFAULT_BUDGET,
                      workers: int = 1) -> dict:
    """Residual of the two-point recurrence in x-space and on a k-grid."""
    d = model_dim(model)
    if grid is None:
        grid = k_grid(d)
    c = two_point_profile(model, n_max + 1, budget=budget, workers=workers)
    D = step_field(model)
    per_n = []
    for n in range(0, n_max + 1):
        pred = D.convolve(c[n])
        for m in range(2, n + 2):
            if m in pi.marginals:
                pred = pred + pi.marginals[m].convolve(c[n + 1 - m])
        resid = c[n + 1] - pred
        x_res = resid.max_abs()
        k_res = max(abs(resid.fourier(k)) for k in grid)
        per_n.append({"n": n + 1, "x_residual": x_res, "k_residual": k_res})
    truncated = pi.m_max < n_max + 1
    return {
        "m_max": pi.m_max,
        "truncated": truncated,
        "per_n": per_n,
        "max_x_residual": max(r["x_residual"] for r in per_n),
        "max_k_residual": max(r["k_residual"] for r in per_n),
    }


def coefficient_bound_suite(model: ModelSpec, pi: PiTable, *,
                            n_k: int = 50, seed: int = 20240817,
                            tol: float = 1e-10) -> dict:
    """Norm bounds on the coefficients in terms of the absolute pair mass.

    With S_m the total absolute mass of the pair table, L the step range
    and d the dimension, checks at k = 0 and at ``n_k`` sampled
    wavevectors: zero mass, |grad| <= sqrt(d) L S_m, |Hess| (max entry)
    <= (dL)^2 (2m-1) S_m, |pihat(k)| <= |k| L S_m, the first-order
    Taylor remainder <= |k|^2 m L^2 S_m, and the second-order remainder
    <= |k|^3 m^2 L^3 S_m.  Requires the pair tables (the |k| L bound
    leans on the final-step structure of the pairs).
    """
    d = model_dim(model)
    L = model.step_range
    rng = np.random.default_rng(seed)
    per_m = []
    ok = True
    for m in sorted(pi.pairs):
        S = pi.abs_pair_mass(m)
        a = pi.first_moment(m)
        second = pi.second_moment(m)
        mass = abs(pi.marginal(m).moments()[0])
        grad_slack = np.sqrt(d) * L * S - float(np.linalg.norm(a))
        hess_slack = (d * L) ** 2 * (2 * m - 1) * S - float(np.max(np.abs(second)))
        worst = {"value": np.inf, "taylor1": np.inf, "taylor2": np.inf}
        for k in rng.uniform(-np.pi, np.pi, size=(n_k, d)):
            knorm = float(np.linalg.norm(k))
            ph = pi.marginal(m).fourier(k)
            worst["value"] = min(worst["value"], knorm * L * S - abs(ph))
            rem1 = ph - 1j * float(k @ a)
            worst["taylor1"] = min(worst["taylor1"],
                                   knorm ** 2 * m * L ** 2 * S - abs(rem1))
            rem2 = rem1 + 0.5 * float(k @ second @ k)
            worst["taylor2"] = min(worst["taylor2"],
                                   knorm ** 3 * m ** 2 * L ** 3 * S - abs(rem2))
        row = {"m": m, "S": S, "mass": mass, "grad_slack": grad_slack,
               "hess_slack": hess_slack, "value_slack": worst["value"],
               "taylor1_slack": worst["taylor1"],
               "taylor2_slack": worst["taylor2"]}
        row["pass"] = (mass <= tol and grad_slack >= -tol and
                       hess_slack >= -tol and worst["value"] >= -tol and
                       worst["taylor1"] >= -tol and worst["taylor2"] >= -tol)
        ok = ok and row["pass"]
        per_m.append(row)
    return {"per_m": per_m, "all_pass": ok}


def pi_hat(pi: PiTable, m: int, k) -> complex:
    """Exact Fourier sum of the marginal pi_m at wavevector k."""
    return pi.marginal(m).fourier(k)


def pi_hat_gradient(pi: PiTable, m: int) -> np.ndarray:
    """Exact gradient of the Fourier transform at k=0: i * a_m."""
    return 1j * pi.first_moment(m)

def pi_hat_hessian(pi: PiTable, m: int) -> np.ndarray:
    """Exact Hessian of the Fourier transform at k=0: -sum_y y y^T pi_m(y)."""
    return -pi.second_moment(m)


def pi_hat_gradient_fd(pi: PiTable, m: int, step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient at k=0, the independent numeric route."""
    d = pi.dim
    grad = np.zeros(d, dtype=complex)
    for i in range(d):
        kp = [0.0] * d
        km = [0.0] * d
        kp[i] = step
        km[i] = -step
        grad[i] = (pi_hat(pi, m, kp) - pi_hat(pi, m, km)) / (2 * step)
    return grad


def pi_hat_hessian_fd(pi: PiTable, m: int, step: float = 1e-4) -> np.ndarray:
    d = pi.dim
    hess = np.zeros((d, d), dtype=complex)
    f0 = pi_hat(pi, m, [0.0] * d)
    for i in range(d):
        for j in range(d):
            kpp = [0.0] * d
            kpm = [0.0] * d
            kmp = [0.0] * d
            kmm = [0.0] * d
            kpp[i] += step; kpp[j] += step
            kpm[i] += step; kpm[j] -= step
            kmp[i] -= step; kmp[j] += step
            kmm[i] -= step; kmm[j] -= step
            if i == j:
                kp = [0.0] * d; km = [0.0] * d
                kp[i] = step; km[i] = -step
                hess[i, j] = (pi_hat(pi, m, kp) - 2 * f0 + pi_hat(pi, m, km)) / step**2
            else:
                hess[i, j] = (pi_hat(pi, m, kpp) - pi_hat(pi, m, kpm)
                              - pi_hat(pi, m, kmp) + pi_hat(pi, m, kmm)) / (4 * step**2)
    return hess

"""Inductive decomposition of the two-point Fourier ratio, plus decay audits.

Writing the characteristic function of the walk as a telescoping product of
step ratios, each log-ratio splits into a drift phase and a remainder:

    Log(chat_j(k) / chat_{j-1}(k)) = i k . theta_j + e_j(k),

with theta_j the truncated drift through lag j.  Because theta_j equals the
exact mean increment at step j, e_j vanishes to first order at k = 0.  The
centered remainder r_j(k) = e_j(k) + (1/2) k^T Sigma_j k strips the Gaussian
part as well.  Both are only taken on a shrinking window of wavevectors
where the ratio stays away from the branch cut.

The audit half fits the absolute-coefficient masses S_m against decay
templates and evaluates the summability constants those templates imply.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .enumeration import DEFAULT_BUDGET, two_point_profile
from .expansion import PiTable
from .models import ExcitedWalk, ModelSpec, PartialEnvironmentWalk, \
    ReinforcedWalk, model_dim
from .observables import SpeedSeries, VarianceSeries

DEFAULT_DELTA = 0.25
DEFAULT_GAMMA = 0.1
RATIO_FLOOR = 0.5


class InsufficientDataError(RuntimeError):
    """Too few usable lags to fit a decay template."""


def theta_sequence(model: ModelSpec, pi: PiTable, n_max: int) -> dict[int, np.ndarray]:
    """Truncated drift theta_j for j = 1 .. n_max."""
    series = SpeedSeries.from_table(model, pi)
    return {j: series.theta(j) for j in range(1, n_max + 1)}


def sigma_sequence(model: ModelSpec, pi: PiTable, n_max: int) -> dict[int, np.ndarray]:
    """Truncated covariance Sigma_j for j = 1 .. n_max, each built at theta_j."""
    speed = SpeedSeries.from_table(model, pi)
    var = VarianceSeries.from_table(model, pi)
    return {j: var.sigma(speed.theta(j), j) for j in range(1, n_max + 1)}


def lln_radius(j: int, delta: float = DEFAULT_DELTA) -> float:
    """Admissible |k| for the drift remainder at step j."""
    return delta * math.log(max(j, 3)) / j


def clt_radius(j: int, delta: float = DEFAULT_DELTA) -> float:
    """Admissible |k| for the centered remainder at step j."""
    return math.sqrt(delta * math.log(max(j, 3)) / j)


def _directions(dim: int, count: int) -> list[np.ndarray]:
    """Deterministic unit directions: axes first, then fixed random fill."""
    dirs = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        dirs.append(e)
        dirs.append(-e)
    rng = np.random.default_rng(20240817)
    while len(dirs) < count:
        v = rng.normal(size=dim)
        dirs.append(v / np.linalg.norm(v))
    return dirs[:count]


class RatioTerms:
    """Evaluates e_j and r_j from one enumerated occupation profile."""

    def __init__(self, model: ModelSpec, pi: PiTable, n_max: int, *,
                 budget: int = DEFAULT_BUDGET, workers: int = 1):
        if pi.m_max < n_max:
            raise ValueError(
                f"terms to j={n_max} need coefficients to lag {n_max}, "
                f"table stops at {pi.m_max}")
        self.model = model
        self.n_max = n_max
        self.profile = two_point_profile(model, n_max, budget=budget,
                                         workers=workers)
        self.theta = theta_sequence(model, pi, n_max)
        self.sigma = sigma_sequence(model, pi, n_max)

    def ratio(self, j: int, k) -> complex:
        """chat_j(k) / chat_{j-1}(k)."""
        num = self.profile[j].fourier(k)
        den = self.profile[j - 1].fourier(k)
        return num / den

    def e(self, j: int, k) -> complex:
        """Principal-branch log ratio minus the drift phase."""
        kv = np.asarray(k, dtype=float)
        return cmath.log(self.ratio(j, kv)) - 1j * float(kv @ self.theta[j])

    def r(self, j: int, k) -> complex:
        """e_j(k) + (1/2) k^T Sigma_j k."""
        kv = np.asarray(k, dtype=float)
        return self.e(j, kv) + 0.5 * float(kv @ self.sigma[j] @ kv)

    def e_gradient_fd(self, j: int, step: float = 1e-5) -> np.ndarray:
        """Central-difference gradient of e_j at k = 0 (should vanish)."""
        d = model_dim(self.model)
        g = np.zeros(d, dtype=complex)
        for i in range(d):
            kp = np.zeros(d)
            kp[i] = step
            g[i] = (self.e(j, kp) - self.e(j, -kp)) / (2 * step)
        return g

    def r_gradient_fd(self, j: int, step: float = 1e-5) -> np.ndarray:
        """Central-difference gradient of r_j at k = 0; the quadratic part
        is even, so this coincides with the e_j gradient up to O(step^2)."""
        d = model_dim(self.model)
        g = np.zeros(d, dtype=complex)
        for i in range(d):
            kp = np.zeros(d)
            kp[i] = step
            g[i] = (self.r(j, kp) - self.r(j, -kp)) / (2 * step)
        return g


def extract_lln_terms(model: ModelSpec, pi: PiTable, n_max: int, *,
                      delta: float = DEFAULT_DELTA, n_directions: int = 4,
                      n_radii: int = 4, budget: int = DEFAULT_BUDGET,
                      terms: RatioTerms | None = None) -> dict:
    """Table of drift remainders e_j(k) over the admissible window.

    Wavevectors where the step ratio has magnitude below ``RATIO_FLOOR``
    are flagged and excluded (the principal branch is unreliable there).
    """
    if terms is None:
        terms = RatioTerms(model, pi, n_max, budget=budget)
    d = model_dim(model)
    dirs = _directions(d, max(n_directions, 2 * d))
    rows = []
    for j in range(1, n_max + 1):
        rad = lln_radius(j, delta)
        for u in dirs:
            for frac in np.linspace(1.0 / n_radii, 1.0, n_radii):
                k = rad * frac * u
                ratio = terms.ratio(j, k)
                excluded = abs(ratio) < RATIO_FLOOR
                row = {"j": j, "k": [float(v) for v in k],
                       "ratio_abs": abs(ratio), "excluded": excluded}
                if not excluded:
                    e = terms.e(j, k)
                    row["e_real"] = e.real
                    row["e_imag"] = e.imag
                rows.append(row)
    zero = [0.0] * d
    at_zero = [abs(terms.e(j, zero)) for j in range(1, n_max + 1)]
    return {"delta": delta, "rows": rows,
            "max_abs_e_at_zero": max(at_zero),
            "n_excluded": sum(r["excluded"] for r in rows)}


def extract_clt_terms(model: ModelSpec, pi: PiTable, n_max: int, *,
                      delta: float = DEFAULT_DELTA, n_directions: int = 4,
                      n_radii: int = 4, budget: int = DEFAULT_BUDGET,
                      terms: RatioTerms | None = None) -> dict:
    """Table of centered remainders r_j(k) over the wider CLT window."""
    if terms is None:
        terms = RatioTerms(model, pi, n_max, budget=budget)
    d = model_dim(model)
    dirs = _directions(d, max(n_directions, 2 * d))
    rows = []
    for j in range(1, n_max + 1):
        rad = clt_radius(j, delta)
        for u in dirs:
            for frac in np.linspace(1.0 / n_radii, 1.0, n_radii):
                k = rad * frac * u
                ratio = terms.ratio(j, k)
                excluded = abs(ratio) < RATIO_FLOOR
                row = {"j": j, "k": [float(v) for v in k],
                       "ratio_abs": abs(ratio), "excluded": excluded}
                if not excluded:
                    r = terms.r(j, k)
                    row["r_real"] = r.real
                    row["r_imag"] = r.imag
                rows.append(row)
    grads = [float(np.max(np.abs(terms.r_gradient_fd(j))))
             for j in range(1, n_max + 1)]
    return {"delta": delta, "rows": rows,
            "max_grad_r_at_zero": max(grads),
            "n_excluded": sum(r["excluded"] for r in rows)}


def telescoping_check(model: ModelSpec, pi: PiTable, n_max: int, *,
                      delta: float = DEFAULT_DELTA,
                      budget: int = DEFAULT_BUDGET,
                      terms: RatioTerms | None = None) -> dict:
    """Round trip: the product of reconstructed step ratios must rebuild
    chat_j(k) from chat_0 = 1 at every admissible wavevector."""
    if terms is None:
        terms = RatioTerms(model, pi, n_max, budget=budget)
    d = model_dim(model)
    rad = lln_radius(n_max, delta)
    dirs = _directions(d, 2 * d)
    worst = 0.0
    rows = []
    for u in dirs:
        k = rad * u
        log_sum = 0.0 + 0.0j
        for j in range(1, n_max + 1):
            log_sum += 1j * float(np.asarray(k) @ terms.theta[j]) + terms.e(j, k)
            rebuilt = cmath.exp(log_sum)
            target = terms.profile[j].fourier(k)
            resid = abs(rebuilt - target)
            worst = max(worst, resid)
            rows.append({"j": j, "k": [float(v) for v in k], "residual": resid})
    return {"rows": rows, "max_residual": worst}


def smallk_exponent(terms: RatioTerms, j: int, direction=None, *,
                    scales=None, which: str = "e") -> float:
    """Log-log slope of the remainder along a ray: expected >= 2.

    ``which`` selects the drift remainder ("e") or the centered
    remainder ("r"); both decay at least quadratically near the origin.
    """
    d = model_dim(terms.model)
    if direction is None:
        direction = np.ones(d) / math.sqrt(d)
    if scales is None:
        base = lln_radius(j)
        scales = base * np.array([1.0, 0.5, 0.25, 0.125, 0.0625])
    fn = terms.e if which == "e" else terms.r
    xs, ys = [], []
    for s in scales:
        val = abs(fn(j, s * np.asarray(direction)))
        if val > 1e-14:
            xs.append(math.log(s))
            ys.append(math.log(val))
    if len(xs) < 3:
        # remainder is numerically zero along the ray; decay is trivially fast
        return math.inf
    return float(np.polyfit(xs, ys, 1)[0])


# ---------------------------------------------------------------------------
# Decay-template audit
# ---------------------------------------------------------------------------

def default_template(model: ModelSpec) -> tuple[str, float | None]:
    """Template family and exponent matching the model class."""
    if isinstance(model, ReinforcedWalk):
        return ("exponential", None)
    if isinstance(model, ExcitedWalk):
        return ("power", (model.dim - 3) / 2.0)
    if isinstance(model, PartialEnvironmentWalk):
        return ("power", (model.d1 - 2) / 2.0)
    return ("power", (model_dim(model) - 3) / 2.0)


def _template_values(kind: str, param: float, ms: np.ndarray) -> np.ndarray:
    """b_m normalized to b_1 = 1 so the smallness scale sits in epsilon."""
    if kind == "exponential":
        return np.exp(-param * (ms - 1.0))
    if kind == "power":
        return ((ms + 1.0) / 2.0) ** (-param)
    raise ValueError(f"unknown template kind {kind!r}")


def _series_constants(kind: str, param: float, *, gamma: float, n_eval: int,
                      cutoff: int = 200_000) -> dict:
    """Summability constants of the fitted template, by direct summation.

    Power templates with exponent <= 1 make the full sums diverge; those
    entries come back infinite with the divergence noted.
    """
    if kind == "exponential" and param <= 0.0:
        return {"template": kind, "param": float(param), "gamma": gamma,
                "n_eval": n_eval, "divergent": True}
    ms = np.arange(1, cutoff + 1, dtype=float)
    b = _template_values(kind, param, ms)
    mb = ms * b
    diverges = kind == "power" and param <= 1.0
    mb_diverges = kind == "power" and param <= 2.0

    out: dict = {"template": kind, "param": float(param), "gamma": gamma,
                 "n_eval": n_eval}
    out["B"] = math.inf if diverges else float(np.sum(b))
    out["B_star"] = math.inf if mb_diverges else float(np.sum(mb))

    cum_mb = np.cumsum(mb)
    ns = np.arange(1, cutoff + 1, dtype=float)
    weights = np.log(np.maximum(ns, 3.0)) ** 2 / ns
    out["B_prime"] = float(np.max(weights * cum_mb))

    n = n_eval
    out["B_n"] = float(cum_mb[n - 1])
    out["a_n"] = float(np.sum(ms[:n] ** (2.0 + gamma) * b[:n]))
    # d_n = sum_{m=2}^{n} m b_m sum_{l=n+1-m}^{n} b_{l+1}
    d_n = 0.0
    for m in range(2, n + 1):
        tail = float(np.sum(b[(n + 1 - m):n + 1]))   # b_{l+1}, l = n+1-m .. n
        d_n += m * b[m - 1] * tail
    out["d_n"] = d_n
    # E_n = sum_m (m ^ n) m b_m = sum_{m<=n} m^2 b_m + n sum_{m>n} m b_m
    head = float(np.sum(ms[:n] ** 2 * b[:n]))
    out["E_n"] = math.inf if mb_diverges else head + n * float(np.sum(mb[n:]))
    return out


def assumption_audit(pi: PiTable, model: ModelSpec, *,
                     template: tuple[str, float | None] | None = None,
                     gamma: float = DEFAULT_GAMMA, n_eval: int = 10) -> dict:
    """Fit S_m = sum |pi_m(x,y)| against the model's decay template.

    Exponential templates fit both rate and prefactor by least squares on
    log S_m; power templates keep the exponent fixed and fit the prefactor.
    epsilon is the smallest prefactor that dominates every observed S_m.
    """
    if template is None:
        template = default_template(model)
    kind, param = template
    ms = np.array(pi.lags(), dtype=float)
    svals = np.array([pi.abs_pair_mass(int(m)) for m in ms])

    usable = svals > 1e-14
    if not np.any(usable):
        # interaction strength zero: every coefficient vanishes identically
        return {"template": kind, "degenerate": True, "epsilon": 0.0,
                "lags": [int(m) for m in ms], "S": [float(s) for s in svals]}
    if np.sum(usable) < 3:
        raise InsufficientDataError(
            f"only {int(np.sum(usable))} non-zero lags; need >= 3 for a fit")

    mu = ms[usable]
    su = svals[usable]
    logs = np.log(su)

    if kind == "exponential":
        slope, intercept = np.polyfit(mu, logs, 1)
        rate = -float(slope)
        pred = intercept + slope * mu
        param_fit = rate
    else:
        if param is None:
            raise ValueError("power template needs an exponent")
        basis = np.log((mu + 1.0) / 2.0)
        intercept = float(np.mean(logs + param * basis))
        pred = intercept - param * basis
        # free-slope diagnostic alongside the pinned-exponent fit
        free_slope = float(np.polyfit(basis, logs, 1)[0])
        param_fit = -free_slope

    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    eff_param = param_fit if kind == "exponential" else float(param)
    bvals = _template_values(kind, eff_param, ms)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(usable, svals / bvals, 0.0)
    epsilon = float(np.max(ratios))

    out = {
        "template": kind,
        "degenerate": False,
        "lags": [int(m) for m in ms],
        "S": [float(s) for s in svals],
        "epsilon": epsilon,
        "r_squared": r2,
        "prefactor": float(math.exp(intercept)),
    }
    if kind == "exponential":
        out["rate"] = param_fit
    else:
        out["exponent"] = float(param)
        out["exponent_free_fit"] = param_fit
    out["constants"] = _series_constants(kind, eff_param, gamma=gamma,
                                         n_eval=n_eval)
    return out

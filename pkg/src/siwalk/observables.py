"""Truncated speed/variance formulas and the exact finite-n identities.

The drift of the walk satisfies, exactly at every n,

    E[w_{n+1} - w_n] = theta_0 + sum_{m=2}^{n+1} a_m,

with theta_0 the first moment of the first-step law and a_m the first
moment of the expansion coefficient pi_m.  The covariance increment obeys
an analogous exact identity built from the same ingredients.  Truncating
the series gives the speed and covariance approximants theta_M, Sigma_M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .enumeration import DEFAULT_BUDGET, exact_moments
from .expansion import PiTable, step_field
from .models import ModelSpec, model_dim


def base_moments(model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """(theta_0, Sigma_0): first and second moment of the first-step law."""
    _, first, second = step_field(model).moments()
    return first, second


@dataclass
class SpeedSeries:
    """Drift series: theta_0 plus the first moments of the coefficients."""

    theta_null: np.ndarray
    a: dict[int, np.ndarray]

    @classmethod
    def from_table(cls, model: ModelSpec, pi: PiTable) -> "SpeedSeries":
        theta_null, _ = base_moments(model)
        return cls(theta_null, {m: pi.first_moment(m) for m in pi.lags()})

    def theta(self, m_max: int) -> np.ndarray:
        out = self.theta_null.copy()
        for m in sorted(self.a):
            if m <= m_max:
                out = out + self.a[m]
        return out


@dataclass
class VarianceSeries:
    """Covariance series: Sigma_0 and the moment tables of the coefficients."""

    sigma_null: np.ndarray
    a: dict[int, np.ndarray]
    second: dict[int, np.ndarray]

    @classmethod
    def from_table(cls, model: ModelSpec, pi: PiTable) -> "VarianceSeries":
        _, sigma_null = base_moments(model)
        return cls(sigma_null,
                   {m: pi.first_moment(m) for m in pi.lags()},
                   {m: pi.second_moment(m) for m in pi.lags()})

    def sigma(self, theta: np.ndarray, m_max: int) -> np.ndarray:
        """Moment form of the covariance approximant."""
        out = self.sigma_null - np.outer(theta, theta)
        for m in sorted(self.a):
            if m > m_max:
                continue
            am = self.a[m]
            out = out - ((m - 1) * (np.outer(theta, am) + np.outer(am, theta))
                         - self.second[m])
        return out


def theta_truncated(model: ModelSpec, pi: PiTable, m_max: int) -> np.ndarray:
    """theta_M = theta_0 + sum_{m=2}^{M} a_m."""
    return SpeedSeries.from_table(model, pi).theta(m_max)


def sigma_truncated(model: ModelSpec, pi: PiTable, theta: np.ndarray,
                    m_max: int) -> np.ndarray:
    """Covariance approximant Sigma_M in the moment form.

    Also assembles the same quantity from the gradient/Hessian of the
    coefficients' Fourier transforms (the phase-twisted second derivative
    at k=0) and asserts the two routes agree to 1e-10.
    """
    series = VarianceSeries.from_table(model, pi)
    moment_form = series.sigma(theta, m_max)
    fourier_form = _sigma_fourier_form(model, pi, theta, m_max)
    assert np.max(np.abs(moment_form - fourier_form)) <= 1e-10, \
        "moment and Fourier assemblies of the covariance disagree"
    return moment_form


def _sigma_fourier_form(model: ModelSpec, pi: PiTable, theta: np.ndarray,
                        m_max: int) -> np.ndarray:
    """Sigma_0 - theta theta^T - sum_m Hess_k[e^{-i theta.k (m-1)} pihat_m(k)]_0."""
    _, sigma_null = base_moments(model)
    out = sigma_null - np.outer(theta, theta)
    for m in pi.lags():
        if m > m_max:
            continue
        grad = 1j * pi.first_moment(m)       # grad of pihat_m at 0
        hess = -pi.second_moment(m)          # Hessian of pihat_m at 0
        phase = -1j * (m - 1) * theta        # grad of the phase factor at 0
        # product rule; the pihat_m(0) = 0 term drops
        twisted = hess + np.outer(phase, grad) + np.outer(grad, phase)
        out = out - np.real(twisted)
    return out


def speed_identity_check(model: ModelSpec, pi: PiTable, n_max: int, *,
                         budget: int = DEFAULT_BUDGET,
                         moments: list | None = None) -> dict:
    """Exact per-step drift identity against enumerated means."""
    if pi.m_max < n_max + 1:
        raise ValueError(
            f"identity to n={n_max} needs coefficients to lag {n_max + 1}, "
            f"table stops at {pi.m_max}")
    if moments is None:
        moments = exact_moments(model, n_max + 1, budget=budget)
    series = SpeedSeries.from_table(model, pi)
    per_n = []
    for n in range(n_max + 1):
        lhs = moments[n + 1][0] - moments[n][0]
        rhs = series.theta(n + 1)
        per_n.append({"n": n, "residual": float(np.max(np.abs(lhs - rhs)))})
    return {"per_n": per_n, "max_residual": max(r["residual"] for r in per_n)}


def covariance_increment_check(model: ModelSpec, pi: PiTable, n_max: int, *,
                               budget: int = DEFAULT_BUDGET,
                               moments: list | None = None) -> dict:
    """Exact identity for the covariance increment at every step.

    The increment C_{n+1} - C_n is assembled from the one-step second
    moment, the coefficient moment tables, and the exact means; this must
    hold to arithmetic accuracy at every finite n.
    """
    if pi.m_max < n_max + 1:
        raise ValueError(
            f"identity to n={n_max} needs coefficients to lag {n_max + 1}, "
            f"table stops at {pi.m_max}")
    if moments is None:
        moments = exact_moments(model, n_max + 1, budget=budget)
    means = [m for m, _ in moments]
    covs = [c for _, c in moments]
    series = VarianceSeries.from_table(model, pi)
    one_step_second = series.sigma_null     # E[w_1 w_1^T]
    per_n = []
    for n in range(n_max + 1):
        lhs = covs[n + 1] - covs[n]
        rhs = one_step_second.copy()
        rhs = rhs + np.outer(means[1], means[n]) + np.outer(means[n], means[1])
        rhs = rhs - np.outer(means[n + 1], means[n + 1]) + np.outer(means[n], means[n])
        for m in range(2, n + 2):
            rhs = rhs + series.second[m]
            am = series.a[m]
            mu = means[n + 1 - m]
            rhs = rhs + np.outer(am, mu) + np.outer(mu, am)
        per_n.append({"n": n, "residual": float(np.max(np.abs(lhs - rhs)))})
    return {"per_n": per_n, "max_residual": max(r["residual"] for r in per_n)}


def variance_slope(model: ModelSpec, n_lo: int, n_hi: int, *,
                   budget: int = DEFAULT_BUDGET,
                   moments: list | None = None) -> np.ndarray:
    """Least-squares slope of Var(w_n) over n in [n_lo, n_hi].

    Uses the largest available window to damp the O(1) transient before
    comparing with the covariance approximant.
    """
    if moments is None:
        moments = exact_moments(model, n_hi, budget=budget)
    ns = np.arange(n_lo, n_hi + 1, dtype=float)
    d = model_dim(model)
    slope = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            ys = np.array([moments[int(n)][1][i, j] for n in ns])
            slope[i, j] = np.polyfit(ns, ys, 1)[0]
    return slope

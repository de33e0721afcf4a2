"""Monte Carlo endpoint sampling with counter-based, order-independent RNG.

Every sample owns a Philox stream keyed by (seed, global sample index), so
the random numbers a sample consumes do not depend on batching, scheduling,
or worker count.  Samples are grouped into fixed index-range batches; batch
statistics combine in batch order, making full runs byte-reproducible.

The generic path drives any model through its walker at Python speed.  A
compiled kernel covers the nearest-neighbour site-memory walk (two step
laws, chosen by whether the current site was seen before) in up to three
dimensions, sampling with the same uniform stream and the same
lexicographic cumulative order as the generic path, so the two agree
sample-for-sample.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .models import ExcitedWalk, ModelSpec, make_walker, model_dim

try:
    import numba
    HAVE_NUMBA = True
except ImportError:          # pragma: no cover - numba is an optional extra
    HAVE_NUMBA = False

DEFAULT_BATCHES = 100


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """The Philox stream owned by one sample."""
    return np.random.Generator(np.random.Philox(key=[seed, index]))


def _sorted_steps(model: ModelSpec) -> list[tuple[int, ...]]:
    return sorted(model.step_set)


def simulate_endpoint(model: ModelSpec, n: int, seed: int, index: int) -> tuple[int, ...]:
    """One endpoint after n steps, generic walker path."""
    rng = sample_rng(seed, index)
    us = rng.random(n)
    walker = make_walker(model)
    for t in range(n):
        law = walker.step_law()
        u = us[t]
        acc = 0.0
        chosen = None
        for s in sorted(law):
            acc += law[s]
            if u < acc:
                chosen = s
                break
        if chosen is None:          # u landed in the rounding slack at 1.0
            chosen = max(law)
        walker.push(chosen)
    return walker.position


if HAVE_NUMBA:
    @numba.njit(cache=True, nogil=True)
    def _site_memory_kernel(us, steps, fresh_cum, stale_cum, out):  # pragma: no cover
        nsamp, nstep = us.shape
        nmoves, dim = steps.shape
        tab_size = 1
        while tab_size < 4 * (nstep + 2):
            tab_size *= 2
        mask = tab_size - 1
        keys = np.empty(tab_size, np.int64)
        pos = np.empty(3, np.int64)
        for s in range(nsamp):
            for i in range(tab_size):
                keys[i] = -1
            for i in range(3):
                pos[i] = 0
            for t in range(nstep):
                code = pos[0] + 32768
                for i in range(1, dim):
                    code = (code << 16) | (pos[i] + 32768)
                # open-addressing insert; fresh iff the site was absent
                h = (code * 0x9E3779B97F4A7C15) & 0x7FFFFFFFFFFFFFFF
                idx = h & mask
                fresh = False
                while True:
                    k = keys[idx]
                    if k == code:
                        break
                    if k == -1:
                        keys[idx] = code
                        fresh = True
                        break
                    idx = (idx + 1) & mask
                u = us[s, t]
                move = nmoves - 1
                if fresh:
                    for i in range(nmoves):
                        if u < fresh_cum[i]:
                            move = i
                            break
                else:
                    for i in range(nmoves):
                        if u < stale_cum[i]:
                            move = i
                            break
                for i in range(dim):
                    pos[i] += steps[move, i]
            for i in range(dim):
                out[s, i] = pos[i]


def _fast_path_tables(model: ExcitedWalk):
    steps = _sorted_steps(model)
    fresh = model.fresh_law()
    stale = model.stale_law()
    fresh_cum = np.cumsum([fresh[s] for s in steps])
    stale_cum = np.cumsum([stale[s] for s in steps])
    return np.array(steps, dtype=np.int64), fresh_cum, stale_cum


def _fast_path_available(model: ModelSpec) -> bool:
    return HAVE_NUMBA and isinstance(model, ExcitedWalk) and model.dim <= 3


def _simulate_batch(model: ModelSpec, n: int, seed: int, lo: int, hi: int,
                    use_fast: bool) -> np.ndarray:
    """Endpoints for samples [lo, hi) as an integer array."""
    d = model_dim(model)
    count = hi - lo
    if use_fast:
        us = np.empty((count, n))
        for i in range(count):
            us[i] = sample_rng(seed, lo + i).random(n)
        steps, fresh_cum, stale_cum = _fast_path_tables(model)
        out = np.empty((count, d), dtype=np.int64)
        _site_memory_kernel(us, steps, fresh_cum, stale_cum, out)
        return out
    out = np.empty((count, d), dtype=np.int64)
    for i in range(count):
        out[i] = simulate_endpoint(model, n, seed, lo + i)
    return out


@dataclass
class McConfig:
    """Run parameters for an endpoint-sampling experiment."""

    n: int
    samples: int
    seed: int
    batches: int = DEFAULT_BATCHES
    cf_wavevectors: list[tuple[float, ...]] = field(default_factory=list)
    use_fast: str = "auto"          # "auto" | "never" | "require"
    workers: int = 1

    def batch_ranges(self) -> list[tuple[int, int]]:
        base, extra = divmod(self.samples, self.batches)
        ranges = []
        lo = 0
        for b in range(self.batches):
            size = base + (1 if b < extra else 0)
            if size == 0:
                continue
            ranges.append((lo, lo + size))
            lo += size
        return ranges


@dataclass
class McEstimate:
    """Combined statistics of one run."""

    n: int
    samples: int
    seed: int
    dim: int
    mean: np.ndarray
    cov: np.ndarray
    se_mean: np.ndarray
    se_cov: np.ndarray
    batch_means: np.ndarray
    central3: np.ndarray
    central4: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    cf: dict[tuple[float, ...], complex]
    cf_se: dict[tuple[float, ...], float]
    fast_path: bool

    def to_json_obj(self) -> dict:
        ks = sorted(self.cf)
        return {
            "n": self.n,
            "samples": self.samples,
            "seed": self.seed,
            "dim": self.dim,
            "fast_path": self.fast_path,
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "se_mean": self.se_mean.tolist(),
            "se_cov": self.se_cov.tolist(),
            "central3": self.central3.tolist(),
            "central4": self.central4.tolist(),
            "skewness": self.skewness.tolist(),
            "excess_kurtosis": self.excess_kurtosis.tolist(),
            "cf": [{"k": list(k), "re": self.cf[k].real, "im": self.cf[k].imag,
                    "se": self.cf_se[k]} for k in ks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True)


def estimate(model: ModelSpec, config: McConfig) -> McEstimate:
    """Run the experiment and combine batch statistics in fixed order."""
    d = model_dim(model)
    n = config.n
    if config.use_fast == "never":
        fast = False
    elif config.use_fast == "require":
        if not _fast_path_available(model):
            raise RuntimeError("compiled sampling path unavailable for this model")
        fast = True
    else:
        fast = _fast_path_available(model)

    ranges = config.batch_ranges()
    ks = [tuple(float(v) for v in k) for k in config.cf_wavevectors]
    kmat = np.array(ks, dtype=float).reshape(len(ks), d) if ks else None

    def batch_stats(rg):
        lo, hi = rg
        pts = _simulate_batch(model, n, config.seed, lo, hi, fast).astype(float)
        cnt = hi - lo
        bmean = pts.sum(axis=0) / cnt
        stats = {
            "count": cnt,
            "sum": pts.sum(axis=0),
            "sum_outer": pts.T @ pts,
            "cov": ((pts.T @ pts) - cnt * np.outer(bmean, bmean)) / max(cnt - 1, 1),
            "pow2": (pts ** 2).sum(axis=0),
            "pow3": (pts ** 3).sum(axis=0),
            "pow4": (pts ** 4).sum(axis=0),
        }
        if kmat is not None:
            stats["cf_sum"] = np.exp(1j * pts @ kmat.T).sum(axis=0)
        return stats

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            per_batch = list(pool.map(batch_stats, ranges))
    else:
        per_batch = [batch_stats(rg) for rg in ranges]

    # fixed-order combination over batches
    total = 0
    s1 = np.zeros(d)
    souter = np.zeros((d, d))
    p2 = np.zeros(d)
    p3 = np.zeros(d)
    p4 = np.zeros(d)
    cf_sum = np.zeros(len(ks), dtype=complex)
    bmeans = []
    bcovs = []
    bcf = []
    for st in per_batch:
        total += st["count"]
        s1 = s1 + st["sum"]
        souter = souter + st["sum_outer"]
        p2 = p2 + st["pow2"]
        p3 = p3 + st["pow3"]
        p4 = p4 + st["pow4"]
        bmeans.append(st["sum"] / st["count"])
        bcovs.append(st["cov"])
        if kmat is not None:
            cf_sum = cf_sum + st["cf_sum"]
            bcf.append(st["cf_sum"] / st["count"])

    mean = s1 / total
    cov = (souter - total * np.outer(mean, mean)) / (total - 1)
    bmeans = np.array(bmeans)
    nb = bmeans.shape[0]
    se_mean = bmeans.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.zeros(d)
    bcovs = np.array(bcovs)
    se_cov = (bcovs.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1
              else np.zeros((d, d)))

    m2 = p2 / total - mean ** 2
    m3 = p3 / total - 3 * mean * p2 / total + 2 * mean ** 3
    m4 = (p4 / total - 4 * mean * p3 / total + 6 * mean ** 2 * p2 / total
          - 3 * mean ** 4)
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = np.where(m2 > 0, m3 / np.maximum(m2, 1e-300) ** 1.5, 0.0)
        kurt = np.where(m2 > 0, m4 / np.maximum(m2, 1e-300) ** 2 - 3.0, 0.0)

    cf = {}
    cf_se = {}
    if kmat is not None:
        bcf = np.array(bcf)
        for i, k in enumerate(ks):
            cf[k] = complex(cf_sum[i] / total)
            if nb > 1:
                var = bcf[:, i].real.var(ddof=1) + bcf[:, i].imag.var(ddof=1)
                cf_se[k] = math.sqrt(var / nb)
            else:
                cf_se[k] = 0.0

    return McEstimate(n=n, samples=total, seed=config.seed, dim=d, mean=mean,
                      cov=cov, se_mean=se_mean, se_cov=se_cov,
                      batch_means=bmeans,
                      central3=m3, central4=m4, skewness=skew,
                      excess_kurtosis=kurt, cf=cf, cf_se=cf_se, fast_path=fast)


def standardized_wavevectors(k_list, n: int) -> list[tuple[float, ...]]:
    """Wavevectors at which to record the CF so that the standardized
    endpoint CF at the original k becomes available: k / sqrt(n)."""
    root = math.sqrt(n)
    return [tuple(float(v) / root for v in k) for k in k_list]


def clt_diagnostic(est: McEstimate, theta: np.ndarray, sigma: np.ndarray,
                   k_list, *, drift_residual: float = 0.0,
                   cov_residual: float = 0.0) -> dict:
    """Compare the CF of (w_n - n theta)/sqrt(n) against the Gaussian CF.

    The estimate must have been run with CF recording at k/sqrt(n) for
    every k in ``k_list``.  Deviations are reported next to three batch
    standard errors.  When (theta, sigma) are truncated-series values,
    their reported truncation residuals propagate to a first-order CF
    allowance |k| sqrt(n) * drift_residual + |k|^2/2 * cov_residual,
    capped at 2 (the diameter of the unit disc the CF lives in).
    """
    n = est.n
    root = math.sqrt(n)
    rows = []
    for k in k_list:
        kv = np.asarray(k, dtype=float)
        key = tuple(float(v) / root for v in kv)
        if key not in est.cf:
            raise KeyError(f"CF was not recorded at {key}")
        phase = np.exp(-1j * root * float(kv @ theta))
        empirical = phase * est.cf[key]
        gaussian = math.exp(-0.5 * float(kv @ sigma @ kv))
        dev = abs(empirical - gaussian)
        knorm = float(np.linalg.norm(kv))
        allowance = min(knorm * root * drift_residual
                        + 0.5 * knorm ** 2 * cov_residual, 2.0)
        rows.append({
            "k": [float(v) for v in kv],
            "empirical_re": empirical.real,
            "empirical_im": empirical.imag,
            "gaussian": gaussian,
            "deviation": dev,
            "three_se": 3.0 * est.cf_se[key],
            "truncation_allowance": allowance,
            "pass": dev <= 3.0 * est.cf_se[key] + allowance + 1e-12,
        })
    return {"rows": rows,
            "max_deviation": max(r["deviation"] for r in rows),
            "all_pass": all(r["pass"] for r in rows)}


def _extrapolated_norms(norms: dict[int, float], m_max: int, m_top: int) -> np.ndarray:
    """Extrapolate series-term sizes to lags m_max+1 .. m_top.

    The term sizes of these expansions oscillate with lag parity, so each
    parity branch is fitted separately: pairwise log-log exponents, with
    their observed drift extrapolated one step (the local exponent at
    small m systematically overstates the asymptotic decay).  Exponents
    are floored at 0.05 so a noisy fit degrades to a near-flat, highly
    conservative tail rather than a negative one.
    """
    out = np.zeros(max(m_top - m_max, 0))
    for parity in (0, 1):
        pts = [(m, v) for m, v in sorted(norms.items())
               if m % 2 == parity and v > 1e-14]
        if not pts:
            continue
        m_last, v_last = pts[-1]
        exps = [math.log(v0 / v1) / math.log(m1 / m0)
                for (m0, v0), (m1, v1) in zip(pts, pts[1:])]
        if not exps:
            p = 1.5
        elif len(exps) == 1:
            p = exps[-1]
        else:
            p = exps[-1] - (exps[-2] - exps[-1])
        p = max(p, 0.05)
        for m in range(m_max + 1, m_top + 1):
            if m % 2 == parity:
                out[m - m_max - 1] = v_last * (m / m_last) ** (-p)
    return out


def drift_truncation_residual(model, pi, n: int) -> float:
    """Estimated |empirical mean/n - theta_M| from series truncation alone.

    The mean increment at step j equals the drift series cut at lag j+1,
    so mean/n averages partial sums; the deviation from theta_M is the
    average over steps of the series mass in the lag gap between M and
    j+1, with lags beyond M extrapolated per parity branch.
    """
    from .observables import SpeedSeries
    series = SpeedSeries.from_table(model, pi)
    m_max = pi.m_max
    norms = {m: float(np.max(np.abs(series.a[m]))) for m in series.a}
    ext = _extrapolated_norms(norms, m_max, n)
    ext_prefix = np.concatenate([[0.0], np.cumsum(ext)])
    total = 0.0
    for j in range(n):
        t = j + 1
        if t >= m_max:
            total += ext_prefix[t - m_max]
        else:
            total += sum(norms.get(m, 0.0) for m in range(t + 1, m_max + 1))
    return float(total / n)


def covariance_truncation_residual(model, pi, n: int) -> float:
    """Estimated |empirical cov/n - Sigma_M| entry bound from truncation.

    Extrapolates the sizes of the covariance-series terms beyond lag M up
    to lag n (lags beyond the walk length never act).  For slowly decaying
    models this is deliberately conservative.
    """
    from .observables import SpeedSeries, VarianceSeries
    theta = SpeedSeries.from_table(model, pi).theta(pi.m_max)
    series = VarianceSeries.from_table(model, pi)
    m_max = pi.m_max
    norms = {}
    for m in series.a:
        am = series.a[m]
        t = (m - 1) * (np.outer(theta, am) + np.outer(am, theta)) - series.second[m]
        norms[m] = float(np.max(np.abs(t)))
    ext = _extrapolated_norms(norms, m_max, n)
    return float(np.sum(ext))


def geometric_tail(term_norms) -> float:
    """Tail estimate for a truncated series from its last two term sizes.

    Assumes (approximately) geometric decay; if the observed ratio is not
    contracting the last term itself is returned as a conservative floor.
    """
    terms = [float(t) for t in term_norms if float(t) > 0.0]
    if not terms:
        return 0.0
    last = terms[-1]
    if len(terms) < 2:
        return last
    ratio = last / terms[-2]
    if ratio >= 1.0:
        return last
    return last * ratio / (1.0 - ratio)

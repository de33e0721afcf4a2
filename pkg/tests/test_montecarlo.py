import numpy as np
import pytest

from siwalk.enumeration import exact_moments
from siwalk.expansion import pi_from_recurrence
from siwalk.models import (BaseWalk, ExcitedWalk, ReinforcedWalk, load_model)
from siwalk.montecarlo import (HAVE_NUMBA, McConfig, _simulate_batch,
                               clt_diagnostic, covariance_truncation_residual,
                               drift_truncation_residual, estimate,
                               geometric_tail, simulate_endpoint,
                               standardized_wavevectors)
from siwalk.observables import sigma_truncated, theta_truncated

ERW2 = ExcitedWalk(dim=2, beta=0.2)
OERRW = load_model("configs/oerrw1d.json")


class TestDeterminism:
    def test_same_seed_same_bytes(self):
        cfg = McConfig(n=50, samples=500, seed=7, batches=10,
                       cf_wavevectors=[(0.1, 0.0)])
        a = estimate(ERW2, cfg).to_json()
        b = estimate(ERW2, cfg).to_json()
        assert a == b

    def test_worker_count_invariance(self):
        base = dict(n=50, samples=500, seed=7, batches=10,
                    cf_wavevectors=[(0.1, 0.0)])
        a = estimate(ERW2, McConfig(workers=1, **base)).to_json()
        b = estimate(ERW2, McConfig(workers=8, **base)).to_json()
        assert a == b

    def test_sample_stream_independent_of_batching(self):
        a = McConfig(n=10, samples=100, seed=3, batches=4).batch_ranges()
        b = McConfig(n=10, samples=100, seed=3, batches=25).batch_ranges()
        pts_a = np.concatenate([_simulate_batch(ERW2, 10, 3, lo, hi, False)
                                for lo, hi in a])
        pts_b = np.concatenate([_simulate_batch(ERW2, 10, 3, lo, hi, False)
                                for lo, hi in b])
        assert np.array_equal(pts_a, pts_b)

    @pytest.mark.skipif(not HAVE_NUMBA, reason="compiled path unavailable")
    def test_fast_path_matches_generic_exactly(self):
        for model in [ERW2, ExcitedWalk(dim=1, beta=0.5),
                      ExcitedWalk(dim=3, beta=0.3)]:
            fast = _simulate_batch(model, 40, 11, 0, 60, True)
            slow = _simulate_batch(model, 40, 11, 0, 60, False)
            assert np.array_equal(fast, slow)

    def test_fast_require_rejects_other_models(self):
        cfg = McConfig(n=10, samples=100, seed=0, batches=4, use_fast="require")
        with pytest.raises(RuntimeError):
            estimate(OERRW, cfg)


class TestStatistics:
    def test_erw1_single_step_law(self):
        model = ExcitedWalk(dim=1, beta=0.5)
        pts = [simulate_endpoint(model, 1, 5, i)[0] for i in range(4000)]
        p_up = sum(1 for v in pts if v == 1) / len(pts)
        se = np.sqrt(0.75 * 0.25 / len(pts))
        assert abs(p_up - 0.75) <= 3 * se

    def test_symmetric_walk_mean_near_zero(self):
        model = BaseWalk(dim=1, steps=(((1,), 0.5), ((-1,), 0.5)))
        cfg = McConfig(n=200, samples=4000, seed=1, batches=20)
        est = estimate(model, cfg)
        assert abs(est.mean[0]) <= 3 * est.se_mean[0] + 1e-9

    def test_mean_matches_exact_enumeration(self):
        n = 8
        cfg = McConfig(n=n, samples=20000, seed=9, batches=20)
        est = estimate(ERW2, cfg)
        exact_mean, exact_cov = exact_moments(ERW2, n)[n]
        assert np.all(np.abs(est.mean - exact_mean) <= 4 * est.se_mean)
        assert np.max(np.abs(est.cov - exact_cov)) <= 0.1

    def test_covariance_psd(self):
        cfg = McConfig(n=30, samples=2000, seed=2, batches=10)
        est = estimate(ERW2, cfg)
        eig = np.linalg.eigvalsh(est.cov)
        assert np.min(eig) >= -1e-8

    def test_se_scales_with_samples(self):
        small = estimate(ERW2, McConfig(n=20, samples=2000, seed=4))
        big = estimate(ERW2, McConfig(n=20, samples=8000, seed=4))
        ratio = small.se_mean[0] / big.se_mean[0]
        assert 2.0 * 0.7 <= ratio <= 2.0 * 1.3

    def test_oerrw_drift_vs_series(self):
        pi = pi_from_recurrence(OERRW, 6)
        theta = theta_truncated(OERRW, pi, 6)
        n = 400
        cfg = McConfig(n=n, samples=4000, seed=6, batches=20)
        est = estimate(OERRW, cfg)
        res = drift_truncation_residual(OERRW, pi, n)
        assert abs(est.mean[0] / n - theta[0]) <= 3 * est.se_mean[0] / n + res


class TestCltDiagnostic:
    def test_gaussian_reference_for_simple_walk(self):
        model = BaseWalk(dim=1, steps=(((1,), 0.5), ((-1,), 0.5)))
        n = 400
        ks = [(0.4,), (0.8,)]
        cfg = McConfig(n=n, samples=20000, seed=12, batches=20,
                       cf_wavevectors=standardized_wavevectors(ks, n))
        est = estimate(model, cfg)
        rep = clt_diagnostic(est, np.zeros(1), np.eye(1), ks)
        assert rep["all_pass"], rep

    def test_missing_wavevector_raises(self):
        cfg = McConfig(n=10, samples=200, seed=0, batches=4)
        est = estimate(ERW2, cfg)
        with pytest.raises(KeyError):
            clt_diagnostic(est, np.zeros(2), np.eye(2), [(0.3, 0.0)])

    def test_allowance_capped(self):
        model = BaseWalk(dim=1, steps=(((1,), 0.5), ((-1,), 0.5)))
        n = 100
        ks = [(0.5,)]
        cfg = McConfig(n=n, samples=500, seed=0, batches=5,
                       cf_wavevectors=standardized_wavevectors(ks, n))
        est = estimate(model, cfg)
        rep = clt_diagnostic(est, np.zeros(1), np.eye(1), ks,
                             drift_residual=100.0)
        assert rep["rows"][0]["truncation_allowance"] == 2.0


class TestResiduals:
    def test_geometric_tail(self):
        assert geometric_tail([]) == 0.0
        assert geometric_tail([1.0]) == 1.0
        assert geometric_tail([1.0, 0.5]) == pytest.approx(0.5)
        assert geometric_tail([0.5, 1.0]) == 1.0   # non-contracting

    def test_drift_residual_covers_slow_series(self):
        pi = pi_from_recurrence(ERW2, 8)
        res = drift_truncation_residual(ERW2, pi, 2000)
        # empirical gap established during development is about 0.026
        assert 0.02 <= res <= 0.2

    def test_cov_residual_nonnegative_and_fast_decay_small(self):
        pi = pi_from_recurrence(OERRW, 6)
        assert covariance_truncation_residual(OERRW, pi, 500) >= 0.0
        pi2 = pi_from_recurrence(ERW2, 8)
        assert covariance_truncation_residual(ERW2, pi2, 2000) > 0.1

import numpy as np
import pytest

from siwalk.expansion import (DIRECT_M_CAP, DirectCapExceededError, PiTable,
                              coefficient_bound_suite, k_grid, pi_direct,
                              pi_direct_table, pi_from_recurrence, pi_hat,
                              pi_hat_gradient, pi_hat_gradient_fd,
                              pi_hat_hessian, pi_hat_hessian_fd, step_field,
                              verify_recurrence)
from siwalk.models import (BaseWalk, ExcitedWalk, PartialEnvironmentWalk,
                           ReinforcedWalk, load_model)

ERW1 = ExcitedWalk(dim=1, beta=0.5)
ERW2 = ExcitedWalk(dim=2, beta=0.2)
OERRW = ReinforcedWalk(dim=1, weights=(((1,), 2.0), ((-1,), 1.0)),
                       reinforcement=(0.3,))
RWPRE = load_model("configs/rwpre2d.json")


class TestRouteAgreement:
    @pytest.mark.parametrize("model,m_max", [
        (ERW1, 6), (ERW2, 5), (OERRW, 6), (RWPRE, 4),
    ])
    def test_direct_matches_recurrence(self, model, m_max):
        rec = pi_from_recurrence(model, m_max)
        direct = pi_direct_table(model, m_max)
        for m in range(2, m_max + 1):
            diff = (rec.marginals[m] - direct.marginals[m]).max_abs()
            assert diff <= 1e-10, f"routes disagree at lag {m}: {diff}"

    def test_slices_zero_beyond_loop_cap(self):
        # N+1 > m leaves no room for N interaction factors
        slices = pi_direct(ERW1, 3, n_max=4)
        assert len(slices[3]) == 0
        assert len(slices[4]) == 0

    def test_direct_cap(self):
        with pytest.raises(DirectCapExceededError):
            pi_direct(ERW1, DIRECT_M_CAP + 1)


class TestStructuralZeros:
    @pytest.mark.parametrize("model", [ERW1, ERW2, OERRW, RWPRE])
    def test_marginal_mass_vanishes(self, model):
        pi = pi_from_recurrence(model, 6)
        for m in pi.lags():
            mass, _, _ = pi.marginal(m).moments()
            assert abs(mass) <= 1e-10

    @pytest.mark.parametrize("model", [ERW1, ERW2, OERRW, RWPRE])
    def test_row_sums_vanish(self, model):
        direct = pi_direct_table(model, 5)
        for m in direct.lags():
            assert direct.row_sum_max(m) <= 1e-10

    def test_pi2_zero_for_excited_walk(self):
        pi = pi_from_recurrence(ERW1, 4)
        assert pi.marginal(2).max_abs() <= 1e-12

    def test_all_coefficients_vanish_without_interaction(self):
        model = BaseWalk(dim=1, steps=(((1,), 0.6), ((-1,), 0.4)))
        pi = pi_from_recurrence(model, 6)
        for m in pi.lags():
            assert pi.marginal(m).max_abs() <= 1e-12
        erw0 = ExcitedWalk(dim=2, beta=0.0)
        pi0 = pi_from_recurrence(erw0, 5)
        for m in pi0.lags():
            assert pi0.marginal(m).max_abs() <= 1e-12


class TestHandValues:
    @pytest.mark.parametrize("beta", [0.2, 0.5])
    def test_erw1_lag3_closed_form(self, beta):
        model = ExcitedWalk(dim=1, beta=beta)
        pi = pi_from_recurrence(model, 3)
        expected = beta * (1 - beta ** 2) / 4
        assert pi.marginal(3)[(1,)] == pytest.approx(-expected, abs=1e-12)
        assert pi.marginal(3)[(-1,)] == pytest.approx(expected, abs=1e-12)

    def test_step_field_erw2(self):
        D = step_field(ERW2)
        mass, first, second = D.moments()
        assert mass == pytest.approx(1.0)
        assert first == pytest.approx(np.array([0.2 / 2, 0.0]))
        assert second == pytest.approx(np.diag([0.5, 0.5]))


class TestRecurrence:
    @pytest.mark.parametrize("model,n_max", [(ERW1, 8), (OERRW, 8), (ERW2, 6)])
    def test_residuals_vanish(self, model, n_max):
        pi = pi_from_recurrence(model, n_max + 1)
        rep = verify_recurrence(model, pi, n_max)
        assert rep["max_x_residual"] <= 1e-10
        assert rep["max_k_residual"] <= 1e-10
        assert not rep["truncated"]

    def test_truncated_table_flagged(self):
        pi = pi_from_recurrence(ERW1, 3)
        rep = verify_recurrence(ERW1, pi, 5)
        assert rep["truncated"]


class TestFourierAccess:
    def test_gradient_exact_vs_finite_difference(self):
        pi = pi_from_recurrence(ERW2, 5)
        for m in pi.lags():
            g = pi_hat_gradient(pi, m)
            g_fd = pi_hat_gradient_fd(pi, m)
            assert np.max(np.abs(g - g_fd)) <= 1e-6
            h = pi_hat_hessian(pi, m)
            h_fd = pi_hat_hessian_fd(pi, m)
            assert np.max(np.abs(h - h_fd)) <= 1e-6

    def test_pi_hat_zero(self):
        pi = pi_from_recurrence(ERW1, 5)
        for m in pi.lags():
            assert abs(pi_hat(pi, m, [0.0])) <= 1e-12

    def test_k_grid_contains_origin(self):
        grid = k_grid(2, points_per_axis=5)
        assert (0.0, 0.0) in grid
        assert len(grid) == 25
        assert max(abs(v) for k in grid for v in k) <= np.pi / 2


class TestBoundSuite:
    @pytest.mark.parametrize("model", [ERW1, ERW2, OERRW, RWPRE])
    def test_all_bounds_hold(self, model):
        table = pi_direct_table(model, 5)
        rep = coefficient_bound_suite(model, table)
        assert rep["all_pass"], rep


class TestPiTable:
    def test_json_roundtrip(self):
        table = pi_direct_table(ERW1, 4)
        again = PiTable.from_json_obj(table.to_json_obj())
        assert again.dim == table.dim
        for m in table.lags():
            assert again.marginals[m].entries == table.marginals[m].entries
            assert again.pairs[m].entries == table.pairs[m].entries

    def test_abs_pair_mass_fallback(self):
        rec = pi_from_recurrence(ERW1, 4)       # marginals only
        direct = pi_direct_table(ERW1, 4)
        assert rec.abs_pair_mass(3) <= direct.abs_pair_mass(3) + 1e-12

    def test_row_sum_requires_pairs(self):
        rec = pi_from_recurrence(ERW1, 4)
        with pytest.raises(KeyError):
            rec.row_sum_max(3)


class TestBetaScaling:
    def test_erw_masses_scale_linearly(self):
        # S_m / beta drifts by <= 20% from beta=0.4 down to 0.05
        betas = [0.4, 0.2, 0.1, 0.05]
        ratios = {}
        for b in betas:
            pi = pi_direct_table(ExcitedWalk(dim=1, beta=b), 5)
            for m in pi.lags():
                ratios.setdefault(m, []).append(pi.abs_pair_mass(m) / b)
        for m, vals in ratios.items():
            if max(vals) <= 1e-12:
                continue
            # S_m/beta settles as beta -> 0 (limit may be 0 for lags whose
            # leading order in beta is higher than linear)
            drift = abs(vals[-1] - vals[-2]) / (max(vals) + 1e-300)
            assert drift <= 0.20, f"lag {m}: S_m/beta drifts {drift:.2%}"

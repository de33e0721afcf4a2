import numpy as np
import pytest

from siwalk.enumeration import (BudgetExceededError, conditional_two_point,
                                exact_moments, sup_return_probability,
                                two_point, two_point_profile)
from siwalk.models import (BaseWalk, ExcitedWalk, PathHistory, ReinforcedWalk,
                           conditional_step_law, first_step_law)

ERW1 = ExcitedWalk(dim=1, beta=0.5)
ERW2 = ExcitedWalk(dim=2, beta=0.2)
OERRW = ReinforcedWalk(dim=1, weights=(((1,), 2.0), ((-1,), 1.0)),
                       reinforcement=(0.3,))


class TestExactLaws:
    @pytest.mark.parametrize("model", [ERW1, ERW2, OERRW])
    def test_mass_conservation(self, model):
        for n in range(6):
            mass, _, _ = two_point(model, n).moments()
            assert mass == pytest.approx(1.0, abs=1e-12)

    def test_one_step_law_is_first_step_law(self):
        f = two_point(ERW2, 1)
        law = first_step_law(ERW2)
        for s, p in law.items():
            assert f[s] == pytest.approx(p)

    def test_oerrw_return_probability_hand_value(self):
        # 2:1 weights, no reinforcement: P(origin after 2 steps) = 4/9
        model = ReinforcedWalk(dim=1, weights=(((1,), 2.0), ((-1,), 1.0)),
                               reinforcement=())
        assert two_point(model, 2)[(0,)] == pytest.approx(4 / 9, abs=1e-14)

    def test_base_walk_is_binomial(self):
        model = BaseWalk(dim=1, steps=(((1,), 0.5), ((-1,), 0.5)))
        f = two_point(model, 4)
        assert f[(0,)] == pytest.approx(6 / 16)
        assert f[(4,)] == pytest.approx(1 / 16)

    def test_erw1_two_step_hand_value(self):
        # P(+2) = fresh(+1) * fresh(+1): site 1 is new after the first step
        f = two_point(ERW1, 2)
        assert f[(2,)] == pytest.approx(0.75 * 0.75)
        # P(0): +1 then -1, or -1 then +1 (both second steps from fresh sites)
        assert f[(0,)] == pytest.approx(0.75 * 0.25 + 0.25 * 0.75)


class TestDeterminism:
    @pytest.mark.parametrize("model", [ERW2, OERRW])
    def test_serial_equals_parallel_bitwise(self, model):
        a = two_point_profile(model, 6, workers=1)
        b = two_point_profile(model, 6, workers=8)
        for fa, fb in zip(a, b):
            assert fa.entries == fb.entries     # exact float equality

    @pytest.mark.parametrize("model", [ERW1, ERW2, OERRW])
    def test_forward_equals_reverse_traversal(self, model):
        a = two_point(model, 6)
        b = two_point(model, 6, reverse=True)
        for x in set(a.support()) | set(b.support()):
            assert a[x] == pytest.approx(b[x], abs=1e-14)


class TestConditional:
    @pytest.mark.parametrize("model", [ERW1, OERRW])
    def test_first_step_decomposition(self, model):
        # c_n = sum_s D(s) * (law after history s), exactly
        n = 5
        total = two_point(model, n)
        law = first_step_law(model)
        acc = {}
        for s, p in sorted(law.items()):
            h = PathHistory.from_steps(model.dim, [s])
            f = conditional_two_point(model, h, n - 1)
            for x, w in f:
                acc[x] = acc.get(x, 0.0) + p * w
        for x in total.support():
            assert total[x] == pytest.approx(acc[x], abs=1e-13)

    def test_history_shifts_support(self):
        h = PathHistory.from_steps(1, [(1,), (1,)])
        f = conditional_two_point(ERW1, h, 0)
        assert f[(2,)] == 1.0


class TestMomentsAndBudget:
    def test_exact_moments_match_fields(self):
        moments = exact_moments(ERW2, 4)
        f = two_point(ERW2, 4)
        _, first, second = f.moments()
        assert moments[4][0] == pytest.approx(first)
        cov = second - np.outer(first, first)
        assert moments[4][1] == pytest.approx(cov)

    def test_budget_exceeded(self):
        with pytest.raises(BudgetExceededError) as err:
            two_point(ERW2, 10, budget=1000)
        assert err.value.needed > err.value.budget

    def test_sup_return_probability(self):
        rep = sup_return_probability(ERW1, 2, 2)
        assert 0.0 < rep["sup_return"] <= 1.0
        assert rep["sup_point"] >= rep["sup_return"]
        assert rep["argmax_history"] is not None

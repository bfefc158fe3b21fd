import math

import numpy as np
import pytest

from choreeq.disutility import ProfileMap, make_oracle
from choreeq.equilibrium import (check_ef, check_po, convex_optimal_cost, ef_po_round,
                                 epsilon_from_errors, from_kkt_general, from_kkt_linear,
                                 general_prices, linear_optimal_cost, verify_ceei)
from choreeq.errors import DimensionMismatch, ZeroColumn, ZeroPrices
from choreeq.instance import CES, Instance, linear_instance, validate_allocation
from choreeq.solver import KktCertificate, SolverParams, solve_kkt_general, solve_kkt_linear

from .conftest import random_ces, random_linear

# min sqrt(y1^2 + 2 y2^2) subject to y1 + y2 = 1: closed form 1/sqrt(1 + 1/2),
# confirmed by scipy SLSQP to 1e-15.
CES_OPT_COST = 0.816496580927726


def _cert(a, d, x, gamma=1.0):
    return KktCertificate(np.asarray(a, float), np.asarray(d, float), np.asarray(x, float),
                          gamma, 1.0, 0.0, 1, [])


class TestFromKktLinear:
    def test_symmetric_exact(self, sym2):
        eq = from_kkt_linear(sym2, _cert([1, 1], [1, 1], np.eye(2)))
        np.testing.assert_allclose(eq.x, np.eye(2), atol=1e-9)
        np.testing.assert_allclose(eq.p, [1, 1])
        np.testing.assert_allclose(eq.x @ eq.p, [1, 1])
        assert eq.passed

    def test_single_agent(self):
        inst = linear_instance([[2.0, 3.0]])
        eq = from_kkt_linear(inst, _cert([0.2], [5.0], [[1, 1]]))
        np.testing.assert_allclose(eq.x, [[1, 1]])
        assert eq.p.sum() == pytest.approx(1.0)

    def test_identical_agents(self):
        n, m = 2, 3
        inst = linear_instance(np.ones((n, m)))
        eq = from_kkt_linear(inst, _cert(np.full(n, n / m), np.full(n, m / n),
                                         np.full((n, m), 1 / n)))
        np.testing.assert_allclose(eq.p, n / m)
        assert eq.passed

    def test_price_sum_identity(self, rng):
        for _ in range(10):
            inst = random_linear(rng, 3, 4)
            cert = solve_kkt_linear(inst, SolverParams(0.05))
            eq = from_kkt_linear(inst, cert)
            assert eq.p.sum() == pytest.approx(3.0, abs=1e-8)


class TestFromKktGeneral:
    def test_linear_gradient_rule(self, rng):
        inst = random_linear(rng, 3, 3)
        pm = ProfileMap.from_instance(inst)
        a = rng.uniform(0.5, 2.0, 3)
        x = rng.dirichlet(np.ones(3), size=3).T
        np.testing.assert_allclose(general_prices(pm, a, x), (a[:, None] * inst.matrix()).min(0))

    def test_exact_errors_give_zero(self):
        assert epsilon_from_errors(1.0, 1.0, 0.0) == 0.0
        assert epsilon_from_errors(1.1, 1.0, 0.01) == pytest.approx(0.35)
        assert epsilon_from_errors(1.0, 1.5, 0.0) == pytest.approx(0.5)

    def test_symmetric_ces(self):
        pm = ProfileMap.from_instance(Instance(2, 2, (CES((1.0, 2.0), 2.0),
                                                      CES((2.0, 1.0), 2.0))))
        eq = from_kkt_general(pm, solve_kkt_general(pm, SolverParams(0.05)))
        assert eq.passed
        assert eq.epsilon <= 0.2
        assert set(eq.measured) >= {"gamma", "lambda", "delta", "certificate_epsilon"}

    def test_zero_column(self):
        pm = ProfileMap.from_instance(linear_instance([[1.0, 1.0]]))
        with pytest.raises(ZeroColumn):
            from_kkt_general(pm, _cert([1.0], [1.0], [[1.0, 0.0]]))


class TestVerify:
    def test_exact(self, sym2):
        r = verify_ceei(sym2, np.eye(2), [1, 1], 1e-9)
        assert r.passed
        assert r.residuals == {"income_ratio_worst": 0.0, "optimal_bundle_worst": 0.0,
                               "feasibility_worst": 0.0}

    def test_unequal_earnings(self, sym2):
        r = verify_ceei(sym2, np.eye(2), [1, 2], 1e-9)
        assert not r.passed
        assert r.income_ratio_worst == pytest.approx(0.5)

    def test_swapped_rows(self, sym2):
        r = verify_ceei(sym2, [[0, 1], [1, 0]], [1, 1], 1e-9)
        assert not r.passed
        # disutility 2 against an optimal 1 at budget 1
        assert r.optimal_bundle_worst == pytest.approx(0.5)
        np.testing.assert_allclose(r.optimal_costs, [1, 1])

    def test_feasibility(self, sym2):
        r = verify_ceei(sym2, [[1, 0], [0, 0.9]], [1, 1], 0.05)
        assert r.feasibility_worst == pytest.approx(0.1)
        assert not r.passed

    def test_weighted(self, sym2):
        x = np.array([[1.0, 0.5], [0.0, 0.5]])
        p = np.array([1.0, 1.0])
        assert verify_ceei(sym2, x, p, 1e-9, weights=[3, 1]).income_ratio_worst == 0.0

    def test_errors(self, sym2):
        with pytest.raises(ZeroPrices):
            verify_ceei(sym2, np.eye(2), [0, 0], 0.1)
        with pytest.raises(DimensionMismatch):
            verify_ceei(sym2, np.eye(3), [1, 1], 0.1)

    def test_linear_optimal_cost(self):
        assert linear_optimal_cost(np.array([1.0, 2.0]), np.array([1.0, 1.0]), 1.0) == 1.0
        assert linear_optimal_cost(np.array([4.0, 2.0]), np.array([2.0, 0.5]), 3.0) == 6.0

    def test_convex_optimal_cost_frozen(self):
        o = make_oracle(CES((1.0, 2.0), 2.0))
        assert convex_optimal_cost(o, np.array([1.0, 1.0]), 1.0) == pytest.approx(
            CES_OPT_COST, abs=1e-9)
        assert convex_optimal_cost(o, np.array([1.0, 1.0]), 3.0) == pytest.approx(
            3 * CES_OPT_COST, abs=1e-8)


class TestRounding:
    def test_identity(self, sym2):
        x = np.array([[0.3, 0.6], [0.7, 0.4]])
        np.testing.assert_array_equal(ef_po_round(sym2, x), x)

    def test_column_division(self, sym2):
        x = np.array([[0.6, 0.45], [0.5, 0.45]])
        y = ef_po_round(sym2, x)
        np.testing.assert_allclose(y[:, 0], x[:, 0] / 1.1)
        np.testing.assert_allclose(y[:, 1], x[:, 1] / 0.9)

    def test_random_over_allocation(self, rng):
        inst = random_linear(rng, 3, 4)
        for _ in range(50):
            x = rng.uniform(0.0, 1.0, (3, 4)) + 0.01
            y = ef_po_round(inst, x)
            assert validate_allocation(inst, y, tol=1e-12).feasible_exact

    def test_zero_column(self, sym2):
        with pytest.raises(ZeroColumn):
            ef_po_round(sym2, [[1, 0], [0, 0]])


class TestEnvyFree:
    def test_symmetric(self, sym2):
        r = check_ef(sym2, np.eye(2), 0.0)
        assert r.passed and r.min_ratio == 2.0

    def test_single_agent(self):
        assert check_ef(linear_instance([[1.0, 2.0]]), [[1, 1]], 0.0).passed

    def test_envious(self):
        inst = linear_instance(np.ones((2, 2)))
        r = check_ef(inst, [[1, 1], [0, 0]], 0.2)
        assert r.min_ratio == 0.0 and not r.passed


class TestParetoOptimal:
    def test_symmetric(self, sym2):
        r = check_po(sym2, np.eye(2), 0.0)
        assert r.t_star == pytest.approx(1.0, abs=1e-9) and r.passed

    def test_wasteful(self):
        inst = linear_instance([[1.0, 10.0], [10.0, 1.0]])
        r = check_po(inst, [[0, 1], [1, 0]], 0.01)
        assert r.t_star == pytest.approx(0.1, abs=1e-9)
        assert not r.passed

    def test_single(self):
        assert check_po(linear_instance([[3.0]]), [[1.0]], 0.0).t_star == pytest.approx(1.0)

    def test_ces_convex_program(self):
        # Fractional splits beat both whole-chore allocations here. Reference
        # values 2/sqrt(5) and 1/sqrt(5) from scipy SLSQP (20 random starts).
        inst = Instance(2, 2, (CES((1.0, 4.0), 2.0), CES((4.0, 1.0), 2.0)))
        diag = check_po(inst, np.eye(2), 0.06)
        anti = check_po(inst, [[0, 1], [1, 0]], 0.06)
        assert diag.t_star == pytest.approx(2 / math.sqrt(5), abs=1e-8)
        assert anti.t_star == pytest.approx(1 / math.sqrt(5), abs=1e-8)
        assert diag.passed and not anti.passed


def test_general_pipeline_random_ces(rng):
    inst = random_ces(rng, 3, 3)
    pm = ProfileMap.from_instance(inst)
    eq = from_kkt_general(pm, solve_kkt_general(pm, SolverParams(0.05)))
    assert eq.passed, eq.residuals
    assert math.isfinite(eq.epsilon)

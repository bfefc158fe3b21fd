import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from choreeq.disutility import (CESOracle, LinearOracle, ProfileMap, gradient,
                                lipschitz_constant, make_oracle, profile, value)
from choreeq.errors import DimensionMismatch, GradientSingularity, NegativeInput
from choreeq.instance import CES, Linear, linear_instance


def test_linear_value():
    o = make_oracle(Linear((1.0, 2.0)))
    assert isinstance(o, LinearOracle)
    assert value(o, [1, 1]) == 3.0
    assert value(o, [0, 0]) == 0.0


def test_ces_value_is_norm():
    o = make_oracle(CES((1.0, 1.0), 2.0))
    assert isinstance(o, CESOracle)
    assert value(o, [3, 4]) == pytest.approx(5.0, rel=1e-15)


def test_ces_large_rho_no_overflow():
    o = make_oracle(CES((1.0, 1.0), 400.0))
    assert value(o, [10.0, 10.0]) == pytest.approx(10.0 * 2 ** (1 / 400))


def test_linear_gradient_constant():
    o = make_oracle(Linear((3.0, 7.0)))
    for x in ([0, 0], [1, 5], [0.2, 0.0]):
        np.testing.assert_array_equal(gradient(o, x), [3, 7])


def test_ces_gradient_example():
    o = make_oracle(CES((1.0, 1.0), 2.0))
    np.testing.assert_allclose(gradient(o, [3, 4]), [0.6, 0.8], rtol=1e-14)


def test_ces_gradient_singular_at_origin():
    o = make_oracle(CES((1.0, 1.0), 2.0))
    with pytest.raises(GradientSingularity):
        gradient(o, [0, 0])
    # the floor is the documented way around it
    g = gradient(o, [0, 0], floor=1e-9)
    assert np.all(g > 0)


def test_ces_rho_one_is_linear():
    a = make_oracle(CES((2.0, 5.0), 1.0))
    b = make_oracle(Linear((2.0, 5.0)))
    x = np.array([0.3, 0.9])
    assert value(a, x) == pytest.approx(value(b, x))
    np.testing.assert_array_equal(gradient(a, [0, 0]), [2, 5])


@pytest.mark.parametrize("x", [[-1.0, 0.0], [np.nan, 1.0], [np.inf, 0.0]])
def test_negative_input(x):
    with pytest.raises(NegativeInput):
        value(make_oracle(Linear((1.0, 1.0))), x)


def test_wrong_length():
    with pytest.raises(DimensionMismatch):
        value(make_oracle(Linear((1.0, 1.0))), [1.0, 1.0, 1.0])


class TestLipschitz:
    def test_linear_examples(self):
        assert lipschitz_constant(Linear((2.0, 4.0))) == 4.0
        assert lipschitz_constant(Linear((1.0, 1.0))) == 1.0
        assert lipschitz_constant(Linear((0.25, 2.0))) == 4.0

    def test_linear_bounds_sampled(self, rng):
        spec = Linear((2.0, 4.0))
        o, L = make_oracle(spec), lipschitz_constant(spec)
        for _ in range(1000):
            x = rng.uniform(0, 2, size=2)
            t = rng.uniform(0, 1)
            j = rng.integers(2)
            e = np.zeros(2)
            e[j] = t
            assert o.value(x + e) - o.value(x) >= t / L - 1e-12
            # the upper bound holds per coordinate direction; the Euclidean
            # form would need ||D||_2 = sqrt(20) > L
            assert o.value(x + e) - o.value(x) <= L * t + 1e-12

    def test_ces_bounds_sampled(self, rng):
        spec = CES((1.0, 1.0), 2.0)
        L = lipschitz_constant(spec, grad_floor=1e-6, bound=2.0)
        assert 1.0 < L < math.inf
        o = make_oracle(spec, grad_floor=1e-6)
        for _ in range(1000):
            x = rng.uniform(1e-6, 1.5, size=2)
            j = rng.integers(2)
            t = rng.uniform(0, 0.5)
            e = np.zeros(2)
            e[j] = t
            assert o.value(x + e) - o.value(x) >= t / L - 1e-12
            y = rng.uniform(0, 2, size=2)
            assert abs(o.value(x) - o.value(y)) <= L * np.linalg.norm(x - y) + 1e-12


class TestProfile:
    def test_diagonal(self):
        pm = ProfileMap.from_instance(linear_instance([[1, 2], [2, 1]]))
        np.testing.assert_array_equal(profile(pm, [[1, 0], [0, 1]]), [1, 1])
        np.testing.assert_array_equal(profile(pm, np.zeros((2, 2))), [0, 0])
        np.testing.assert_allclose(profile(pm, np.full((2, 2), 0.5)), [1.5, 1.5])

    def test_mixed_kinds(self):
        pm = ProfileMap([make_oracle(CES((1.0, 1.0), 2.0)), make_oracle(Linear((1.0, 1.0)))])
        assert not pm.is_linear
        np.testing.assert_allclose(profile(pm, [[3, 4], [1, 1]]), [5, 2])

    def test_shape_mismatch(self):
        pm = ProfileMap.from_instance(linear_instance([[1, 2], [2, 1]]))
        with pytest.raises(DimensionMismatch):
            profile(pm, np.ones((3, 2)))

    def test_oracles_must_agree_on_m(self):
        with pytest.raises(DimensionMismatch):
            ProfileMap([make_oracle(Linear((1.0,))), make_oracle(Linear((1.0, 2.0)))])


# ------------------------------------------------------------- properties

coeffs = arrays(np.float64, 3, elements=st.floats(0.1, 10.0))
points = arrays(np.float64, 3, elements=st.floats(0.0, 5.0))
interior = arrays(np.float64, 3, elements=st.floats(0.05, 5.0))


@st.composite
def oracles(draw):
    c = tuple(map(float, draw(coeffs)))
    if draw(st.booleans()):
        return make_oracle(Linear(c))
    return make_oracle(CES(c, draw(st.sampled_from([1.0, 1.5, 2.0, 3.0]))))


@settings(max_examples=200, deadline=None)
@given(oracles(), points, st.floats(0.0, 10.0))
def test_homogeneity(o, x, a):
    assert abs(o.value(a * x) - a * o.value(x)) <= 1e-10 * (1 + o.value(x))


@settings(max_examples=200, deadline=None)
@given(oracles(), points, points)
def test_subadditivity(o, x, p):
    assert o.value(x + p) <= o.value(x) + o.value(p) + 1e-10


@settings(max_examples=200, deadline=None)
@given(oracles(), interior)
def test_euler_identity(o, x):
    assert o.gradient(x) @ x == pytest.approx(o.value(x), rel=1e-8)


@settings(max_examples=200, deadline=None)
@given(oracles(), interior)
def test_gradient_finite_differences(o, x):
    h = 1e-6
    fd = np.array([(o.value(x + h * e) - o.value(x - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(o.gradient(x), fd, rtol=1e-4, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(oracles(), interior)
def test_monotone(o, x):
    assert np.all(o.gradient(x) >= 0)

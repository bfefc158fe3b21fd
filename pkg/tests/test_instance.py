import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choreeq.errors import (DimensionMismatch, InfiniteDisutility, ParseError, ValidationError)
from choreeq.instance import (CES, Instance, Linear, Mode, dump_result, linear_instance,
                              load_result, parse_instance, preprocess, serialize_instance,
                              validate_allocation)


class TestParse:
    def test_minimal(self):
        inst = parse_instance('{"n":2,"m":2,"disutilities":[{"linear":[1,2]},{"linear":[2,1]}]}')
        assert (inst.n, inst.m) == (2, 2)
        assert inst.mode is Mode.CHORES
        np.testing.assert_array_equal(inst.matrix(), [[1, 2], [2, 1]])

    def test_negative_coefficient_rejected(self):
        with pytest.raises(ValidationError):
            parse_instance('{"n":1,"m":1,"disutilities":[{"linear":[-1]}]}')

    def test_negative_allowed_in_mixed_mode(self):
        inst = parse_instance('{"n":1,"m":1,"mode":"mixed","disutilities":[{"linear":[-1]}]}')
        assert inst.mode is Mode.MIXED

    def test_mixed_spec_kinds(self):
        inst = parse_instance('{"n":2,"m":2,"disutilities":'
                              '[{"ces":{"c":[1,1],"rho":2}},{"linear":[1,1]}]}')
        assert isinstance(inst.disutilities[0], CES)
        assert isinstance(inst.disutilities[1], Linear)
        assert not inst.is_linear

    def test_bytes_input(self):
        inst = parse_instance(b'{"n":1,"m":1,"disutilities":[{"linear":[3]}]}')
        assert inst.disutilities[0].coefficients == (3.0,)

    def test_decimal_strings(self):
        inst = parse_instance('{"n":1,"m":2,"disutilities":[{"linear":["0.1","2.5"]}]}')
        assert inst.disutilities[0].coefficients == (0.1, 2.5)

    @pytest.mark.parametrize("text", [
        "{not json",
        "[]",
        '{"n":1,"m":1}',
        '{"n":1,"m":1,"disutilities":[{"quadratic":[1]}]}',
        '{"n":1,"m":1,"disutilities":[{"linear":[true]}]}',
        '{"n":1.5,"m":1,"disutilities":[{"linear":[1]}]}',
        '{"n":1,"m":1,"mode":"goods","disutilities":[{"linear":[1]}]}',
        '{"n":1,"m":1,"disutilities":[{"ces":{"c":[1]}}]}',
    ])
    def test_parse_errors(self, text):
        with pytest.raises(ParseError):
            parse_instance(text)

    @pytest.mark.parametrize("text", [
        '{"n":0,"m":1,"disutilities":[]}',
        '{"n":1,"m":2,"disutilities":[{"ces":{"c":[1,1],"rho":0.5}}]}',
        '{"n":1,"m":1,"disutilities":[{"linear":[1]}],"weights":[0]}',
        '{"n":1,"m":1,"disutilities":[{"ces":{"c":[0],"rho":2}}]}',
        '{"n":1,"m":1,"mode":"mixed","disutilities":[{"ces":{"c":[1],"rho":2}}]}',
    ])
    def test_validation_errors(self, text):
        with pytest.raises(ValidationError):
            parse_instance(text)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            parse_instance('{"n":2,"m":1,"disutilities":[{"linear":[1]}]}')
        with pytest.raises(DimensionMismatch):
            parse_instance('{"n":1,"m":2,"disutilities":[{"linear":[1]}]}')

    def test_infinite_rejected(self):
        with pytest.raises(InfiniteDisutility):
            Instance(1, 1, (Linear((float("inf"),)),))


class TestRoundTrip:
    def test_fields_preserved(self):
        inst = Instance(2, 3, (Linear((0.1, 1 / 3, 7.0)), CES((1.0, 2.0, 1e-3), 1.5)),
                        weights=(1.0, 0.5))
        again = parse_instance(serialize_instance(inst))
        assert again == inst

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(1e-6, 1e6, allow_nan=False), min_size=1, max_size=6),
           st.integers(1, 4))
    def test_linear_bit_exact(self, row, n):
        inst = linear_instance([row] * n)
        assert parse_instance(serialize_instance(inst)) == inst

    def test_result_dump_is_deterministic(self):
        res = {"allocation": np.eye(2), "prices": np.array([1.0, 0.1 + 0.2]), "epsilon": 0.05,
               "certificate": {"mode": Mode.CHORES}}
        text = dump_result(res)
        assert text == dump_result(res)
        back = load_result(text)
        assert back["prices"][1] == 0.1 + 0.2
        assert back["certificate"]["mode"] == "chores"

    def test_load_result_missing_key(self):
        with pytest.raises(ParseError):
            load_result(json.dumps({"allocation": [[1]]}))


class TestValidateAllocation:
    def test_exact_partition(self, sym2):
        r = validate_allocation(sym2, [[1, 0], [0, 1]], tol=1e-12)
        assert r.feasible_exact and r.max_column_residual == 0.0

    def test_short_column(self, sym2):
        r = validate_allocation(sym2, [[0.5, 0.5], [0.5, 0.49]], tol=1e-12)
        assert not r.feasible_exact
        assert not r.feasible_relaxed
        assert r.max_column_residual == pytest.approx(0.01)

    def test_uniform_three_agents(self):
        inst = linear_instance(np.ones((3, 2)))
        assert validate_allocation(inst, np.full((3, 2), 1 / 3)).feasible_exact

    def test_over_allocation_is_relaxed_only(self, sym2):
        r = validate_allocation(sym2, [[1, 0.5], [0.5, 1]])
        assert r.feasible_relaxed and not r.feasible_exact

    def test_shape(self, sym2):
        with pytest.raises(DimensionMismatch):
            validate_allocation(sym2, np.ones((2, 3)))


class TestPreprocess:
    def test_strips_free_chores(self):
        inst = linear_instance([[0.0, 2.0, 3.0], [1.0, 1.0, 0.0]])
        pre = preprocess(inst)
        assert pre.kept == (1,)
        assert pre.free == {0: 0, 2: 1}
        x, p = pre.reinsert(np.array([[0.25], [0.75]]), np.array([0.8]))
        np.testing.assert_array_equal(x, [[1, 0.25, 0], [0, 0.75, 1]])
        np.testing.assert_array_equal(p, [0, 0.8, 0])

    def test_idempotent(self):
        inst = linear_instance([[0.0, 2.0], [1.0, 1.0]])
        once = preprocess(inst).instance
        twice = preprocess(once).instance
        assert once == twice

    def test_untouched_without_zeros(self, sym2):
        pre = preprocess(sym2)
        assert pre.instance is sym2 and pre.free == {}

    def test_everything_free(self):
        pre = preprocess(linear_instance([[0.0, 1.0], [1.0, 0.0]]))
        assert pre.instance is None

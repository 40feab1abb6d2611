import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parloop.errors import ParseError, TrapError
from parloop.ga import GAConfig, random_loop
from parloop.loop_model import (
    ArrayDecl,
    ArrayRef,
    Assign,
    BinOp,
    Bound,
    Const,
    LoopNest,
    MemoryState,
    ScalarDecl,
    Var,
    default_memory,
    from_json,
    interpret,
    random_memory,
    render,
    run_traced,
    to_json,
    validate,
    wrap64,
)
from parloop.parse import parse_source

from conftest import loop


def simple_store():
    return LoopNest(
        arrays=(ArrayDecl("a", "int"),),
        body=(Assign(ArrayRef("a", Var("i")), Var("i")),),
    )


class TestValidate:
    def test_in_bounds_store(self):
        assert validate(simple_store())

    def test_read_past_end(self):
        res = validate(loop("a[i] = b[i + 1];"))
        assert not res
        assert "out-of-bounds index 4 at i=3, n=4" in res.message

    def test_loop_variable_written(self):
        res = validate(loop("i = 2;"))
        assert not res and res.message == "loop variable written"

    def test_undeclared_name(self):
        assert "undeclared" in validate(loop("a[i] = z;")).message

    def test_division_by_variable_rejected(self):
        assert "division" in validate(loop("a[i] = b[i] / c[i];")).message

    def test_index_through_written_scalar(self):
        res = validate(loop("k = k + 1; a[k] = 1;", scalars="int k = 0;"))
        assert not res and "mutable" in res.message

    def test_depth_limit(self):
        # the innermost store sits at depth 4
        body = "if (b[i] > 0) { if (b[i] > 1) { if (b[i] > 2) { a[i] = 1; } } }"
        assert validate(loop(body), max_depth=4)
        assert "depth" in validate(loop(body), max_depth=3).message

    def test_empty_iteration_space(self):
        assert "empty" in validate(loop("a[i] = 1;", lower="3", upper="3")).message

    def test_zero_length_array(self):
        nest = LoopNest(arrays=(ArrayDecl("a", "int", Bound(0, 0)),), body=())
        assert not validate(nest)


class TestRender:
    def test_contains_loop_and_statement(self):
        text = render(simple_store())
        assert "for" in text and "a[i] = i;" in text

    def test_deterministic(self):
        assert render(simple_store()) == render(simple_store())

    def test_parse_inverts_render(self):
        rng = np.random.default_rng(3)
        cfg = GAConfig()
        for _ in range(200):
            nest = random_loop(rng, cfg)
            assert parse_source(render(nest)) == nest

    def test_injective_on_generated(self):
        rng = np.random.default_rng(4)
        cfg = GAConfig()
        by_text = {}
        for _ in range(500):
            nest = random_loop(rng, cfg)
            prev = by_text.setdefault(render(nest), nest)
            assert prev == nest

    def test_precedence_parentheses(self):
        e = BinOp("*", BinOp("+", Var("i"), Const(1)), Const(2))
        nest = LoopNest(arrays=(ArrayDecl("a", "int", Bound(2, 2)),), body=(Assign(ArrayRef("a", e), Const(0)),))
        assert "a[(i + 1) * 2]" in render(nest)
        assert parse_source(render(nest)) == nest

    def test_parse_error(self):
        with pytest.raises(ParseError):
            parse_source("void kernel(int n) { for (;;) }")


class TestInterpret:
    def test_identity_and_reversed_order(self):
        nest = simple_store()
        init = default_memory(nest, 3)
        assert interpret(nest, init).arrays["a"] == [0, 1, 2]
        assert interpret(nest, init, [2, 1, 0]).arrays["a"] == [0, 1, 2]

    def test_scalar_accumulation_any_order(self):
        nest = loop("s = s + a[i];", arrays="int a[n]", scalars="int s = 0;")
        init = MemoryState(3, {"a": [1, 2, 3]}, {"s": 0})
        for order in ([0, 1, 2], [2, 0, 1], [1, 2, 0]):
            assert interpret(nest, init, order).scalars["s"] == 6

    def test_init_not_mutated(self):
        nest = simple_store()
        init = default_memory(nest, 4)
        interpret(nest, init)
        assert init.arrays["a"] == [0, 0, 0, 0]

    def test_bad_permutation(self):
        with pytest.raises(ValueError):
            interpret(simple_store(), default_memory(simple_store(), 3), [0, 0, 1])

    def test_int_wraparound(self):
        nest = loop("a[i] = b[i] * 4611686018427387904;", arrays="int a[n], int b[n]")
        init = MemoryState(4, {"a": [0] * 4, "b": [0, 1, 2, 3]}, {})
        out = interpret(nest, init).arrays["a"]
        assert out == [wrap64(v * 4611686018427387904) for v in [0, 1, 2, 3]]
        assert all(-(2**63) <= v < 2**63 for v in out)

    def test_c_division_truncates(self):
        nest = loop("a[i] = b[i] / 2;", arrays="int a[n], int b[n]")
        init = MemoryState(4, {"a": [0] * 4, "b": [-3, -1, 1, 3]}, {})
        assert interpret(nest, init).arrays["a"] == [-1, 0, 0, 1]

    def test_double_arithmetic(self):
        nest = loop("x[i] = y[i] / 4.0 + 0.5;", arrays="double x[n], double y[n]")
        init = MemoryState(4, {"x": [0.0] * 4, "y": [1.0, 2.0, -2.0, 0.0]}, {})
        assert interpret(nest, init).arrays["x"] == [0.75, 1.0, 0.0, 0.5]

    def test_trap_on_nonfinite(self):
        nest = loop("x[i] = x[i] * 1e308 * 1e308;", arrays="double x[n]")
        init = MemoryState(4, {"x": [1.0] * 4}, {})
        with pytest.raises(TrapError):
            interpret(nest, init)

    def test_traced_sets(self):
        nest = loop("a[i] = b[i];", arrays="int a[n], int b[n]")
        _, reads, writes = run_traced(nest, default_memory(nest, 2))
        assert writes == [{("a", 0)}, {("a", 1)}]
        assert reads == [{("b", 0)}, {("b", 1)}]

    def test_random_memory_deterministic(self):
        nest = loop("x[i] = y[i];", arrays="double x[n], double y[n]")
        a = random_memory(nest, 8, np.random.default_rng([1, 2]))
        b = random_memory(nest, 8, np.random.default_rng([1, 2]))
        assert a == b
        assert all((v * 4).is_integer() for v in a.arrays["y"])


class TestJson:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip(self, seed):
        nest = random_loop(np.random.default_rng(seed), GAConfig())
        assert from_json(to_json(nest)) == nest

    def test_scalar_decl_round_trip(self):
        nest = LoopNest(
            arrays=(ArrayDecl("a", "float", Bound(1, 1)),),
            scalars=(ScalarDecl("s", "float", 0.25),),
            body=(Assign(Var("s"), BinOp("+", Var("s"), ArrayRef("a", Var("i")))),),
        )
        assert from_json(to_json(nest)) == nest

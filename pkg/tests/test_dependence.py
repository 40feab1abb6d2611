import numpy as np
import pytest

from parloop.dependence import (
    Conflict,
    GcdResult,
    Label,
    analyze,
    classify,
    find_conflicts,
    gcd_test,
    trace_accesses,
)
from parloop.errors import NotAffine
from parloop.loop_model import ArrayRef, BinOp, Const, MemoryState, Var

from conftest import loop


def test_trace_of_copy():
    t = trace_accesses(loop("a[i] = b[i];", arrays="int a[n], int b[n]"), 2)
    assert t.writes == [{("a", 0)}, {("a", 1)}]
    assert t.reads == [{("b", 0)}, {("b", 1)}]


def test_flow_dependence_trace():
    nest = loop("a[i] = a[i - 1];", arrays="int a[n]", lower="1")
    t = trace_accesses(nest, 4)
    # iteration i=2 reads (a,1), which i=1 wrote
    assert ("a", 1) in t.reads[1] and ("a", 1) in t.writes[0]


def test_guarded_write_follows_data():
    nest = loop("if (c[i] > 0) { a[0] = i; }", arrays="int a[n], int c[n]")
    c = [1, -1, 0, 5]
    t = trace_accesses(nest, 4, MemoryState(4, {"a": [0] * 4, "c": c}, {}))
    for k, v in enumerate(c):
        assert (("a", 0) in t.writes[k]) == (v > 0)


class TestConflicts:
    def test_independent(self):
        assert find_conflicts(trace_accesses(loop("a[i] = b[i] + c[i];"), 8)) == []

    def test_chain(self):
        nest = loop("a[i + 1] = a[i];", arrays="int a[n + 1]", upper="n")
        conflicts = find_conflicts(trace_accesses(nest, 3))
        assert conflicts == [Conflict(0, 1, ("a", 1), "flow"), Conflict(1, 2, ("a", 2), "flow")]

    def test_parity_disjoint(self):
        nest = loop("a[2 * i] = 1; a[2 * i + 1] = 2;", arrays="int a[2 * n]")
        assert find_conflicts(trace_accesses(nest, 8)) == []

    def test_anti_and_output(self):
        nest = loop("a[i] = a[i + 1]; b[0] = i;", arrays="int a[n + 1], int b[n]")
        kinds = {c.kind for c in find_conflicts(trace_accesses(nest, 4))}
        assert kinds == {"anti", "output"}


class TestGcd:
    def test_parity(self):
        assert gcd_test((2, 0), (2, 1)) is GcdResult.NO_DEPENDENCE

    def test_divisible(self):
        assert gcd_test((4, 0), (2, 2)) is GcdResult.MAYBE_DEPENDENT

    def test_identity(self):
        assert gcd_test((1, 0), (1, 0)) is GcdResult.MAYBE_DEPENDENT

    def test_constant_indices(self):
        assert gcd_test((0, 3), (0, 3)) is GcdResult.MAYBE_DEPENDENT
        assert gcd_test((0, 3), (0, 4)) is GcdResult.NO_DEPENDENCE

    def test_expression_arguments(self):
        two_i = BinOp("*", Const(2), Var("i"))
        assert gcd_test(two_i, BinOp("+", two_i, Const(1))) is GcdResult.NO_DEPENDENCE

    def test_not_affine(self):
        with pytest.raises(NotAffine):
            gcd_test(BinOp("*", Var("i"), Var("i")), (1, 0))
        with pytest.raises(NotAffine):
            gcd_test(ArrayRef("b", Var("i")), (1, 0))

    def test_sound_against_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(2000):
            a, b, c, d = (int(v) for v in rng.integers(-6, 7, 4))
            hit = any(a * i + b == c * j + d for i in range(16) for j in range(16))
            if hit:
                assert gcd_test((a, b), (c, d)) is GcdResult.MAYBE_DEPENDENT


class TestClassify:
    def test_elementwise_is_parallel(self):
        assert classify(loop("a[i] = b[i] + c[i];")) is Label.PARALLELIZABLE

    def test_recurrence_is_undefined(self):
        assert classify(loop("a[i] = a[i - 1] + 1;", arrays="int a[n]", lower="1")) is Label.UNDEFINED

    def test_reduction_is_undefined(self):
        nest = loop("s = s + a[i];", arrays="int a[n]", scalars="int s = 0;")
        res = analyze(nest)
        assert res.label is Label.UNDEFINED and res.written_scalars == ["s"]

    def test_private_local_is_fine(self):
        nest = parse_local()
        assert classify(nest) is Label.PARALLELIZABLE

    def test_untaken_branch_still_counts(self):
        # the store to a[0] never runs with the sampled inputs, yet may conflict
        nest = loop("if (b[i] > 100) { a[0] = 1; }", arrays="int a[n], int b[n]")
        res = analyze(nest)
        assert res.conflicts == [] and res.static_conflicts
        assert res.label is Label.UNDEFINED

    def test_label_titles(self):
        assert Label.PARALLELIZABLE.title == "Parallelizable"
        assert int(Label.UNDEFINED) == 0

    def test_evidence_json(self):
        res = analyze(loop("a[i] = a[i - 1];", arrays="int a[n]", lower="1")).to_json()
        assert res["label"] == 0 and res["conflicts"][0]["kind"] == "flow"


def parse_local():
    from parloop.parse import parse_source

    return parse_source(
        "void kernel(int n, int a[n], int b[n]) {\n"
        "    for (int i = 0; i < n; i++) {\n"
        "        int t0 = b[i] * 2;\n"
        "        a[i] = t0 + 1;\n"
        "    }\n"
        "}\n"
    )

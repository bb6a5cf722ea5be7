"""Scalar expression trees: parsing, evaluation, derivatives vs finite
differences, rendering round trips, and the compiled batch evaluator."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from supergeo.expr import (
    Add,
    Call,
    Const,
    Div,
    EvaluationError,
    ExprError,
    ExprSyntaxError,
    Mul,
    Neg,
    Pow,
    Sub,
    Var,
    add,
    compile_columns,
    div,
    mul,
    neg,
    parse,
    pow_,
    sub,
)

from oracles import central_diff

# (text, sampling box per variable) with every function in-domain on the box
FD_CORPUS = [
    ("x1^2 + 3*x1*x2", [(-2, 2), (-2, 2)]),
    ("sin(x1)*cos(x2) + exp(x1/2)", [(-2, 2), (-2, 2)]),
    ("log(2 + x1) * sqrt(3 + x2)", [(-1, 1), (-1, 1)]),
    ("(x1 + x2)^3 / (2 + x1^2)", [(-2, 2), (-2, 2)]),
    ("1 / (1 + exp(-x1))", [(-3, 3)]),
    ("x1 / x2", [(-2, 2), (0.5, 2)]),
    ("sqrt(1 + x1^2)", [(-2, 2)]),
    ("cos(x1^2 - x2)", [(-2, 2), (-2, 2)]),
    ("-x1^2 + x2^-1", [(-2, 2), (0.5, 2)]),
]


def sample_box(rng, box):
    return np.array([rng.uniform(lo, hi) for lo, hi in box])


# ---- parsing ----------------------------------------------------------------


def test_parse_structure():
    assert parse("x1^2 + 2*x2") == Add(Pow(Var(1), 2), Mul(Const(2.0), Var(2)))
    assert parse("x1 - x2 - x3") == Sub(Sub(Var(1), Var(2)), Var(3))
    assert parse("x1/x2/x3") == Div(Div(Var(1), Var(2)), Var(3))
    assert parse("sin(x1)") == Call("sin", Var(1))
    assert parse("(x1 + x2) * x3") == Mul(Add(Var(1), Var(2)), Var(3))


def test_unary_minus_binds_below_power():
    assert parse("-x1^2") == Neg(Pow(Var(1), 2))
    assert parse("(-x1)^2") == Pow(Neg(Var(1)), 2)
    assert parse("x1^-2") == Pow(Var(1), -2)


def test_constant_folding_is_light():
    assert parse("2 + 3") == Const(5.0)
    assert parse("0 * sin(x1)") == Const(0.0)
    assert parse("1 * x1") == Var(1)
    assert parse("x1 + 0") == Var(1)
    assert parse("x1^1") == Var(1)
    assert parse("x1^0") == Const(1.0)
    # no deeper rewriting
    assert parse("x1 + x1") == Add(Var(1), Var(1))
    assert parse("x1 * x2 + 0 * x3") == Mul(Var(1), Var(2))


def test_parse_errors():
    with pytest.raises(ExprSyntaxError):
        parse("x1 +")
    with pytest.raises(ExprSyntaxError):
        parse("foo(x1)")
    with pytest.raises(ExprSyntaxError):
        parse("x0")
    with pytest.raises(ExprSyntaxError):
        parse("(x1")
    with pytest.raises(ExprSyntaxError):
        parse("x1 $ x2")
    with pytest.raises(ExprSyntaxError):
        parse("x1 ^ x2")
    with pytest.raises(ExprSyntaxError):
        parse("x1 ^ 2.5")
    with pytest.raises(ExprSyntaxError):
        parse("3 / 0")
    with pytest.raises(ExprSyntaxError):
        parse("")


def test_parse_variable_bound():
    parse("x2", n_vars=2)
    with pytest.raises(ExprError):
        parse("x3", n_vars=2)


def test_variables():
    assert parse("x1*x3 + sin(x7)").variables() == {1, 3, 7}
    assert parse("4").variables() == set()


# ---- evaluation ---------------------------------------------------------------


def test_evaluate_known_values():
    e = parse("x1^2 + 3*x2")
    assert e.evaluate([2.0, 1.0]) == 7.0
    assert parse("exp(0)").evaluate([]) == 1.0
    assert parse("sqrt(x1)").evaluate([9.0]) == 3.0
    assert parse("log(exp(2))").evaluate([]) == pytest.approx(2.0, abs=1e-15)


def test_evaluate_domain_errors():
    with pytest.raises(EvaluationError) as exc:
        parse("x1 / x2").evaluate([1.0, 0.0])
    assert "x1 / x2" in str(exc.value)
    with pytest.raises(EvaluationError):
        parse("log(x1)").evaluate([-1.0])
    with pytest.raises(EvaluationError):
        parse("sqrt(x1)").evaluate([-4.0])
    with pytest.raises(EvaluationError):
        parse("x1^-1").evaluate([0.0])
    with pytest.raises(EvaluationError):
        parse("exp(x1)").evaluate([1e9])
    with pytest.raises(EvaluationError):
        parse("x2").evaluate([1.0])


# ---- derivatives vs the finite-difference oracle -------------------------------


@pytest.mark.parametrize("text,box", FD_CORPUS)
def test_diff_matches_central_differences(text, box):
    rng = np.random.default_rng(hash(text) & 0xFFFF)
    e = parse(text)
    for _ in range(5):
        x = sample_box(rng, box)
        for i in range(1, len(box) + 1):
            sym = e.diff(i).evaluate(x)
            fd = central_diff(lambda p: e.evaluate(p), x, i - 1)
            assert abs(sym - fd) <= 1e-8 * max(1.0, abs(sym)), (text, i, x)


def test_diff_structure():
    assert parse("x1").diff(1) == Const(1.0)
    assert parse("x1").diff(2) == Const(0.0)
    assert parse("x1*x2").diff(1) == Var(2)
    assert parse("sin(x1)").diff(1) == Call("cos", Var(1))
    assert parse("log(x1)").diff(1) == Div(Const(1.0), Var(1))


# ---- substitution ---------------------------------------------------------------


def test_substitute():
    e = parse("x1^2 + x2")
    out = e.substitute({1: parse("x3 + 1")})
    assert out == parse("(x3 + 1)^2 + x2")
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = rng.uniform(-1, 1, size=3)
        composed = np.array([x[2] + 1, x[1], x[2]])
        assert out.evaluate(x) == pytest.approx(e.evaluate(composed), rel=1e-14)


def test_substitute_swap_is_simultaneous():
    e = parse("x1 * x2")
    out = e.substitute({1: Var(2), 2: Var(1)})
    assert out == parse("x2 * x1")


# ---- rendering round trips --------------------------------------------------------


_leaves = st.one_of(
    st.integers(-4, 4).map(lambda k: Const(float(k))),
    st.integers(1, 3).map(Var),
)


def _extend(children):
    def safe_div(ab):
        try:
            return div(*ab)
        except ExprError:
            return add(*ab)

    return st.one_of(
        st.tuples(children, children).map(lambda ab: add(*ab)),
        st.tuples(children, children).map(lambda ab: sub(*ab)),
        st.tuples(children, children).map(lambda ab: mul(*ab)),
        st.tuples(children, children).map(safe_div),
        children.map(neg),
        st.tuples(children, st.integers(0, 3)).map(lambda bk: pow_(*bk)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt"]), children).map(
            lambda na: Call(na[0], na[1])
        ),
    )


random_exprs = st.recursive(_leaves, _extend, max_leaves=10)


@given(random_exprs)
def test_render_parse_round_trip(e):
    assert parse(e.render()) == e


def test_render_examples():
    assert parse("x1 + (x2 - x3)").render() == "x1 + (x2 - x3)"
    assert parse("-x1^2").render() == "-x1^2"
    assert parse("(x1 + x2)^2").render() == "(x1 + x2)^2"
    assert parse("x1 * (x2 +1)").render() == "x1 * (x2 + 1.0)"


# ---- compiled batch evaluation -------------------------------------------------------


def test_compile_columns_matches_evaluate():
    texts = [t for t, _ in FD_CORPUS]
    exprs = [parse(t) for t in texts]
    boxes = {t: b for t, b in FD_CORPUS}
    rng = np.random.default_rng(11)
    X = np.column_stack(
        [rng.uniform(0.5, 1.5, size=40), rng.uniform(0.6, 1.4, size=40)]
    )
    fn = compile_columns(exprs)
    out = fn(X)
    assert out.shape == (40, len(exprs))
    for b in range(40):
        for t, e in enumerate(exprs):
            want = e.evaluate(X[b, : max(e.variables() or {0})])
            assert out[b, t] == pytest.approx(want, rel=1e-13, abs=1e-13)


polynomial_exprs = st.recursive(
    _leaves,
    lambda children: st.one_of(
        st.tuples(children, children).map(lambda ab: add(*ab)),
        st.tuples(children, children).map(lambda ab: sub(*ab)),
        st.tuples(children, children).map(lambda ab: mul(*ab)),
        children.map(neg),
        st.tuples(children, st.integers(0, 3)).map(lambda bk: pow_(*bk)),
    ),
    max_leaves=10,
)


@given(st.lists(polynomial_exprs, min_size=1, max_size=4))
def test_compile_columns_polynomial_batch(exprs):
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, size=(7, 3))
    out = compile_columns(exprs)(X)
    for b in range(7):
        for t, e in enumerate(exprs):
            assert out[b, t] == pytest.approx(e.evaluate(X[b]), rel=1e-12, abs=1e-12)


def test_compile_columns_single_point():
    fn = compile_columns([parse("x1 + x2")])
    assert fn(np.array([1.0, 2.0])).shape == (1, 1)

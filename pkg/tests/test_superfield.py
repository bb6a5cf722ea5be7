"""Superfunctions: chart handling, graded products, derivations, the affine
projection, and text round trips."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from supergeo import expr as ex
from supergeo.expr import ExprSyntaxError
from supergeo.grassmann import GrassmannValue
from supergeo.superfield import (
    ChartSpec,
    FiberAffineFunction,
    SuperfieldError,
    SuperFunction,
    parse_superfunction,
    psi,
    psi_inverse,
)

from oracles import central_diff

C12 = ChartSpec(n=1, q=2)
C22 = ChartSpec(n=2, q=2)
C23 = ChartSpec(n=2, q=3)


# ---- chart -----------------------------------------------------------------


def test_chart_validation():
    with pytest.raises(SuperfieldError):
        ChartSpec(n=0, q=1)
    with pytest.raises(SuperfieldError):
        ChartSpec(n=1, q=0)
    with pytest.raises(SuperfieldError):
        ChartSpec(n=1, q=17)


def test_chart_labels_and_slots():
    c = C22
    assert [c.label(s) for s in range(4)] == ["x1", "x2", "e1", "e2"]
    assert [c.slot(l) for l in ("x1", "x2", "e1", "e2")] == [0, 1, 2, 3]
    assert list(c.parity_vector()) == [0, 0, 1, 1]
    with pytest.raises(SuperfieldError):
        c.slot("x3")
    with pytest.raises(SuperfieldError):
        c.slot("e0")
    with pytest.raises(SuperfieldError):
        c.slot("y1")


# ---- construction ------------------------------------------------------------


def test_from_components():
    f = SuperFunction.from_components(C12, {(): "x1^2", (1,): "x1", (1, 2): 3})
    assert f.components == {
        (): ex.parse("x1^2"),
        (1,): ex.Var(1),
        (1, 2): ex.Const(3.0),
    }
    assert f.component((2,)).is_const(0.0)
    assert f.max_degree() == 2
    assert f.parity() == "mixed"


def test_from_components_validation():
    with pytest.raises(Exception):
        SuperFunction.from_components(C12, {(2, 1): 1.0})
    with pytest.raises(SuperfieldError):
        SuperFunction.from_components(C12, {(): "x2"})
    with pytest.raises(SuperfieldError):
        SuperFunction.generator(C12, 3)


def test_zero_pruning():
    f = SuperFunction.from_components(C12, {(): 0.0, (1,): "x1"})
    assert f.components == {(1,): ex.Var(1)}
    assert (f - f).is_zero()


# ---- algebra -------------------------------------------------------------------


def test_product_signs():
    e1 = SuperFunction.generator(C12, 1)
    e2 = SuperFunction.generator(C12, 2)
    assert (e1 * e2).components == {(1, 2): ex.Const(1.0)}
    assert (e2 * e1).components == {(1, 2): ex.Const(-1.0)}
    assert (e1 * e1).is_zero()


def test_scalar_coefficients_commute():
    f = parse_superfunction("x1*e[1]", C12)
    g = parse_superfunction("(1 + x1)*e[2]", C12)
    fg = f * g
    gf = g * f
    for t in (-1.0, 0.0, 0.5, 2.0):
        assert (fg + gf).evaluate(np.array([t])).max_abs() == 0.0


def test_evaluate_is_a_homomorphism():
    rng = np.random.default_rng(2)
    f = parse_superfunction("x1 + x2*e[1] + sin(x1)*e[1,2]", C22)
    g = parse_superfunction("2 - x1*e[2] + e[1]", C22)
    for _ in range(10):
        x = rng.uniform(-2, 2, size=2)
        lhs = (f * g).evaluate(x)
        rhs = f.evaluate(x) * g.evaluate(x)
        assert lhs.allclose(rhs, tol=1e-12)
        assert (f + g).evaluate(x).allclose(f.evaluate(x) + g.evaluate(x), tol=1e-12)


def test_evaluate_shape_check():
    f = SuperFunction.constant(C22, 1.0)
    with pytest.raises(SuperfieldError):
        f.evaluate([1.0])


# ---- derivations -----------------------------------------------------------------


def test_dhat_base_matches_finite_differences():
    f = parse_superfunction("x1^2 + cos(x2)*e[1] + x1*x2*e[1,2]", C22)
    rng = np.random.default_rng(4)
    for _ in range(5):
        x = rng.uniform(-1.5, 1.5, size=2)
        for i in (1, 2):
            df = f.dhat_base(i).evaluate(x)
            for index in ((), (1,), (1, 2)):
                fd = central_diff(lambda p, idx=index: f.evaluate(p).coefficient(idx), x, i - 1)
                assert abs(df.coefficient(index) - fd) <= 1e-8


def test_dhat_odd_signs():
    f = SuperFunction.from_components(C12, {(1, 2): ex.Const(1.0)})
    assert f.dhat_odd(1).components == {(2,): ex.Const(1.0)}
    assert f.dhat_odd(2).components == {(1,): ex.Const(-1.0)}
    assert f.dhat_odd(1).dhat_odd(1).is_zero()


def test_dhat_odd_matches_grassmann_derivative():
    f = parse_superfunction("x1 + x1^2*e[1] + 2*e[2] + sin(x1)*e[1,2]", C12)
    x = np.array([0.7])
    for alpha in (1, 2):
        lhs = f.dhat_odd(alpha).evaluate(x)
        rhs = f.evaluate(x).left_derivative(alpha)
        assert lhs.allclose(rhs, tol=0.0)


@given(st.integers(0, 1), st.integers(1, 3))
def test_dhat_odd_graded_leibniz(pa, alpha):
    # homogeneous f of parity pa times arbitrary g
    if pa == 0:
        f = parse_superfunction("x1 + x1*e[1,2]", C23)
    else:
        f = parse_superfunction("x2*e[1] + e[3]", C23)
    g = parse_superfunction("x1*x2 + e[2] + x1*e[1,3]", C23)
    lhs = (f * g).dhat_odd(alpha)
    sign = -1.0 if pa else 1.0
    rhs = f.dhat_odd(alpha) * g + (f * g.dhat_odd(alpha)) * sign
    x = np.array([0.3, -1.2])
    assert lhs.evaluate(x).allclose(rhs.evaluate(x), tol=1e-12)


def test_dhat_slot_dispatch():
    f = parse_superfunction("x1*e[1]", C12)
    assert f.dhat(0).components == {(1,): ex.Const(1.0)}
    assert f.dhat(1).components == {(): ex.Var(1)}


# ---- reduction and the affine picture ----------------------------------------------


def test_reduce_and_project():
    f = parse_superfunction("x1^2 + x1*e[1] + 3*e[1,2]", C12)
    assert f.reduce() == ex.parse("x1^2")
    assert f.project_affine().components == {(): ex.parse("x1^2"), (1,): ex.Var(1)}


def test_psi_round_trip():
    f = parse_superfunction("x1^2 + x1*e[1] + 3*e[1,2]", C12)
    a = psi(f)
    assert isinstance(a, FiberAffineFunction)
    assert psi_inverse(a) == f.project_affine()
    with pytest.raises(SuperfieldError):
        f.to_fiber_affine()


def test_fiber_affine_evaluation():
    f = parse_superfunction("x1^2 + x1*e[1] + 2*e[2]", C12)
    a = psi(f)
    y = np.array([1.5, 0.25, -2.0])  # (x1, c1, c2)
    want = 1.5**2 + 0.25 * 1.5 + (-2.0) * 2.0
    assert a.evaluate(y) == pytest.approx(want, rel=1e-15)
    total = a.to_total_expr()
    assert total.evaluate(y) == pytest.approx(want, rel=1e-15)


def test_fiber_affine_is_affine_in_fiber():
    # the identification always lands in functions affine along the fiber
    rng = np.random.default_rng(9)
    f = parse_superfunction("sin(x1) + x1*e[1] + x1^2*e[2] + 5*e[1,2]", C12)
    a = psi(f)
    x = np.array([0.8])
    c1 = rng.uniform(-1, 1, size=2)
    c2 = rng.uniform(-1, 1, size=2)
    for s in (0.0, 0.3, 1.0, 2.0):
        c = (1 - s) * c1 + s * c2
        lhs = a.evaluate(np.concatenate([x, c]))
        rhs = (1 - s) * a.evaluate(np.concatenate([x, c1])) + s * a.evaluate(np.concatenate([x, c2]))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


# ---- generator substitution ----------------------------------------------------------


def test_substitute_generators_identity():
    f = parse_superfunction("x1 + x1*e[1] + 3*e[1,2]", C12)
    assert f.substitute_generators({}) == f


def test_substitute_generators_swap():
    f = SuperFunction.from_components(C12, {(1, 2): ex.Const(1.0)})
    e1 = SuperFunction.generator(C12, 1)
    e2 = SuperFunction.generator(C12, 2)
    out = f.substitute_generators({1: e2, 2: e1})
    assert out.components == {(1, 2): ex.Const(-1.0)}


def test_substitute_generators_linear_map():
    # e1 -> e1 + x1 e2, e2 -> e2: check against direct Grassmann substitution
    f = parse_superfunction("x1*e[1] + e[1,2]", C12)
    img1 = parse_superfunction("e[1] + x1*e[2]", C12)
    out = f.substitute_generators({1: img1})
    x = np.array([0.5])
    g1 = img1.evaluate(x)
    g2 = GrassmannValue.generator(2, 2)
    want = g1 * 0.5 + g1 * g2
    assert out.evaluate(x).allclose(want, tol=1e-15)


def test_substitute_generators_is_multiplicative():
    f = parse_superfunction("x1 + e[1]", C12)
    g = parse_superfunction("e[2] + x1*e[1]", C12)
    images = {1: parse_superfunction("e[1] + e[2]", C12), 2: parse_superfunction("x1*e[2]", C12)}
    lhs = (f * g).substitute_generators(images)
    rhs = f.substitute_generators(images) * g.substitute_generators(images)
    x = np.array([1.25])
    assert lhs.evaluate(x).allclose(rhs.evaluate(x), tol=1e-12)


# ---- text ------------------------------------------------------------------------------


def test_parse_superfunction_example():
    f = parse_superfunction("x1^2 + (x1)*e[1] + 3*e[1,2]", C12)
    assert f.components == {
        (): ex.parse("x1^2"),
        (1,): ex.Var(1),
        (1, 2): ex.Const(3.0),
    }


def test_parse_superfunction_products_and_division():
    assert parse_superfunction("e[1]*e[2]", C12).components == {(1, 2): ex.Const(1.0)}
    assert parse_superfunction("e[2]*e[1]", C12).components == {(1, 2): ex.Const(-1.0)}
    f = parse_superfunction("(x1*e[1]) / 2", C12)
    assert f.components == {(1,): ex.parse("x1 / 2")}
    g = parse_superfunction("(1 + e[1])^2", C12)
    assert g.components == {(): ex.Const(1.0), (1,): ex.Const(2.0)}


def test_parse_superfunction_errors():
    with pytest.raises(ExprSyntaxError):
        parse_superfunction("e[1]/e[1]", C12)
    with pytest.raises(ExprSyntaxError):
        parse_superfunction("sin(e[1])", C12)
    with pytest.raises(ExprSyntaxError):
        parse_superfunction("x2", C12)
    with pytest.raises(ExprSyntaxError):
        parse_superfunction("e[3]", C12)
    with pytest.raises(ExprSyntaxError):
        parse_superfunction("e[2,1]", C12)
    with pytest.raises(ExprSyntaxError):
        parse_superfunction("e[1", C12)
    with pytest.raises(ExprSyntaxError):
        parse_superfunction("(1 + e[1])^-1", C12)


def test_render_round_trip():
    texts = [
        "x1^2 + (x1)*e[1] + 3*e[1,2]",
        "1.0",
        "0.0",
        "e[1]",
        "(-x1)*e[2] + sin(x1)*e[1]",
        "x1 - x2 + x1*x2*e[1,2]",
    ]
    for t in texts:
        chart = C22
        f = parse_superfunction(t, chart)
        assert parse_superfunction(f.render(), chart) == f

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracduhamel.expr import (
    BinOp,
    Call,
    ExprEvalError,
    ExprSyntaxError,
    Neg,
    Num,
    Var,
    evaluate,
    parse_expression,
    to_text,
)


def test_laplacian_text():
    tree = parse_expression("-(xi^2)")
    xi = np.array([0.0, 1.0, 3.0])
    assert np.array_equal(evaluate(tree, {"xi": xi}), -(xi**2))


def test_power_binds_tighter_than_minus():
    tree = parse_expression("-abs(xi)^1.5")
    assert tree == Neg(BinOp("^", Call("abs", (Var("xi"),)), Num(1.5)))
    assert evaluate(tree, {"xi": -4.0}) == pytest.approx(-8.0)


def test_power_is_right_associative():
    assert evaluate(parse_expression("2^3^2")) == 512
    assert evaluate(parse_expression("2^-1")) == 0.5


def test_precedence_and_constants():
    assert evaluate(parse_expression("1 + 2*3 - 4/2")) == 5
    assert evaluate(parse_expression("cos(pi)")) == pytest.approx(-1)
    assert evaluate(parse_expression("e")) == pytest.approx(math.e)
    assert evaluate(parse_expression("i*i")) == -1
    assert evaluate(parse_expression("sqrt(-4)")) == 2j
    assert evaluate(parse_expression("pow(2, 10)")) == 1024
    assert evaluate(parse_expression("1.5e-3 * 2E2")) == pytest.approx(0.3)


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression("xi +")
    assert info.value.offset == 4
    assert "offset 4" in str(info.value)
    assert "number" in info.value.expected


@pytest.mark.parametrize("text, offset", [("(1 + 2", 6), ("sin(1,", 6), ("1 $ 2", 2), ("2 3", 2), ("", 0)])
def test_other_syntax_errors(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression(text)
    assert info.value.offset == offset


@pytest.mark.parametrize(
    "text, env, offset",
    [
        ("1/xi", {"xi": np.array([1.0, 0.0])}, 1),
        ("xi^-1", {"xi": 0.0}, 2),
        ("foo + 1", {}, 0),
        ("1 + bar(2)", {}, 4),
        ("sin(1, 2)", {}, 0),
    ],
)
def test_evaluation_errors_carry_offsets(text, env, offset):
    tree = parse_expression(text)
    with pytest.raises(ExprEvalError) as info:
        evaluate(tree, env)
    assert info.value.offset == offset


names = st.sampled_from(["xi", "x", "t", "pi", "e", "i", "xi1", "x2"])
numbers = st.floats(0, 1e6, allow_nan=False, allow_infinity=False)
leaves = st.one_of(numbers.map(Num), names.map(Var))


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda a: BinOp(*a)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "abs", "sqrt"]), children).map(lambda a: Call(a[0], (a[1],))),
        st.tuples(children, children).map(lambda a: Call("pow", a)),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_print_parse_round_trip(tree):
    assert parse_expression(to_text(tree)) == tree


@settings(max_examples=200, deadline=None)
@given(trees)
def test_round_trip_is_a_fixed_point(tree):
    text = to_text(tree)
    assert to_text(parse_expression(text)) == text

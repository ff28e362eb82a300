from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from szegolift import (
    AntisymmetryViolation,
    DimensionMismatch,
    NonpositiveLambda,
    new_from_structure_constants,
)
from szegolift.lie_core import _rank


K2_CONSTANTS = {
    (2, 1): {3: 1},
    (3, 1): {4: 1},
    (3, 2): {5: 1},
    (4, 1): {6: 8},
    (5, 2): {6: 8},
}
K2_GRADING = [[1, 2], [3], [4, 5], [6]]


@pytest.fixture(scope="module")
def k2_spec():
    return new_from_structure_constants([f"e{i}" for i in range(1, 7)], K2_GRADING, K2_CONSTANTS)


def test_example_table_is_valid(k2_spec):
    assert k2_spec.dim == 6
    assert k2_spec.step == 4
    assert k2_spec.homogeneous_dimension() == 14


def test_abelian_single_layer_valid():
    spec = new_from_structure_constants(["a", "b"], [[1, 2]], {})
    assert spec.homogeneous_dimension() == 2


def test_antisymmetry_violation_reported():
    with pytest.raises(AntisymmetryViolation) as err:
        new_from_structure_constants(["a", "b", "c"], [[1, 2], [3]], {(1, 2): {3: 1}, (2, 1): {3: 1}})
    assert (err.value.i, err.value.j) == (1, 2)


def test_bracket_example_values(k2_spec):
    e = k2_spec.basis_element
    b = k2_spec.bracket(e(4), e(1))
    assert b.coeffs == k2_spec.element([0, 0, 0, 0, 0, 8]).coeffs
    assert k2_spec.bracket(e(3), e(3)).is_zero()
    # bilinearity over the table: [e1+e2, e1] = [e2, e1] = e3
    assert k2_spec.bracket(e(1) + e(2), e(1)).coeffs == e(3).coeffs


def test_bracket_dimension_mismatch(k2_spec):
    with pytest.raises(DimensionMismatch):
        k2_spec.bracket_coeffs([F(1)] * 5, [F(0)] * 6)


def test_ad_power(k2_spec):
    e = k2_spec.basis_element
    # ad^2(e1)(e2) = [e1,[e1,e2]] = e4
    assert k2_spec.ad_power(e(1), 2, e(2)).coeffs == e(4).coeffs
    assert k2_spec.ad_power(e(1), 0, e(5)).coeffs == e(5).coeffs
    # ad^3(e2)(e1) = 8 e6 and ad^4 kills it (step 4)
    assert k2_spec.ad_power(e(2), 3, e(1)).coeffs == e(6).scale(8).coeffs
    assert k2_spec.ad_power(e(2), 4, e(1)).is_zero()


def test_dilation(k2_spec):
    e = k2_spec.basis_element
    assert k2_spec.dilation(F(1), e(3)).coeffs == e(3).coeffs
    assert k2_spec.dilation(F(2), e(6)).coeffs == e(6).scale(16).coeffs
    with pytest.raises(NonpositiveLambda):
        k2_spec.dilation(F(0), e(1))


rational = st.fractions(min_value=-20, max_value=20, max_denominator=7)


@st.composite
def elements(draw, spec_dim=6):
    return tuple(draw(rational) for _ in range(spec_dim))


@given(elements(), elements())
@settings(max_examples=40)
def test_dilation_is_automorphism(x, y):
    spec = new_from_structure_constants([f"e{i}" for i in range(1, 7)], K2_GRADING, K2_CONSTANTS)
    lam = F(3)
    ex, ey = spec.element(x), spec.element(y)
    lhs = spec.bracket(spec.dilation(lam, ex), spec.dilation(lam, ey))
    rhs = spec.dilation(lam, spec.bracket(ex, ey))
    assert lhs.coeffs == rhs.coeffs


@given(elements())
@settings(max_examples=40)
def test_dilation_composition(x):
    spec = new_from_structure_constants([f"e{i}" for i in range(1, 7)], K2_GRADING, K2_CONSTANTS)
    ex = spec.element(x)
    lhs = spec.dilation(F(1, 2), spec.dilation(F(6), ex))
    rhs = spec.dilation(F(3), ex)
    assert lhs.coeffs == rhs.coeffs


@given(elements(), elements())
@settings(max_examples=40)
def test_bracket_raises_weight(x, y):
    spec = new_from_structure_constants([f"e{i}" for i in range(1, 7)], K2_GRADING, K2_CONSTANTS)
    ex, ey = spec.element(x), spec.element(y)
    wx = min((spec.weights[i] for i, c in enumerate(x) if c), default=spec.step + 1)
    wy = min((spec.weights[i] for i, c in enumerate(y) if c), default=spec.step + 1)
    br = spec.bracket(ex, ey)
    for i, c in enumerate(br.coeffs):
        if c:
            assert spec.weights[i] >= wx + wy


def test_json_roundtrip(k2_spec):
    data = k2_spec.to_json_dict()
    back = type(k2_spec).from_json_dict(data)
    assert back.constants == k2_spec.constants
    assert back.layers == k2_spec.layers


def test_rank_helper():
    assert _rank([[F(1), F(2)], [F(2), F(4)]]) == 1
    assert _rank([[F(1), F(0)], [F(0), F(1)]]) == 2

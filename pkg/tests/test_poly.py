from fractions import Fraction as F

from hypothesis import given, strategies as st

from szegolift.poly import Poly, compile_poly_map


def test_basic_arithmetic():
    x = Poly.var(2, 0)
    y = Poly.var(2, 1)
    p = (x + y) * (x - y)
    assert p == x * x - y * y
    assert (p - p).is_zero()
    assert p.eval_float([3.0, 2.0]) == 5.0
    assert p.eval_fraction([F(1, 2), F(1, 3)]) == F(1, 4) - F(1, 9)


def test_pow_and_diff():
    x = Poly.var(1, 0)
    p = (x + 1) ** 3
    assert p.terms[(0,)] == 1 and p.terms[(3,)] == 1 and p.terms[(1,)] == 3
    assert p.diff(0) == 3 * (x + 1) ** 2


def test_compose_identity_and_shift():
    x = Poly.var(2, 0)
    y = Poly.var(2, 1)
    p = x * x * y + 2 * y
    assert p.compose([x, y]) == p
    shifted = p.compose([x + 1, y - 1])
    assert shifted.eval_fraction([F(0), F(0)]) == p.eval_fraction([F(1), F(-1)])


def test_embed_reindex():
    p = Poly.var(2, 0) * Poly.var(2, 1)
    q = p.embed(4, [2, 3])
    assert q == Poly.var(4, 2) * Poly.var(4, 3)


def test_coefficient_in_var():
    n = 2
    x, t = Poly.var(n, 0), Poly.var(n, 1)
    p = x * t + 3 * t + x * x
    lin = p.coefficient_in_var(1, 1)
    assert lin == x + 3


def test_compiled_map_matches_eval():
    x, y = Poly.var(2, 0), Poly.var(2, 1)
    polys = [x * y - F(1, 3) * y ** 2, x ** 3]
    fn = compile_poly_map(polys, 2)
    got = fn(1.5, -2.0)
    assert abs(got[0] - polys[0].eval_float([1.5, -2.0])) < 1e-14
    assert abs(got[1] - polys[1].eval_float([1.5, -2.0])) < 1e-14


coeffs = st.fractions(min_value=-50, max_value=50, max_denominator=9)


@st.composite
def polys2(draw):
    terms = draw(st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), coeffs, max_size=5))
    return Poly(2, terms)


@given(polys2(), polys2(), polys2())
def test_ring_axioms(a, b, c):
    assert a * (b + c) == a * b + a * c
    assert (a * b) * c == a * (b * c)
    assert a + b == b + a


@given(polys2(), polys2())
def test_leibniz(a, b):
    assert (a * b).diff(0) == a.diff(0) * b + a * b.diff(0)

import random
from fractions import Fraction as F

import pytest

from szegolift import bch_product, bracket_center_coefficient, general_lift_derivative
from szegolift.lie_core import AlgebraElement
from szegolift.lift import (
    IndexOutOfRange,
    ModeMismatch,
    bch_coeffs,
    dynkin_word_coefficients,
    left_translation_polys,
    pushforward,
)
from szegolift.poly import Poly
from szegolift.vfield import PolyVectorField, pvf_bracket


def rational_point(rng, dim, scale=6):
    return [F(rng.randint(-scale, scale), rng.randint(1, 4)) for _ in range(dim)]


def test_dynkin_low_order_words():
    # words come in both orderings; the effective coefficient of a nested
    # bracket is the alternating aggregate over words that collapse onto it
    table = dynkin_word_coefficients(4)
    assert table[(0,)] == 1 and table[(1,)] == 1
    assert table[(0, 1)] - table[(1, 0)] == F(1, 2)  # [X,Y]
    assert table[(0, 0, 1)] - table[(0, 1, 0)] == F(1, 12)  # [X,[X,Y]]
    assert table[(1, 1, 0)] - table[(1, 0, 1)] == F(1, 12)  # [Y,[Y,X]]


def test_bch_examples_k2(model_k2):
    spec = model_k2.spec
    e = spec.basis_element
    # inverse pair
    x = spec.element(rational_point(random.Random(0), 6))
    assert bch_product(spec, x, -x).is_zero()
    # commuting case
    assert bch_product(spec, e(1).scale(F(2)), e(1).scale(F(3))).coeffs == e(1).scale(F(5)).coeffs
    # hand-evaluated Dynkin terms on the bracket table
    z = bch_product(spec, e(1), e(2))
    assert list(z.coeffs) == [F(1), F(1), F(-1, 2), F(1, 12), F(-1, 12), F(0)]


def test_bch_symmetry_and_associativity(model_k2):
    spec = model_k2.spec
    rng = random.Random(7)
    for _ in range(5):
        x = spec.element(rational_point(rng, 6))
        y = spec.element(rational_point(rng, 6))
        z = spec.element(rational_point(rng, 6))
        assert bch_product(spec, x, y).coeffs == (-bch_product(spec, -y, -x)).coeffs
        lhs = bch_product(spec, bch_product(spec, x, y), z)
        rhs = bch_product(spec, x, bch_product(spec, y, z))
        assert lhs.coeffs == rhs.coeffs


def test_chart_triangular_shape(model_k2, model_k3):
    for model in (model_k2, model_k3):
        chart = model.chart
        n = chart.dim
        assert chart.psi[0] == Poly.var(n, 0)
        assert chart.psi[1] == Poly.var(n, 1)
        for j in range(2, n):
            phi = chart.psi[j] - Poly.var(n, j)
            assert all(chart.weights[i] < chart.weights[j] for i in phi.used_vars())
        # psi_N - x_N has no pure x_N dependence
        assert not (chart.psi[n - 1] - Poly.var(n, n - 1)).uses_var(n - 1)


def test_chart_inverse_roundtrip(model_k2):
    chart = model_k2.chart
    rng = random.Random(3)
    for _ in range(100):
        p = rational_point(rng, 6)
        u = chart.to_first_kind(p)
        back = chart.from_first_kind(u)
        assert back == p


def test_group_law_identity_and_inverse(model_k2):
    chart = model_k2.chart
    rng = random.Random(11)
    zero = [F(0)] * 6
    for _ in range(10):
        p = rational_point(rng, 6)
        assert chart.multiply(p, zero) == p
        assert chart.multiply(zero, p) == p
        assert chart.multiply(p, chart.inverse(p)) == zero


def test_group_law_first_two_coordinates_add(model_k2):
    chart = model_k2.chart
    a = [F(1), F(0), F(0), F(0), F(0), F(0)]
    b = [F(0), F(1), F(0), F(0), F(0), F(0)]
    prod = chart.multiply(a, b)
    assert prod[0] == 1 and prod[1] == 1


def test_group_law_associativity(model_k2):
    chart = model_k2.chart
    rng = random.Random(23)
    for _ in range(100):
        p, q, r = (rational_point(rng, 6, scale=3) for _ in range(3))
        lhs = chart.multiply(chart.multiply(p, q), r)
        rhs = chart.multiply(p, chart.multiply(q, r))
        assert lhs == rhs


def test_group_dilations_are_automorphisms(model_k2):
    chart = model_k2.chart
    rng = random.Random(5)
    lam = F(3, 2)
    for _ in range(20):
        p, q = rational_point(rng, 6), rational_point(rng, 6)
        lhs = chart.dilate(lam, chart.multiply(p, q))
        rhs = chart.multiply(chart.dilate(lam, p), chart.dilate(lam, q))
        assert lhs == rhs


def test_mode_mismatch(model_k2):
    chart = model_k2.chart
    with pytest.raises(ModeMismatch):
        chart.multiply([F(1)] * 6, [1.0] * 6)


def test_numeric_matches_exact(model_k2):
    chart = model_k2.chart
    rng = random.Random(9)
    p, q = rational_point(rng, 6), rational_point(rng, 6)
    exact = chart.multiply(p, q)
    approx = chart.multiply([float(c) for c in p], [float(c) for c in q])
    for a, b in zip(exact, approx):
        assert abs(float(a) - b) <= 1e-9 * max(1.0, abs(float(a)))


def test_lifted_fields_k2_exact(model_k2):
    X1t, X2t = model_k2.X1t, model_k2.X2t
    n = 6
    x1, x2 = Poly.var(n, 0), Poly.var(n, 1)
    rho = x1 * x1 + x2 * x2
    assert X1t.component(0) == Poly.const(n, 1)
    assert X1t.component(2) == x2 * F(1, 2)
    assert X1t.component(3) == x1 * x2 * F(-1, 3)
    assert X1t.component(4) == x2 * x2 * F(-1, 3)
    assert X1t.component(5) == x2 * rho
    assert X2t.component(1) == Poly.const(n, 1)
    assert X2t.component(2) == x1 * F(-1, 2)
    assert X2t.component(3) == x1 * x1 * F(1, 3)
    assert X2t.component(4) == x1 * x2 * F(1, 3)
    assert X2t.component(5) == -(x1 * rho)


def test_printed_variant_fails_left_invariance(model_k2):
    """The alternate ∂4 coefficient (x2^2/3 instead of x1^2/3) cannot be
    left-invariant for this bracket table; the bracket homomorphism pins
    the implemented value."""
    spec, chart = model_k2.spec, model_k2.chart
    n = 6
    x1, x2 = Poly.var(n, 0), Poly.var(n, 1)
    variant = PolyVectorField(n, {
        1: Poly.const(n, 1),
        2: x1 * F(-1, 2),
        3: (x2 * x2) * F(1, 3),
        4: (x1 * x2) * F(1, 3),
        5: -(x1 * (x1 * x1 + x2 * x2)),
    })
    g = [F(1, 2), F(-1, 3), F(2), F(1, 5), F(-1), F(3)]
    Lg = left_translation_polys(chart, g)

    def invariant(V):
        push = pushforward(Lg, V)
        return all(push.component(i) == V.component(i).compose(Lg) for i in range(n))

    assert invariant(model_k2.X2t)
    assert not invariant(variant)


def test_left_invariance_random_translations(model_k2, model_k3):
    rng = random.Random(41)
    for model in (model_k2, model_k3):
        chart = model.chart
        n = chart.dim
        for _ in range(10):
            g = rational_point(rng, n, scale=4)
            Lg = left_translation_polys(chart, g)
            for V in (model.X1t, model.X2t):
                push = pushforward(Lg, V)
                assert all(push.component(i) == V.component(i).compose(Lg) for i in range(n))


def test_left_invariance_on_test_function(model_k2):
    # (X~j F)(g * xi) == X~j (F(g * .))(xi) for a random polynomial F
    chart = model_k2.chart
    n = 6
    rng = random.Random(17)
    F_poly = Poly(n, {
        tuple(rng.randint(0, 1) for _ in range(n)): F(rng.randint(-4, 4), rng.randint(1, 3))
        for _ in range(6)
    })
    g = rational_point(rng, n, scale=3)
    Lg = left_translation_polys(chart, g)
    for V in (model_k2.X1t, model_k2.X2t):
        lhs = V.apply_to(F_poly).compose(Lg)
        rhs = V.apply_to(F_poly.compose(Lg))
        assert lhs == rhs


def test_lift_restricts_to_surface_fields(model_k2):
    # on functions of (x1, x2, x6) only, X~j acts as the surface X_j
    n = 6
    f = Poly.var(n, 0) * Poly.var(n, 5) + Poly.var(n, 1) ** 2
    from szegolift import generators

    X1, X2 = generators(2)
    lift_apply = model_k2.X1t.apply_to(f)
    surf = X1.apply_to(f.embed(3, [0, 1, 2, 2, 2, 2]) if False else Poly(3, {
        (e[0], e[1], e[5]): c for e, c in f.terms.items()
    }))
    lifted_projected = Poly(3, {(e[0], e[1], e[5]): c for e, c in lift_apply.terms.items()})
    assert lifted_projected == surf


def test_lifted_bracket_matches_structure_constants(model_k2):
    spec, chart = model_k2.spec, model_k2.chart
    br = pvf_bracket(model_k2.X1t, model_k2.X2t)
    # [e1, e2] = -e3; build the left-invariant field of -e3 via the same chart
    from szegolift.lift import right_log_derivative

    n = 6
    e3 = [Poly.zero(n)] * n
    e3[2] = Poly.const(n, 1)
    W = right_log_derivative(spec, chart.psi, e3)
    order = sorted(range(n), key=lambda i: (spec.weights[i], i))
    comps = [None] * n
    for m in order:
        val = W[m]
        for i in range(n):
            if i != m:
                d = chart.psi[m].diff(i)
                if d and comps[i]:
                    val = val - d * comps[i]
        comps[m] = val
    for i in range(n):
        assert br.component(i) == -comps[i]


def test_general_lift_derivative_examples(model_k2, model_k3):
    spec = model_k2.spec
    assert general_lift_derivative(spec, F(0), F(0)).is_zero()
    v = general_lift_derivative(spec, F(0), F(1))
    assert v.coeffs[5] == 1  # step-4 layer component is x2 (x1^2+x2^2)^(k-1) at (0,1)
    # symbolic check for k=3: top component equals x2 (x1^2+x2^2)^2
    spec3 = model_k3.spec
    n = spec3.dim
    x1, x2 = Poly.var(n, 0), Poly.var(n, 1)
    w = general_lift_derivative(spec3, x1, x2)
    assert w.coeffs[n - 1] == x2 * (x1 * x1 + x2 * x2) ** 2


def test_bracket_center_coefficient_values():
    assert bracket_center_coefficient(2, 0) == 8
    assert bracket_center_coefficient(2, 1) == 8
    assert bracket_center_coefficient(3, 1) == 48
    with pytest.raises(IndexOutOfRange):
        bracket_center_coefficient(2, 2)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_bracket_center_matches_ad_powers(k):
    """The factorial formula equals the ad-power computation on realized fields."""
    from szegolift import generators

    X1, X2 = generators(k)
    X21 = pvf_bracket(X2, X1)
    for j in range(k):
        v = X21
        for _ in range(2 * k - 2 - 2 * j):
            v = pvf_bracket(X2, v)
        for _ in range(2 * j):
            v = pvf_bracket(X1, v)
        assert not v.component(0) and not v.component(1)
        assert v.component(2) == Poly.const(3, bracket_center_coefficient(k, j))


def test_step_is_2k(model_k2, model_k3):
    rng = random.Random(2)
    for model in (model_k2, model_k3):
        spec = model.spec
        x1, x2 = F(rng.randint(1, 5)), F(rng.randint(1, 5))
        v = spec.element([x1, x2] + [F(0)] * (spec.dim - 2))
        e1 = spec.basis_element(1)
        top = spec.ad_power(v, spec.step - 1, e1)
        assert not top.is_zero()
        assert spec.ad_power(v, spec.step, e1).is_zero()

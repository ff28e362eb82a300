from fractions import Fraction as F

import pytest

from szegolift import KTooSmall, evaluate, generate_algebra, generators, pvf_bracket
from szegolift.poly import Poly
from szegolift.vfield import free_nilpotent_dimension, witt_dimension


def test_generators_k2():
    X1, X2 = generators(2)
    x1, x2 = Poly.var(3, 0), Poly.var(3, 1)
    assert X1.component(0) == Poly.const(3, 1)
    assert X1.component(2) == x1 * x1 * x2 + x2 ** 3
    assert X2.component(1) == Poly.const(3, 1)
    assert X2.component(2) == -(x1 ** 3) - x1 * x2 * x2


def test_generators_k3_expansion():
    X1, _ = generators(3)
    x1, x2 = Poly.var(3, 0), Poly.var(3, 1)
    # x2 (x1^2 + x2^2)^2 expanded by hand
    assert X1.component(2) == x2 ** 5 + 2 * x1 * x1 * x2 ** 3 + x1 ** 4 * x2


def test_k_too_small():
    with pytest.raises(KTooSmall):
        generators(1)


def test_bracket_k2():
    X1, X2 = generators(2)
    x1, x2 = Poly.var(3, 0), Poly.var(3, 1)
    X21 = pvf_bracket(X2, X1)
    assert not X21.component(0) and not X21.component(1)
    assert X21.component(2) == 4 * (x1 * x1 + x2 * x2)
    assert pvf_bracket(X1, X1).is_zero()
    # [[X2,X1],X1] = -8 x1 d/dt with the A(B)-B(A) sign convention
    nested = pvf_bracket(X21, X1)
    assert nested.component(2) == -8 * x1


def test_evaluate():
    X1, X2 = generators(2)
    assert evaluate(X1, [1.0, 1.0, 0.0]) == [1.0, 0.0, 2.0]
    assert evaluate(X2, [1.0, 0.0, 5.0]) == [0.0, 1.0, -1.0]
    assert evaluate(X1, [0.0, 0.0, 0.0]) == [1.0, 0.0, 0.0]


def test_witt_numbers():
    assert [witt_dimension(2, d) for d in range(1, 5)] == [2, 1, 2, 3]
    assert free_nilpotent_dimension(2, 4) == 8


@pytest.mark.parametrize("k,expected_dim,expected_layers", [
    (2, 6, [2, 1, 2, 1]),
    (3, 11, [2, 1, 2, 3, 2, 1]),
])
def test_generated_dimensions(k, expected_dim, expected_layers):
    spec, basis = generate_algebra(k)
    assert spec.dim == expected_dim
    assert [len(l) for l in spec.layers] == expected_layers
    assert spec.dim < free_nilpotent_dimension(2, 2 * k)
    # independent recount of the homogeneous dimension from the grading
    recount = sum(spec.weights)
    assert spec.homogeneous_dimension() == recount


def test_k2_matches_example_table():
    spec, basis = generate_algebra(2)
    b = spec.bracket_basis
    assert b(2, 1) == {3: F(1)}
    assert b(3, 1) == {4: F(1)}
    assert b(3, 2) == {5: F(1)}
    assert b(4, 1) == {6: F(8)}
    assert b(5, 2) == {6: F(8)}
    others = {(4, 2), (5, 1), (3, 4), (3, 5), (4, 5), (1, 6), (2, 6), (3, 6)}
    for i, j in others:
        assert not b(i, j)


def test_realization_is_homomorphism(model_k2, model_k3):
    for model in (model_k2, model_k3):
        spec, basis = model.spec, model.realization
        for i in range(1, spec.dim + 1):
            for j in range(i + 1, spec.dim + 1):
                br = pvf_bracket(basis[i - 1], basis[j - 1])
                expect = None
                for m, c in spec.bracket_basis(i, j).items():
                    part = basis[m - 1].scale(c)
                    expect = part if expect is None else expect + part
                if expect is None:
                    assert br.is_zero()
                else:
                    assert all(br.component(t) == expect.component(t) for t in range(3))


def test_center_realization(model_k2):
    spec, basis = model_k2.spec, model_k2.realization
    eN = basis[-1]
    assert eN.component(2) == Poly.const(3, 1) and len(eN.components) == 1
    for b in basis:
        assert pvf_bracket(eN, b).is_zero()

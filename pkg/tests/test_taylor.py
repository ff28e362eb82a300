import math

import numpy as np
import pytest

from szegolift.poly import Poly
from szegolift.taylor import (
    DegenerateSamples,
    GroupFunctionHandle,
    SmoothFunctionHandle,
    affine_remainder_max,
    builtin_symbols,
    group_remainder_slope,
    group_taylor_p1,
    remainder_slope,
    taylor_p1,
)


@pytest.fixture(scope="module")
def symbols():
    return builtin_symbols(2)


def test_taylor_p1_examples(symbols):
    # f = x1 reproduces itself
    x, y = (0.3, -0.2, 0.1), (0.9, 0.4, -0.3)
    assert taylor_p1(symbols["x1"], x, y) == pytest.approx(y[0], abs=1e-14)
    # constants
    assert taylor_p1(symbols["const"], x, y) == pytest.approx(1.0, abs=1e-14)
    # f = t at x=(1,1,0), y=(1.1,1,0.2): X1 t = x2(x1^2+x2^2) = 2
    val = taylor_p1(symbols["t"], (1.0, 1.0, 0.0), (1.1, 1.0, 0.2))
    assert val == pytest.approx(0.2, abs=1e-12)


def test_fd_matches_symbolic(symbols):
    handle_fd = SmoothFunctionHandle(2, f=lambda a, b, c: c)  # t via finite differences
    p = (0.7, -0.4, 0.2)
    for direction in (1, 2):
        sym = symbols["t"].horizontal(direction, p)
        fd = handle_fd.horizontal(direction, p)
        assert abs(sym - fd) <= 1e-6 * max(1.0, abs(sym))


def test_remainder_slope_quadratic(symbols):
    rep = remainder_slope(symbols["x1^2"], (0.8, 0.3, 0.0), seed=1)
    assert rep.slope >= 1.9
    assert math.isfinite(rep.constant)


def test_remainder_slope_vertical(symbols):
    rep = remainder_slope(symbols["t"], (1.0, 0.0, 0.0), seed=2)
    assert rep.slope >= 1.9


def test_remainder_slope_sin(symbols):
    rep = remainder_slope(symbols["sin_x1"], (0.5, -0.7, 0.3), seed=3)
    assert rep.slope >= 1.9


def test_affine_exact(symbols):
    assert affine_remainder_max(symbols["x1"], (0.4, 0.2, -0.1)) <= 1e-12
    assert affine_remainder_max(symbols["x2"], (0.4, 0.2, -0.1)) <= 1e-12
    with pytest.raises(DegenerateSamples):
        remainder_slope(symbols["x1"], (0.4, 0.2, -0.1))


def test_constant_normalisation_stability(symbols):
    # the normalised remainder constant stays within a factor 3 across
    # base points away from the degenerate axis
    consts = []
    for base in [(1.0, 0.0, 0.0), (0.8, 0.5, 0.2), (-0.9, 0.4, -0.1), (0.6, -0.8, 0.3)]:
        consts.append(remainder_slope(symbols["t"], base, seed=5).constant)
    assert max(consts) <= 3.0 * min(consts)


def test_group_taylor_linear(model_k2):
    F = GroupFunctionHandle(model_k2.chart, (model_k2.X1t, model_k2.X2t), Poly.var(6, 0))
    xi = [0.3, -0.2, 0.1, 0.0, 0.4, -0.1]
    eta = [0.5, 0.1, 0.2, -0.3, 0.0, 0.25]
    assert group_taylor_p1(F, xi, eta) == pytest.approx(eta[0], abs=1e-13)


def test_group_taylor_matches_surface_for_slice_functions(model_k2, symbols):
    # F(x) = x1 * x6 depends only on (x1, x2, x6); at embedded points the
    # group polynomial equals the surface polynomial of the restriction
    n = 6
    F = GroupFunctionHandle(model_k2.chart, (model_k2.X1t, model_k2.X2t),
                            Poly.var(n, 0) * Poly.var(n, 5))
    f = SmoothFunctionHandle(2, poly=Poly.var(3, 0) * Poly.var(3, 2))
    x = (0.7, -0.3, 0.2)
    y = (0.5, 0.4, -0.1)
    xi = [x[0], x[1], 0, 0, 0, x[2]]
    eta = [y[0], y[1], 0, 0, 0, y[2]]
    assert group_taylor_p1(F, xi, eta) == pytest.approx(taylor_p1(f, x, y), abs=1e-13)


def test_group_weight_two_coordinate_slope(model_k2):
    # x3 has weight 2, so its remainder is quadratic in the flow time
    F = GroupFunctionHandle(model_k2.chart, (model_k2.X1t, model_k2.X2t), Poly.var(6, 2))
    slope = group_remainder_slope(F, [0.2, -0.4, 0.0, 0.1, 0.0, 0.3], seed=4)
    assert slope >= 1.9


def test_group_increments_are_differences(model_k2):
    # first two coordinates of xi^{-1} * eta equal plain differences
    chart = model_k2.chart
    rng = np.random.default_rng(8)
    xi = list(rng.uniform(-1, 1, 6))
    eta = list(rng.uniform(-1, 1, 6))
    inc = chart.multiply(chart.inverse(xi), eta)
    assert inc[0] == pytest.approx(eta[0] - xi[0], abs=1e-12)
    assert inc[1] == pytest.approx(eta[1] - xi[1], abs=1e-12)

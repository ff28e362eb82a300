import math

import numpy as np
import pytest

from szegolift.carnot import (
    BoundaryPoint,
    CCBudget,
    HorizontalControl,
    NonAdmissibleControl,
    TargetNotReached,
    cc_distance_group,
    cc_distance_surface,
    embed,
    flow_exact_group,
    horizontal_flow,
    project,
    replay_on_surface,
)
from szegolift.vfield import generators

FAST = CCBudget(segments=6, restarts=3, maxiter=300)


def test_embed_project_examples():
    assert embed(BoundaryPoint(1, 2, 3), 6) == [1, 2, 0, 0, 0, 3]
    p = BoundaryPoint(0.3, -0.7, 1.1)
    assert project(embed(p, 6)) == p
    assert project([1, 2, 9, 9, 9, 3]) == BoundaryPoint(1, 2, 3)


def test_control_validation():
    HorizontalControl(((1.0, 0.0, 0.5),))
    with pytest.raises(NonAdmissibleControl):
        HorizontalControl(((0.9, 0.9, 0.5),))
    with pytest.raises(NonAdmissibleControl):
        HorizontalControl(((1.0, 0.0, -0.1),))


def test_flow_straight_line_group(model_k2):
    ctrl = HorizontalControl(((1.0, 0.0, 0.8),))
    end = horizontal_flow((model_k2.X1t, model_k2.X2t), ctrl, [0.0] * 6)
    assert np.allclose(end, [0.8, 0, 0, 0, 0, 0], atol=1e-12)


def test_flow_straight_line_surface():
    X1, X2 = generators(2)
    end = horizontal_flow((X1, X2), HorizontalControl(((1.0, 0.0, 0.8),)), [0.0, 0.0, 0.0])
    assert np.allclose(end, [0.8, 0, 0], atol=1e-12)


def test_flow_concatenation_semigroup():
    X1, X2 = generators(2)
    c1 = HorizontalControl(((0.6, 0.8, 0.5),))
    c2 = HorizontalControl(((-0.8, 0.6, 0.4),))
    start = [0.2, -0.1, 0.05]
    mid = horizontal_flow((X1, X2), c1, start)
    end_two = horizontal_flow((X1, X2), c2, mid)
    end_cat = horizontal_flow((X1, X2), c1 + c2, start)
    assert np.allclose(end_two, end_cat, atol=1e-8)


def test_rk4_matches_exact_steppers(model_k2):
    # the closed-form segment maps agree with the reference integrator,
    # which independently validates the group law against the flow ODE
    ctrl = HorizontalControl(((0.6, 0.8, 0.7), (-1.0, 0.0, 0.4), (0.0, 1.0, 0.3)))
    rk = horizontal_flow((model_k2.X1t, model_k2.X2t), ctrl, [0.1, -0.2, 0.0, 0.3, 0.0, 0.05])
    fast = flow_exact_group(model_k2.chart, ctrl, [0.1, -0.2, 0.0, 0.3, 0.0, 0.05])
    assert np.allclose(rk, fast, atol=1e-8)

    X1, X2 = generators(2)
    rk_s = horizontal_flow((X1, X2), ctrl, [0.1, -0.2, 0.05])
    fast_s = replay_on_surface(2, ctrl, (0.1, -0.2, 0.05))
    assert np.allclose(rk_s, fast_s, atol=1e-8)


def test_cc_group_straight_line(model_k2):
    r = cc_distance_group(model_k2.chart, [0.0] * 6, [0.9, 0, 0, 0, 0, 0], FAST, seed=1)
    assert abs(r.value - 0.9) <= 0.005 * 0.9
    assert r.residual <= FAST.endpoint_tol


def test_cc_surface_straight_line():
    r = cc_distance_surface(2, (0, 0, 0), (0.9, 0, 0), FAST, seed=1)
    assert abs(r.value - 0.9) <= 0.005 * 0.9


def test_cc_dilation_covariance(model_k2):
    chart = model_k2.chart
    rng = np.random.default_rng(7)
    xi = list(rng.uniform(-1, 1, 6))
    eta = list(rng.uniform(-1, 1, 6))
    base = cc_distance_group(chart, xi, eta, FAST, seed=5)
    for lam in (0.5, 2.0):
        scaled = cc_distance_group(chart, chart.dilate(lam, xi), chart.dilate(lam, eta), FAST, seed=5)
        assert abs(scaled.value / base.value - lam) <= 0.02 * lam


def test_cc_symmetry(model_k2):
    chart = model_k2.chart
    rng = np.random.default_rng(11)
    xi = list(rng.uniform(-1, 1, 6))
    eta = list(rng.uniform(-1, 1, 6))
    a = cc_distance_group(chart, xi, eta, FAST, seed=2)
    b = cc_distance_group(chart, eta, xi, FAST, seed=2)
    assert abs(a.value - b.value) <= 0.02 * max(a.value, b.value)


def test_cc_triangle_upper_bounds():
    rng = np.random.default_rng(13)
    for trial in range(2):
        p, q, r = (rng.uniform(-0.8, 0.8, 3) for _ in range(3))
        dpr = cc_distance_surface(2, p, r, FAST, seed=30 + trial).value
        dpq = cc_distance_surface(2, p, q, FAST, seed=40 + trial).value
        dqr = cc_distance_surface(2, q, r, FAST, seed=50 + trial).value
        assert dpr <= (dpq + dqr) * 1.03


def test_cc_projection_lower_bound(model_k2):
    rng = np.random.default_rng(17)
    xi = list(rng.uniform(-0.7, 0.7, 6))
    eta = list(rng.uniform(-0.7, 0.7, 6))
    res = cc_distance_group(model_k2.chart, xi, eta, FAST, seed=3)
    zeta = model_k2.chart.multiply(model_k2.chart.inverse(xi), eta)
    assert res.value >= math.hypot(zeta[0], zeta[1]) - 1e-6


def test_group_control_projects_onto_surface(model_k2):
    """The planar+vertical coordinates of a group path satisfy the surface
    ODE with the same control, so replaying the optimal control on the
    surface lands on the projected target."""
    chart = model_k2.chart
    p = BoundaryPoint(0.4, -0.2, 0.1)
    q = BoundaryPoint(-0.3, 0.5, 0.25)
    res = cc_distance_group(chart, embed(p, 6), embed(q, 6), FAST, seed=9)
    end = replay_on_surface(2, res.control, p)
    assert abs(end[0] - q.x1) < 1e-5
    assert abs(end[1] - q.x2) < 1e-5
    assert abs(end[2] - q.t) < 1e-5


def test_radial_pairs_embed_isometrically(model_k2):
    # along radial moves the embedded curve is genuinely horizontal
    ds = cc_distance_surface(2, (0.3, 0, 0), (1.2, 0, 0), FAST, seed=3)
    dg = cc_distance_group(model_k2.chart, embed((0.3, 0, 0), 6), embed((1.2, 0, 0), 6), FAST, seed=3)
    assert abs(ds.value - dg.value) <= 1e-9


def test_target_not_reached_payload(model_k2):
    starved = CCBudget(segments=4, restarts=1, maxiter=1, polish_iters=0,
                       endpoint_tol=1e-9, surface_seed=False)
    with pytest.raises(TargetNotReached) as err:
        cc_distance_group(model_k2.chart, [0.0] * 6, [0.3, 0.2, 0.1, -0.4, 0.2, 0.9],
                          starved, seed=1)
    assert err.value.residual > 0

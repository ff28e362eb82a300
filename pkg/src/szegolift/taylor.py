"""First-order horizontal Taylor approximation and remainder experiments.

The horizontal polynomial at x is P_x(y) = f(x) + (y1-x1) X1 f(x) +
(y2-x2) X2 f(x); for twice differentiable f the remainder is quadratic in
the control distance. The slope experiment samples y along single-segment
unit-speed flows of time s, for which the control distance from x is
exactly s (the planar projection of such a path is a straight segment of
length s, so no shorter path exists), and fits log max |f(y) - P_x(y)|
against log s.

Function handles evaluate horizontal derivatives analytically when
supplied, symbolically for polynomial data, and otherwise by central
differences along the horizontal flows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .carnot import SurfaceSpace, GroupSpace
from .lift import SecondKindChart
from .poly import Poly
from .vfield import PolyVectorField, generators


class DerivativeUnavailable(RuntimeError):
    pass


class DegenerateSamples(RuntimeError):
    """All sampled remainders underflowed: f is first-order exact here."""


FD_STEP = 1e-5


class SmoothFunctionHandle:
    """Scalar function on the surface with horizontal derivative access.

    ``poly`` (3 variables: x1, x2, t) enables exact symbolic derivatives;
    otherwise analytic evaluators are used when given and central finite
    differences along the horizontal flows fill the gaps.
    """

    def __init__(self, k: int, f: Callable | None = None, poly: Poly | None = None,
                 d1: Callable | None = None, d2: Callable | None = None,
                 second: dict | None = None, label: str = ""):
        if f is None and poly is None:
            raise DerivativeUnavailable("need an evaluator or a polynomial")
        self.k = k
        self.label = label
        self.poly = poly
        self._f = f
        self._d1 = d1
        self._d2 = d2
        self._second = second or {}
        self._space = SurfaceSpace(k)
        if poly is not None:
            X1, X2 = generators(k)
            self._sym1 = X1.apply_to(poly)
            self._sym2 = X2.apply_to(poly)
            self._sym_second = {
                (1, 1): X1.apply_to(self._sym1),
                (1, 2): X1.apply_to(self._sym2),
                (2, 1): X2.apply_to(self._sym1),
                (2, 2): X2.apply_to(self._sym2),
            }

    def value(self, p) -> float:
        if self.poly is not None:
            return self.poly.eval_float(list(p))
        return float(self._f(*p))

    def _flow(self, p, direction: int, h: float):
        a = (1.0, 0.0) if direction == 1 else (0.0, 1.0)
        if h >= 0:
            return self._space.step(tuple(p), a[0], a[1], h)
        return self._space.step(tuple(p), -a[0], -a[1], -h)

    def _fd_first(self, direction: int, p) -> float:
        fp = self.value(self._flow(p, direction, FD_STEP))
        fm = self.value(self._flow(p, direction, -FD_STEP))
        return (fp - fm) / (2.0 * FD_STEP)

    def horizontal(self, direction: int, p) -> float:
        """X1 f or X2 f at p."""
        if self.poly is not None:
            sym = self._sym1 if direction == 1 else self._sym2
            return sym.eval_float(list(p))
        fn = self._d1 if direction == 1 else self._d2
        if fn is not None:
            return float(fn(*p))
        return self._fd_first(direction, p)

    def second(self, i: int, j: int, p) -> float:
        """X_i X_j f at p."""
        if self.poly is not None:
            return self._sym_second[(i, j)].eval_float(list(p))
        fn = self._second.get((i, j))
        if fn is not None:
            return float(fn(*p))
        h = FD_STEP
        gp = self.horizontal(j, self._flow(p, i, h))
        gm = self.horizontal(j, self._flow(p, i, -h))
        return (gp - gm) / (2.0 * h)

    def sup_second(self, x, radius: float, n_samples: int = 64, seed: int = 0) -> float:
        """Empirical sup of |X_i X_j f| over flow samples within the radius."""
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EC0]))
        best = max(abs(self.second(i, j, x)) for i in (1, 2) for j in (1, 2))
        for _ in range(n_samples):
            theta = rng.uniform(0, 2 * math.pi)
            s = rng.uniform(0, radius)
            z = self._space.step(tuple(x), math.cos(theta), math.sin(theta), s)
            best = max(best, max(abs(self.second(i, j, z)) for i in (1, 2) for j in (1, 2)))
        return best


def builtin_symbols(k: int) -> dict:
    """Named test functions with analytic or symbolic derivative data."""
    x1, x2, t = (Poly.var(3, i) for i in range(3))
    handles = {
        "const": SmoothFunctionHandle(k, poly=Poly.const(3, 1), label="const"),
        "x1": SmoothFunctionHandle(k, poly=x1, label="x1"),
        "x2": SmoothFunctionHandle(k, poly=x2, label="x2"),
        "t": SmoothFunctionHandle(k, poly=t, label="t"),
        "x1^2": SmoothFunctionHandle(k, poly=x1 * x1, label="x1^2"),
        "x1*x2": SmoothFunctionHandle(k, poly=x1 * x2, label="x1*x2"),
    }

    def drift(x, y):
        return y * (x * x + y * y) ** (k - 1)

    handles["sin_x1"] = SmoothFunctionHandle(
        k,
        f=lambda a, b, c: math.sin(a),
        d1=lambda a, b, c: math.cos(a),
        d2=lambda a, b, c: 0.0,
        second={(1, 1): lambda a, b, c: -math.sin(a), (1, 2): lambda a, b, c: 0.0,
                (2, 1): lambda a, b, c: 0.0, (2, 2): lambda a, b, c: 0.0},
        label="sin_x1",
    )
    return handles


def taylor_p1(handle: SmoothFunctionHandle, x, y) -> float:
    """First-order horizontal polynomial of f at x, evaluated toward y."""
    return (handle.value(x)
            + (y[0] - x[0]) * handle.horizontal(1, x)
            + (y[1] - x[1]) * handle.horizontal(2, x))


@dataclass
class SlopeReport:
    slope: float
    constant: float          # max |rem| / (s^2 sup|XXf|)
    scales: np.ndarray
    max_remainders: np.ndarray


def remainder_slope(handle: SmoothFunctionHandle, x, scales: Sequence[float] | None = None,
                    n_directions: int = 16, seed: int = 0,
                    sup_radius_factor: float = 2.0) -> SlopeReport:
    """log-log slope of the Taylor remainder against the control distance."""
    if scales is None:
        scales = np.logspace(-3, -1, 7)
    scales = np.asarray(scales, float)
    space = handle._space
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A13]))
    thetas = rng.uniform(0, 2 * math.pi, n_directions)
    floor = 1e-14 * max(1.0, abs(handle.value(x)))
    maxrem = np.zeros(len(scales))
    for si, s in enumerate(scales):
        worst = 0.0
        for theta in thetas:
            y = space.step(tuple(x), math.cos(theta), math.sin(theta), float(s))
            worst = max(worst, abs(handle.value(y) - taylor_p1(handle, x, y)))
        maxrem[si] = worst
    live = maxrem > floor
    if not live.any():
        raise DegenerateSamples("remainders below float resolution: exact to first order")
    if live.sum() < 3:
        raise DegenerateSamples("too few resolvable scales for a slope fit")
    slope = float(np.polyfit(np.log(scales[live]), np.log(maxrem[live]), 1)[0])
    sup = handle.sup_second(x, sup_radius_factor * float(scales.max()), seed=seed)
    constant = float(np.max(maxrem[live] / (scales[live] ** 2 * max(sup, 1e-300))))
    return SlopeReport(slope=slope, constant=constant, scales=scales, max_remainders=maxrem)


def affine_remainder_max(handle: SmoothFunctionHandle, x, scales=None, n_directions=8, seed=0) -> float:
    """Largest sampled remainder; for affine data this is float noise."""
    if scales is None:
        scales = np.logspace(-3, -1, 5)
    space = handle._space
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAFF1]))
    worst = 0.0
    for s in scales:
        for theta in rng.uniform(0, 2 * math.pi, n_directions):
            y = space.step(tuple(x), math.cos(theta), math.sin(theta), float(s))
            worst = max(worst, abs(handle.value(y) - taylor_p1(handle, x, y)))
    return worst


# -- group side -------------------------------------------------------------


class GroupFunctionHandle:
    """Polynomial function on the lifted group with symbolic X~ derivatives."""

    def __init__(self, chart: SecondKindChart, fields: tuple[PolyVectorField, PolyVectorField],
                 poly: Poly, label: str = ""):
        if poly.nvars != chart.dim:
            raise DerivativeUnavailable("polynomial lives in the wrong dimension")
        self.chart = chart
        self.poly = poly
        self.label = label
        self.X1t, self.X2t = fields
        self._d1 = self.X1t.apply_to(poly)
        self._d2 = self.X2t.apply_to(poly)
        self._space = GroupSpace(chart)

    def value(self, xi) -> float:
        return self.poly.eval_float(list(xi))

    def horizontal(self, direction: int, xi) -> float:
        return (self._d1 if direction == 1 else self._d2).eval_float(list(xi))


def group_taylor_p1(handle: GroupFunctionHandle, xi, eta) -> float:
    """Group-side first-order polynomial; increments are plain differences
    in the first two coordinates by the triangular chart shape."""
    y1 = eta[0] - xi[0]
    y2 = eta[1] - xi[1]
    return handle.value(xi) + y1 * handle.horizontal(1, xi) + y2 * handle.horizontal(2, xi)


def group_remainder_slope(handle: GroupFunctionHandle, xi, scales=None,
                          n_directions: int = 16, seed: int = 0) -> float:
    if scales is None:
        scales = np.logspace(-3, -1, 7)
    scales = np.asarray(scales, float)
    space = handle._space
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A14]))
    thetas = rng.uniform(0, 2 * math.pi, n_directions)
    floor = 1e-14 * max(1.0, abs(handle.value(xi)))
    maxrem = np.zeros(len(scales))
    for si, s in enumerate(scales):
        worst = 0.0
        for theta in thetas:
            # two-segment bent flows: single segments keep weight-2
            # coordinates exactly linear, which would hide the remainder
            mid = space.step(tuple(xi), math.cos(theta), math.sin(theta), 0.5 * float(s))
            eta = space.step(mid, math.cos(theta + 0.5 * math.pi),
                             math.sin(theta + 0.5 * math.pi), 0.5 * float(s))
            worst = max(worst, abs(handle.value(eta) - group_taylor_p1(handle, xi, eta)))
        maxrem[si] = worst
    live = maxrem > floor
    if not live.any():
        raise DegenerateSamples("remainders below float resolution: exact to first order")
    return float(np.polyfit(np.log(scales[live]), np.log(maxrem[live]), 1)[0])

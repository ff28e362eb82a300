"""Exponential coordinates of the second kind and the lifted fields.

The chart identifies the simply connected group of a step-s algebra with
R^N through

    (x1, ..., xN)  ->  exp(sum_{j>=3} x_j e_j) exp(x1 e1 + x2 e2) exp(xN eN),

which, because e_N is central, collapses to exp(A) exp(B) with
A = sum_{j>=3..N} x_j e_j and B = x1 e1 + x2 e2. Expanding that product
with the Dynkin form of the Baker-Campbell-Hausdorff series (finite here,
by nilpotency) gives first-kind coordinates psi_j as polynomials; the
triangular shape psi_j = x_j + (lower-weight variables) makes the inverse
a back-substitution. The group law, inversion, dilations, and the
left-invariant fields extending e_1, e_2 all come out of this chart.

All series coefficients are exact rationals; numeric group operations are
float evaluations of the same polynomials.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from .lie_core import AlgebraElement, LieAlgebraSpec
from .poly import Poly, compile_poly_map
from .vfield import PolyVectorField


class TriangularityViolation(RuntimeError):
    """The chart polynomials lost their triangular shape (a bug)."""


class FormViolation(RuntimeError):
    """A lifted field fell outside its proven normal form (a bug)."""


class ModeMismatch(TypeError):
    """Symbolic and numeric points were mixed in one group operation."""


class IndexOutOfRange(IndexError):
    pass


# -- Dynkin series ------------------------------------------------------


@lru_cache(maxsize=None)
def dynkin_word_coefficients(step: int) -> dict:
    """Aggregate BCH coefficients of right-nested bracket words.

    Returns {word: Fraction} where a word is a tuple over {0, 1} (0 for the
    first argument, 1 for the second) and stands for the nested bracket
    [w0, [w1, [... [w_{m-2}, w_{m-1}]]]]. Words longer than ``step`` vanish
    by nilpotency and are not listed; neither are words whose innermost
    bracket is [a, a] = 0 or whose aggregated coefficient cancels to zero.
    """
    table: dict = {}
    fact = math.factorial

    def visit(blocks: tuple, total: int):
        if blocks:
            n = len(blocks)
            denom = n * total
            for r, s in blocks:
                denom *= fact(r) * fact(s)
            coeff = Fraction((-1) ** (n - 1), denom)
            word = []
            for r, s in blocks:
                word.extend([0] * r)
                word.extend([1] * s)
            word = tuple(word)
            table[word] = table.get(word, Fraction(0)) + coeff
        if total >= step:
            return
        room = step - total
        for r in range(room + 1):
            for s in range(room - r + 1):
                if r + s >= 1:
                    visit(blocks + ((r, s),), total + r + s)

    visit((), 0)
    out = {}
    for word, c in table.items():
        if not c:
            continue
        if len(word) >= 2 and word[-1] == word[-2]:
            continue  # innermost bracket vanishes
        out[word] = c
    return out


def bch_coeffs(alg: LieAlgebraSpec, x: Sequence, y: Sequence) -> list:
    """BCH product on raw coefficient sequences, exact and ring-generic."""
    table = dynkin_word_coefficients(alg.step)
    letters = (list(x), list(y))
    zero = x[0] * 0 + y[0] * 0
    cache: dict = {}

    def word_value(word):
        val = cache.get(word)
        if val is None:
            if len(word) == 1:
                val = letters[word[0]]
            else:
                val = alg.bracket_coeffs(letters[word[0]], word_value(word[1:]))
            cache[word] = val
        return val

    acc = [zero] * alg.dim
    for word, c in table.items():
        vec = word_value(word)
        if any(vec):
            acc = [a + c * v for a, v in zip(acc, vec)]
    return acc


def bch_product(alg: LieAlgebraSpec, X: AlgebraElement, Y: AlgebraElement) -> AlgebraElement:
    return AlgebraElement(tuple(bch_coeffs(alg, X.coeffs, Y.coeffs)))


@lru_cache(maxsize=None)
def _bernoulli_plus(n: int) -> Fraction:
    """Bernoulli numbers with the B1 = +1/2 sign convention."""
    if n == 0:
        return Fraction(1)
    if n == 1:
        return Fraction(1, 2)
    if n % 2 == 1:
        return Fraction(0)
    # recurrence for the B1 = -1/2 family, then flip the sign of B1 terms
    b = [Fraction(0)] * (n + 1)
    b[0] = Fraction(1)
    for m in range(1, n + 1):
        s = Fraction(0)
        for j in range(m):
            s += Fraction(math.comb(m + 1, j)) * b[j]
        b[m] = -s / (m + 1)
    return b[n] if n != 1 else Fraction(1, 2)


def right_log_derivative(alg: LieAlgebraSpec, u: Sequence, v: Sequence) -> list:
    """d/dt|_0 of bch(u, t v): the operator ad_u / (1 - e^{-ad_u}) applied to v."""
    acc = [c * Fraction(1) for c in v]
    out = [c * _bernoulli_plus(0) for c in v]
    for n in range(1, alg.step):
        acc = alg.bracket_coeffs(u, acc)
        cn = _bernoulli_plus(n) / math.factorial(n)
        if cn and any(acc):
            out = [o + cn * a for o, a in zip(out, acc)]
    return out


# -- second-kind chart ---------------------------------------------------


class SecondKindChart:
    """Second-kind coordinates, group law, and dilations for one algebra."""

    def __init__(self, alg: LieAlgebraSpec, psi: list, psi_inverse: list):
        self.alg = alg
        self.dim = alg.dim
        self.weights = alg.weights
        self.psi = psi
        self.psi_inverse = psi_inverse
        self._psi_fn = None
        self._psi_inv_fn = None
        self._segment_fn = None
        self._law_fn = None

    # numeric plumbing

    def _compiled(self):
        if self._psi_fn is None:
            self._psi_fn = compile_poly_map(self.psi, self.dim)
            self._psi_inv_fn = compile_poly_map(self.psi_inverse, self.dim)
        return self._psi_fn, self._psi_inv_fn

    @staticmethod
    def _symbolic_point(point) -> bool:
        kinds = {isinstance(c, (int, Fraction)) for c in point}
        if len(kinds) > 1:
            raise ModeMismatch("point mixes exact and float coordinates")
        return kinds.pop()

    def _pair_mode(self, xi, eta) -> bool:
        a, b = self._symbolic_point(xi), self._symbolic_point(eta)
        if a != b:
            raise ModeMismatch("operands use different scalar modes")
        return a

    def identity(self) -> tuple:
        return tuple([0.0] * self.dim)

    def to_first_kind(self, xi: Sequence) -> list:
        if self._symbolic_point(xi):
            return [p.eval_fraction(xi) for p in self.psi]
        fn, _ = self._compiled()
        return list(fn(*map(float, xi)))

    def from_first_kind(self, u: Sequence) -> list:
        if self._symbolic_point(u):
            return [p.eval_fraction(u) for p in self.psi_inverse]
        _, fn = self._compiled()
        return list(fn(*map(float, u)))

    def multiply(self, xi: Sequence, eta: Sequence) -> list:
        """Group product in second-kind coordinates."""
        exact = self._pair_mode(xi, eta)
        u = self.to_first_kind(xi)
        v = self.to_first_kind(eta)
        w = bch_coeffs(self.alg, u, v)
        if exact:
            return [p.eval_fraction(w) for p in self.psi_inverse]
        return self.from_first_kind([float(c) for c in w])

    def inverse(self, xi: Sequence) -> list:
        u = self.to_first_kind(xi)
        return self.from_first_kind([-c for c in u])

    def dilate(self, lam, xi: Sequence) -> list:
        return [c * lam ** w for c, w in zip(xi, self.weights)]

    def conjugate_displacement(self, xi: Sequence, eta: Sequence) -> list:
        """xi^{-1} * eta, the displacement used for Taylor increments."""
        return self.multiply(self.inverse(xi), eta)

    def weighted_norm(self, xi: Sequence) -> float:
        """Layer-weighted homogeneous quasi-norm sum |x_l|^(1/w_l)."""
        return float(sum(abs(float(c)) ** (1.0 / w) for c, w in zip(xi, self.weights)))

    def box_norm(self, xi: Sequence, scales: Sequence[float] | None = None) -> float:
        """max_l (|x_l|/c_l)^(1/w_l); a homogeneous norm for any scales c_l > 0."""
        if scales is None:
            scales = [1.0] * self.dim
        return max(
            (abs(float(c)) / s) ** (1.0 / w) for c, s, w in zip(xi, scales, self.weights)
        )

    def segment_step(self):
        """Compiled map (x, a, b) -> x * exp(a e1 + b e2), exact flow of a segment."""
        if self._segment_fn is None:
            n = self.dim
            U = [p.embed(n + 2, list(range(n))) for p in self.psi]
            V = [Poly.zero(n + 2)] * n
            V[0] = Poly.var(n + 2, n)
            V[1] = Poly.var(n + 2, n + 1)
            Z = bch_coeffs(self.alg, U, V)
            zeta = [q.compose(Z) for q in self.psi_inverse]
            self._segment_fn = compile_poly_map(zeta, n, extra=2)
        return self._segment_fn

    def group_law(self):
        """Compiled full product map on 2N floats (built lazily; O(N^2) polys)."""
        if self._law_fn is None:
            n = self.dim
            U = [p.embed(2 * n, list(range(n))) for p in self.psi]
            V = [p.embed(2 * n, list(range(n, 2 * n))) for p in self.psi]
            Z = bch_coeffs(self.alg, U, V)
            zeta = [q.compose(Z) for q in self.psi_inverse]
            self._law_fn = compile_poly_map(zeta, 2 * n)
        return self._law_fn


def build_chart(alg: LieAlgebraSpec) -> SecondKindChart:
    """Compute psi by one BCH expansion and invert it by back-substitution."""
    n = alg.dim
    A = [Poly.zero(n)] * n
    for j in range(2, n):
        A[j] = Poly.var(n, j)
    B = [Poly.zero(n)] * n
    B[0] = Poly.var(n, 0)
    B[1] = Poly.var(n, 1)
    psi = bch_coeffs(alg, A, B)

    weights = alg.weights
    for j in range(n):
        phi = psi[j] - Poly.var(n, j)
        for i in phi.used_vars():
            if weights[i] >= weights[j]:
                raise TriangularityViolation(
                    f"psi_{j+1} - x_{j+1} depends on x_{i+1} of weight {weights[i]}"
                )

    # back-substitute in increasing weight: x_j = u_j - phi_j(x_<)
    inv: list = [None] * n
    for j in sorted(range(n), key=lambda i: (weights[i], i)):
        phi = psi[j] - Poly.var(n, j)
        if phi.is_zero():
            inv[j] = Poly.var(n, j)
        else:
            repl = [inv[i] if inv[i] is not None else Poly.var(n, i) for i in range(n)]
            inv[j] = Poly.var(n, j) - phi.compose(repl)

    # exact two-sided inverse check
    idvars = [Poly.var(n, i) for i in range(n)]
    for j in range(n):
        if psi[j].compose(inv) != idvars[j] or inv[j].compose(psi) != idvars[j]:
            raise TriangularityViolation(f"psi inversion failed at coordinate {j+1}")

    return SecondKindChart(alg, psi, inv)


def lifted_fields(chart: SecondKindChart) -> tuple[PolyVectorField, PolyVectorField]:
    """Left-invariant fields through e1, e2, as polynomial vector fields.

    For each generator the tangent of tau -> xi * (tau e_j path) is pushed
    through the chart: W = (ad_U / (1 - e^{-ad_U})) e_j with U = psi(xi),
    then D(psi) c = W is solved by weight-ordered forward substitution
    (D(psi) is unipotent lower-triangular in the weight order).
    """
    alg = chart.alg
    n = alg.dim
    weights = alg.weights
    psi = chart.psi
    order = sorted(range(n), key=lambda i: (weights[i], i))

    fields = []
    for gen in (0, 1):
        e = [Poly.zero(n)] * n
        e[gen] = Poly.const(n, 1)
        W = right_log_derivative(alg, psi, e)
        comps: list = [None] * n
        for m in order:
            val = W[m]
            for i in range(n):
                if i == m:
                    continue
                dpsi = psi[m].diff(i)
                if dpsi and comps[i] is not None and comps[i]:
                    val = val - dpsi * comps[i]
                elif dpsi and comps[i] is None:
                    # lower-triangularity must have filled comps[i] already
                    raise FormViolation("chart Jacobian is not triangular in weight order")
            comps[m] = val
        field = PolyVectorField(n, {i: p for i, p in enumerate(comps) if p})
        _check_lift_form(chart, field, gen)
        fields.append(field)
    return fields[0], fields[1]


def _check_lift_form(chart: SecondKindChart, field: PolyVectorField, gen: int):
    n = chart.dim
    k = chart.alg.step // 2
    x1, x2 = Poly.var(n, 0), Poly.var(n, 1)
    radial = (x1 * x1 + x2 * x2) ** (k - 1)
    expected_top = x2 * radial if gen == 0 else -(x1 * radial)
    if field.component(gen) != Poly.const(n, 1):
        raise FormViolation("generator direction coefficient must be 1")
    if field.component(1 - gen):
        raise FormViolation("cross planar coefficient must vanish")
    if field.component(n - 1) != expected_top:
        raise FormViolation("top coefficient is not the surface drift polynomial")
    for i in range(2, n - 1):
        for v in field.component(i).used_vars():
            if v > 1:
                raise FormViolation(f"middle coefficient {i+1} depends on x{v+1}")


def general_lift_derivative(alg: LieAlgebraSpec, x1, x2) -> AlgebraElement:
    """sum_l (1/l! - 1/(l+1)!) ad^l(x1 e1 + x2 e2)(e1), exact.

    Scalars may be Fractions or polynomials; the step-2k layer component of
    the result is x2 (x1^2+x2^2)^{k-1} e_N.
    """
    n = alg.dim
    zero = x1 * 0 + x2 * 0
    v = [zero] * n
    v[0] = x1 + zero
    v[1] = x2 + zero
    e1 = [zero] * n
    e1[0] = zero + 1
    acc = e1
    out = [zero] * n
    for l in range(alg.step):
        c = Fraction(1, math.factorial(l)) - Fraction(1, math.factorial(l + 1))
        if c and any(acc):
            out = [o + c * a for o, a in zip(out, acc)]
        acc = alg.bracket_coeffs(v, acc)
    return AlgebraElement(tuple(out))


def bracket_center_coefficient(k: int, j: int) -> int:
    """Weight of the central direction produced by the mixed ad-word.

    ad^{2j} e1 . ad^{2k-2-2j} e2 ([e2, e1]) lands on this integer multiple
    of e_N; equals 2k C(k-1, j) (2j)! (2k-2-2j)!.
    """
    if not 0 <= j <= k - 1:
        raise IndexOutOfRange(f"need 0 <= j <= k-1, got j={j}, k={k}")
    return 2 * k * math.comb(k - 1, j) * math.factorial(2 * j) * math.factorial(2 * k - 2 - 2 * j)


def left_translation_polys(chart: SecondKindChart, g: Sequence) -> list:
    """The map xi -> g * xi as N exact polynomials (g has rational coords)."""
    n = chart.dim
    gu = [Poly.const(n, c) for c in chart.to_first_kind([Fraction(c) for c in g])]
    xu = chart.psi
    w = bch_coeffs(chart.alg, gu, xu)
    return [q.compose(w) for q in chart.psi_inverse]


def pushforward(polys: list, field: PolyVectorField) -> PolyVectorField:
    """Jacobian of a polynomial map applied to a field's coefficients."""
    n = field.dim
    comps: dict = {}
    for m in range(n):
        acc = Poly.zero(n)
        for i, p in field.components.items():
            d = polys[m].diff(i)
            if d:
                acc = acc + d * p
        if acc:
            comps[m] = acc
    return PolyVectorField(n, comps)

"""Polynomial vector fields and bracket closure of the generating pair.

The surface Im(w) = |z|^{2k}/(2k) carries the fields

    X1 = d/dx1 + x2 (x1^2 + x2^2)^{k-1} d/dt
    X2 = d/dx2 - x1 (x1^2 + x2^2)^{k-1} d/dt

in the global chart (x1, x2, t). Closing {X1, X2} under iterated brackets
with exact rational arithmetic produces a finite-dimensional graded
algebra of step 2k; :func:`generate_algebra` returns its structure
constants together with the realization of each basis element as a
vector field on the surface.

Sign convention throughout: [V, W] = V∘W - W∘V on functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .lie_core import DimensionMismatch, LieAlgebraSpec
from .poly import Poly


class KTooSmall(ValueError):
    def __init__(self, k):
        super().__init__(f"the model surfaces need k >= 2, got {k}")


class ClosureOverflow(RuntimeError):
    """Bracket closure exceeded the free-algebra dimension bound (a bug)."""


@dataclass(frozen=True)
class PolyVectorField:
    """Sparse first-order differential operator sum_i p_i(x) d/dx_i."""

    dim: int
    components: dict  # coordinate index (0-based) -> Poly in `dim` variables

    def component(self, i: int) -> Poly:
        return self.components.get(i, Poly.zero(self.dim))

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        if self.dim != other.dim:
            raise DimensionMismatch(self.dim, other.dim)
        comps = dict(self.components)
        for i, p in other.components.items():
            q = comps.get(i)
            s = p if q is None else q + p
            if s:
                comps[i] = s
            else:
                comps.pop(i, None)
        return PolyVectorField(self.dim, comps)

    def __neg__(self) -> "PolyVectorField":
        return PolyVectorField(self.dim, {i: -p for i, p in self.components.items()})

    def scale(self, c) -> "PolyVectorField":
        comps = {i: p * c for i, p in self.components.items()}
        return PolyVectorField(self.dim, {i: p for i, p in comps.items() if p})

    def apply_to(self, f: Poly) -> Poly:
        """Directional derivative of a polynomial function."""
        out = Poly.zero(self.dim)
        for i, p in self.components.items():
            out = out + p * f.diff(i)
        return out

    def is_zero(self) -> bool:
        return not self.components

    def render(self, names: Sequence[str] | None = None) -> str:
        if names is None:
            names = [f"x{i+1}" for i in range(self.dim)]
        if not self.components:
            return "0"
        parts = []
        for i in sorted(self.components):
            coeff = self.components[i].render(names)
            if coeff == "1":
                parts.append(f"d/d{names[i]}")
            else:
                parts.append(f"({coeff}) d/d{names[i]}")
        return " + ".join(parts)


def generators(k: int) -> tuple[PolyVectorField, PolyVectorField]:
    """The generating pair on the surface, in expanded monomial form."""
    if k < 2:
        raise KTooSmall(k)
    n = 3
    x1, x2 = Poly.var(n, 0), Poly.var(n, 1)
    radial = (x1 * x1 + x2 * x2) ** (k - 1)
    X1 = PolyVectorField(n, {0: Poly.const(n, 1), 2: x2 * radial})
    X2 = PolyVectorField(n, {1: Poly.const(n, 1), 2: -(x1 * radial)})
    return X1, X2


def pvf_bracket(V: PolyVectorField, W: PolyVectorField) -> PolyVectorField:
    if V.dim != W.dim:
        raise DimensionMismatch(V.dim, W.dim)
    comps: dict = {}
    for j, vj in V.components.items():
        for i, wi in W.components.items():
            d = wi.diff(j)
            if d:
                comps[i] = comps.get(i, Poly.zero(V.dim)) + vj * d
    for j, wj in W.components.items():
        for i, vi in V.components.items():
            d = vi.diff(j)
            if d:
                comps[i] = comps.get(i, Poly.zero(V.dim)) - wj * d
    return PolyVectorField(V.dim, {i: p for i, p in comps.items() if p})


def evaluate(V: PolyVectorField, point: Sequence[float]) -> list[float]:
    if len(point) != V.dim:
        raise DimensionMismatch(V.dim, len(point))
    out = [0.0] * V.dim
    for i, p in V.components.items():
        out[i] = p.eval_float(point)
    return out


def mobius(n: int) -> int:
    if n == 1:
        return 1
    m, p, count = n, 2, 0
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return 0
            count += 1
        p += 1
    if m > 1:
        count += 1
    return -1 if count % 2 else 1


def witt_dimension(generators_count: int, degree: int) -> int:
    """Dimension of the degree-d part of the free Lie algebra on g generators."""
    total = 0
    for e in range(1, degree + 1):
        if degree % e == 0:
            total += mobius(e) * generators_count ** (degree // e)
    return total // degree


def free_nilpotent_dimension(generators_count: int, step: int) -> int:
    return sum(witt_dimension(generators_count, d) for d in range(1, step + 1))


class _ExactSpan:
    """Row-reduced span of vector fields, keyed by (component, monomial)."""

    def __init__(self):
        self.pivots: dict = {}  # pivot key -> reduced row (dict key -> Fraction)
        self.order: list = []

    @staticmethod
    def _vectorize(V: PolyVectorField) -> dict:
        row = {}
        for i, p in V.components.items():
            for e, c in p.terms.items():
                row[(i, e)] = c
        return row

    def reduce(self, row: dict) -> dict:
        # pivot rows are kept fully reduced against each other, so one pass
        # over the pivots eliminates every pivot key for good
        row = dict(row)
        for key, pivot_row in self.pivots.items():
            c = row.get(key)
            if c:
                for k2, v2 in pivot_row.items():
                    s = row.get(k2, Fraction(0)) - c * v2
                    if s:
                        row[k2] = s
                    else:
                        row.pop(k2, None)
        return row

    def contains(self, V: PolyVectorField) -> bool:
        return not self.reduce(self._vectorize(V))

    def add(self, V: PolyVectorField) -> bool:
        """Insert if independent; returns True when the span grew."""
        rem = self.reduce(self._vectorize(V))
        if not rem:
            return False
        key = max(rem)  # deterministic pivot choice
        pv = rem[key]
        normalized = {k: c / pv for k, c in rem.items()}
        for other_key, other_row in self.pivots.items():
            c = other_row.get(key)
            if c:
                for k2, v2 in normalized.items():
                    s = other_row.get(k2, Fraction(0)) - c * v2
                    if s:
                        other_row[k2] = s
                    else:
                        other_row.pop(k2, None)
        self.pivots[key] = normalized
        self.order.append(key)
        return True


def _solve_in_basis(basis: list[PolyVectorField], V: PolyVectorField) -> list[Fraction] | None:
    """Exact coordinates of V in span(basis), or None if outside."""
    keys: list = []
    seen = set()
    cols = [_ExactSpan._vectorize(b) for b in basis]
    target = _ExactSpan._vectorize(V)
    for col in cols + [target]:
        for key in col:
            if key not in seen:
                seen.add(key)
                keys.append(key)
    rows = [[col.get(key, Fraction(0)) for col in cols] + [target.get(key, Fraction(0))] for key in keys]
    ncols = len(basis)
    pivots = []
    r = 0
    for c in range(ncols):
        pivot = next((i for i in range(r, len(rows)) if rows[i][c]), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        pv = rows[r][c]
        rows[r] = [v / pv for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c]:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    sol = [Fraction(0)] * ncols
    for row_idx, c in enumerate(pivots):
        sol[c] = rows[row_idx][ncols]
    # consistency: rows below the pivot block must have zero rhs
    for i in range(r, len(rows)):
        if rows[i][ncols]:
            return None
    return sol


def generate_algebra(k: int) -> tuple[LieAlgebraSpec, list[PolyVectorField]]:
    """Close {X1, X2} under brackets and package the structure constants.

    New basis vectors are the raw bracket values, enumerated breadth-first:
    layer 2 is [e2, e1]; layer j+1 collects [b, e1], [b, e2] over the layer-j
    basis b in index order, keeping the exactly independent ones. The single
    top-layer vector is rescaled so that its realization is exactly d/dt,
    which keeps every structure constant an integer.
    """
    if k < 2:
        raise KTooSmall(k)
    step = 2 * k
    X1, X2 = generators(k)
    basis: list[PolyVectorField] = [X1, X2]
    layer_of: list[int] = [1, 1]
    span = _ExactSpan()
    span.add(X1)
    span.add(X2)
    free_bound = free_nilpotent_dimension(2, step)

    layers: list[list[int]] = [[1, 2]]
    current = [0, 1]  # indices into `basis` of the newest layer
    depth = 1
    while depth < step:
        new_indices: list[int] = []
        if depth == 1:
            candidates = [pvf_bracket(basis[1], basis[0])]  # [e2, e1]
        else:
            candidates = []
            for b_idx in current:
                for g_idx in (0, 1):
                    candidates.append(pvf_bracket(basis[b_idx], basis[g_idx]))
        for cand in candidates:
            if cand.is_zero() or span.contains(cand):
                continue
            span.add(cand)
            basis.append(cand)
            layer_of.append(depth + 1)
            new_indices.append(len(basis) - 1)
            if len(basis) > free_bound:
                raise ClosureOverflow(
                    f"closure produced {len(basis)} elements, free bound is {free_bound}"
                )
        if not new_indices:
            break
        layers.append([i + 1 for i in new_indices])
        current = new_indices
        depth += 1

    # normalise the top-layer vector: the step-2k layer is one-dimensional,
    # spanned by a constant multiple of d/dt
    top = basis[-1]
    assert layer_of[-1] == step and len(layers[-1]) == 1
    const = top.component(2).constant_value()
    assert const != 0 and not top.component(0) and not top.component(1)
    basis[-1] = top.scale(Fraction(1, 1) / const)

    N = len(basis)
    constants: dict = {}
    for i in range(N):
        for j in range(i + 1, N):
            br = pvf_bracket(basis[i], basis[j])
            if br.is_zero():
                continue
            coords = _solve_in_basis(basis, br)
            if coords is None:
                raise ClosureOverflow(f"bracket (e{i+1}, e{j+1}) escapes the closed span")
            vec = {m + 1: c for m, c in enumerate(coords) if c}
            if vec:
                constants[(i + 1, j + 1)] = vec

    labels = [f"e{i+1}" for i in range(N)]
    spec = LieAlgebraSpec(labels, layers, constants)
    return spec, basis


def realization_to_json(basis: list[PolyVectorField]) -> list[dict]:
    out = []
    for V in basis:
        comps = []
        for i in sorted(V.components):
            terms = [
                {"exponents": list(e), "c": f"{c.numerator}/{c.denominator}"}
                for e, c in sorted(V.components[i].terms.items())
            ]
            comps.append({"component": i + 1, "terms": terms})
        out.append(comps)
    return out

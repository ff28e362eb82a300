"""Graded nilpotent Lie algebra arithmetic over exact rationals.

A :class:`LieAlgebraSpec` carries a fixed basis e_1..e_N, a grading of the
index set into layers, and sparse structure constants [e_i, e_j] =
sum_m c_{ij}^m e_m with Fraction entries. Construction validates, with no
tolerance, antisymmetry, the Jacobi identity on every basis triple, the
grading constraint [g_a, g_b] ⊆ g_{a+b}, and stratification ([g_1, g_j]
spans g_{j+1}).

Elements are coefficient vectors in the fixed basis. The bracket and the
ad-powers are generic over the scalar ring: Fractions give exact symbolic
results, floats give the numeric mode, and :class:`szegolift.poly.Poly`
coefficients give elements of g tensored with a polynomial ring (used by
the chart construction).

Everything here is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .poly import _as_fraction


class LieAlgebraError(Exception):
    """Base class for structure-constant validation failures."""


class AntisymmetryViolation(LieAlgebraError):
    def __init__(self, i: int, j: int):
        self.i, self.j = i, j
        super().__init__(f"antisymmetry fails for basis pair (e{i}, e{j})")


class JacobiViolation(LieAlgebraError):
    def __init__(self, i: int, j: int, l: int):
        self.i, self.j, self.l = i, j, l
        super().__init__(f"Jacobi identity fails on basis triple (e{i}, e{j}, e{l})")


class GradingViolation(LieAlgebraError):
    def __init__(self, i: int, j: int, reason: str = "bracket leaves its target layer"):
        self.i, self.j = i, j
        super().__init__(f"grading violated at (e{i}, e{j}): {reason}")


class DimensionMismatch(LieAlgebraError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"element has dimension {got}, algebra has {expected}")


class NonpositiveLambda(LieAlgebraError):
    def __init__(self, lam):
        super().__init__(f"dilation parameter must be positive, got {lam}")


@dataclass(frozen=True)
class AlgebraElement:
    """Coefficient vector of an algebra element in the fixed basis."""

    coeffs: tuple

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "AlgebraElement":
        return AlgebraElement(tuple(-a for a in self.coeffs))

    def scale(self, c) -> "AlgebraElement":
        return AlgebraElement(tuple(c * a for a in self.coeffs))

    def is_zero(self) -> bool:
        return not any(self.coeffs)


class LieAlgebraSpec:
    """Validated structure constants plus grading for a stratified algebra."""

    def __init__(self, labels: Sequence[str], layers: Sequence[Sequence[int]], constants):
        # layers use 1-based basis indices, as do the constants keys
        self.dim = sum(len(layer) for layer in layers)
        if len(labels) != self.dim:
            raise ValueError("labels do not match grading size")
        self.labels = tuple(labels)
        self.layers = tuple(tuple(layer) for layer in layers)
        self.step = len(self.layers)
        seen = sorted(i for layer in self.layers for i in layer)
        if seen != list(range(1, self.dim + 1)):
            raise ValueError("grading is not a partition of 1..N")
        w = [0] * (self.dim + 1)
        for depth, layer in enumerate(self.layers, start=1):
            for i in layer:
                w[i] = depth
        self.weights = tuple(w[1:])  # weight of e_(i+1) at position i

        # normalise constants into canonical i<j storage
        table: dict = {}
        for (i, j), terms in constants.items():
            if not (1 <= i <= self.dim and 1 <= j <= self.dim):
                raise ValueError(f"constant index ({i},{j}) out of range")
            vec = {}
            items = terms.items() if isinstance(terms, Mapping) else terms
            for m, c in items:
                c = _as_fraction(c)
                if c:
                    vec[m] = vec.get(m, Fraction(0)) + c
            vec = {m: c for m, c in vec.items() if c}
            if vec:
                table[(i, j)] = vec
        self._raw = table
        self._canon: dict = {}
        for (i, j), vec in table.items():
            if i == j:
                if vec:
                    raise AntisymmetryViolation(i, j)
                continue
            key, sign = ((i, j), 1) if i < j else ((j, i), -1)
            entry = self._canon.setdefault(key, {"src": {}, "vec": None})
            entry["src"][(i, j)] = {m: sign * c for m, c in vec.items()}
        merged = {}
        for (i, j), entry in self._canon.items():
            variants = list(entry["src"].values())
            first = variants[0]
            for other in variants[1:]:
                if other != first:
                    raise AntisymmetryViolation(i, j)
            merged[(i, j)] = first
        self.constants = merged  # (i<j) -> {m: Fraction}

        self._validate_grading()
        self._validate_jacobi()
        self._validate_stratified()

    # -- construction-time checks ---------------------------------------

    def bracket_basis(self, i: int, j: int) -> dict:
        """[e_i, e_j] as a sparse {m: Fraction} map (1-based)."""
        if i == j:
            return {}
        if i < j:
            return self.constants.get((i, j), {})
        return {m: -c for m, c in self.constants.get((j, i), {}).items()}

    def _validate_grading(self):
        for (i, j), vec in self.constants.items():
            a, b = self.weights[i - 1], self.weights[j - 1]
            if a + b > self.step:
                if vec:
                    raise GradingViolation(i, j, "bracket of top layers must vanish")
                continue
            for m in vec:
                if self.weights[m - 1] != a + b:
                    raise GradingViolation(i, j, f"component e{m} sits in layer {self.weights[m-1]}, expected {a+b}")

    def _validate_jacobi(self):
        N = self.dim
        for i in range(1, N + 1):
            for j in range(i + 1, N + 1):
                bij = self.bracket_basis(i, j)
                for l in range(j + 1, N + 1):
                    acc: dict = {}

                    def fold(vec, idx, sign=1):
                        for m, c in vec.items():
                            for n, c2 in self.bracket_basis(m, idx).items():
                                s = acc.get(n, Fraction(0)) + sign * c * c2
                                if s:
                                    acc[n] = s
                                else:
                                    acc.pop(n, None)

                    # [[ei,ej],el] + [[ej,el],ei] + [[el,ei],ej] = 0
                    fold(bij, l)
                    fold(self.bracket_basis(j, l), i)
                    fold(self.bracket_basis(l, i), j)
                    if acc:
                        raise JacobiViolation(i, j, l)

    def _validate_stratified(self):
        for depth in range(1, self.step):
            target = self.layers[depth]
            if not target:
                continue
            span_rows = []
            for a in self.layers[0]:
                for b in self.layers[depth - 1]:
                    vec = self.bracket_basis(a, b)
                    row = [vec.get(m, Fraction(0)) for m in target]
                    if any(row):
                        span_rows.append(row)
            if _rank(span_rows) < len(target):
                raise GradingViolation(depth, depth + 1, "layer-1 brackets do not span the next layer")

    # -- operations -------------------------------------------------------

    def element(self, coeffs: Sequence) -> AlgebraElement:
        if len(coeffs) != self.dim:
            raise DimensionMismatch(self.dim, len(coeffs))
        return AlgebraElement(tuple(coeffs))

    def basis_element(self, i: int) -> AlgebraElement:
        coeffs = [Fraction(0)] * self.dim
        coeffs[i - 1] = Fraction(1)
        return AlgebraElement(tuple(coeffs))

    def zero(self) -> AlgebraElement:
        return AlgebraElement(tuple(Fraction(0) for _ in range(self.dim)))

    def bracket_coeffs(self, x: Sequence, y: Sequence) -> list:
        """[x, y] on raw coefficient sequences; generic over the scalar ring."""
        if len(x) != self.dim or len(y) != self.dim:
            raise DimensionMismatch(self.dim, len(x) if len(x) != self.dim else len(y))
        out = [None] * self.dim
        for (i, j), vec in self.constants.items():
            xi, xj = x[i - 1], x[j - 1]
            yi, yj = y[i - 1], y[j - 1]
            # contribution of c_{ij}^m (x_i y_j - x_j y_i)
            if (xi and yj) or (xj and yi):
                cross = xi * yj - xj * yi
                if cross:
                    for m, c in vec.items():
                        cur = out[m - 1]
                        add = c * cross
                        out[m - 1] = add if cur is None else cur + add
        zero = x[0] * 0  # zero of the scalar ring in play
        return [zero if v is None else v for v in out]

    def bracket(self, x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
        return AlgebraElement(tuple(self.bracket_coeffs(x.coeffs, y.coeffs)))

    def ad_power(self, x: AlgebraElement, m: int, y: AlgebraElement) -> AlgebraElement:
        if m < 0:
            raise ValueError("ad power must be nonnegative")
        out = y
        for _ in range(m):
            out = self.bracket(x, out)
        return out

    def dilation(self, lam, x: AlgebraElement) -> AlgebraElement:
        if not lam > 0:
            raise NonpositiveLambda(lam)
        return AlgebraElement(tuple(c * lam ** self.weights[i] for i, c in enumerate(x.coeffs)))

    def homogeneous_dimension(self) -> int:
        return sum(depth * len(layer) for depth, layer in enumerate(self.layers, start=1))

    def layer_of(self, i: int) -> int:
        return self.weights[i - 1]

    def layer_component(self, x: AlgebraElement, depth: int) -> AlgebraElement:
        coeffs = [c if self.weights[i] == depth else c * 0 for i, c in enumerate(x.coeffs)]
        return AlgebraElement(tuple(coeffs))

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        constants = []
        for (i, j) in sorted(self.constants):
            terms = [
                {"m": m, "c": f"{c.numerator}/{c.denominator}"}
                for m, c in sorted(self.constants[(i, j)].items())
            ]
            constants.append({"i": i, "j": j, "terms": terms})
        return {
            "dim": self.dim,
            "labels": list(self.labels),
            "layers": [list(layer) for layer in self.layers],
            "constants": constants,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "LieAlgebraSpec":
        constants = {
            (row["i"], row["j"]): {t["m"]: Fraction(t["c"]) for t in row["terms"]}
            for row in data["constants"]
        }
        return LieAlgebraSpec(data["labels"], data["layers"], constants)


def new_from_structure_constants(labels, grading, constants) -> LieAlgebraSpec:
    """Validated constructor; raises the specific violation it finds first."""
    return LieAlgebraSpec(labels, grading, constants)


def _rank(rows: list) -> int:
    """Rank of a list of Fraction rows by exact Gaussian elimination."""
    rows = [list(r) for r in rows if any(r)]
    rank = 0
    col = 0
    ncols = len(rows[0]) if rows else 0
    while rank < len(rows) and col < ncols:
        pivot = next((r for r in range(rank, len(rows)) if rows[r][col]), None)
        if pivot is None:
            col += 1
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        pv = rows[rank][col]
        rows[rank] = [c / pv for c in rows[rank]]
        for r in range(len(rows)):
            if r != rank and rows[r][col]:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
        col += 1
    return rank

"""Sparse multivariate polynomial arithmetic over exact rationals.

Every symbolic layer of the package (bracket closure of the generating
vector fields, Baker-Campbell-Hausdorff products, second-kind charts,
lifted left-invariant fields) runs on these polynomials, so that integer
structure constants and series coefficients like 1/12 compare exactly.

A polynomial in ``n`` variables is a map from exponent tuples of length
``n`` to nonzero ``Fraction`` coefficients. Instances are immutable;
arithmetic returns fresh objects. Coefficients entering from outside may
be ``int`` or ``Fraction`` and are normalised on construction.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

Exponent = tuple  # tuple[int, ...]


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, str):
        return Fraction(c)
    raise TypeError(f"not an exact scalar: {c!r}")


class Poly:
    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[Exponent, Fraction] | None = None):
        self.nvars = nvars
        clean = {}
        if terms:
            for e, c in terms.items():
                c = _as_fraction(c)
                if c:
                    if len(e) != nvars:
                        raise ValueError("exponent length does not match nvars")
                    clean[tuple(e)] = c
        self.terms = clean

    # -- constructors -------------------------------------------------

    @staticmethod
    def zero(nvars: int) -> "Poly":
        return Poly(nvars)

    @staticmethod
    def const(nvars: int, c) -> "Poly":
        c = _as_fraction(c)
        if not c:
            return Poly(nvars)
        return Poly(nvars, {tuple([0] * nvars): c})

    @staticmethod
    def var(nvars: int, i: int, power: int = 1, coeff=1) -> "Poly":
        e = [0] * nvars
        e[i] = power
        return Poly(nvars, {tuple(e): _as_fraction(coeff)})

    # -- predicates ----------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and not any(next(iter(self.terms))))

    def constant_value(self) -> Fraction:
        return self.terms.get(tuple([0] * self.nvars), Fraction(0))

    def __eq__(self, other) -> bool:
        if isinstance(other, Poly):
            return self.nvars == other.nvars and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.is_constant() and self.constant_value() == other
        return NotImplemented

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    # -- ring operations -----------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Poly.const(self.nvars, other)
        if not isinstance(other, Poly):
            return NotImplemented
        terms = dict(self.terms)
        for e, c in other.terms.items():
            s = terms.get(e, 0) + c
            if s:
                terms[e] = s
            else:
                terms.pop(e, None)
        out = Poly.__new__(Poly)
        out.nvars = self.nvars
        out.terms = terms
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Poly.__new__(Poly)
        out.nvars = self.nvars
        out.terms = {e: -c for e, c in self.terms.items()}
        return out

    def __sub__(self, other):
        return self + (-other if isinstance(other, Poly) else Poly.const(self.nvars, -_as_fraction(other)))

    def __rsub__(self, other):
        return Poly.const(self.nvars, other) - self

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            c0 = _as_fraction(other)
            if not c0:
                return Poly(self.nvars)
            out = Poly.__new__(Poly)
            out.nvars = self.nvars
            out.terms = {e: c * c0 for e, c in self.terms.items()}
            return out
        if not isinstance(other, Poly):
            return NotImplemented
        terms: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                s = terms.get(e, 0) + c1 * c2
                if s:
                    terms[e] = s
                else:
                    terms.pop(e, None)
        out = Poly.__new__(Poly)
        out.nvars = self.nvars
        out.terms = terms
        return out

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power")
        out = Poly.const(self.nvars, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    # -- calculus and structure -----------------------------------------

    def diff(self, i: int) -> "Poly":
        terms = {}
        for e, c in self.terms.items():
            if e[i]:
                e2 = list(e)
                e2[i] -= 1
                terms[tuple(e2)] = c * e[i]
        return Poly(self.nvars, terms)

    def uses_var(self, i: int) -> bool:
        return any(e[i] for e in self.terms)

    def used_vars(self) -> set:
        out = set()
        for e in self.terms:
            for i, p in enumerate(e):
                if p:
                    out.add(i)
        return out

    def total_degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def weighted_degree(self, weights: Sequence[int]) -> int:
        return max((sum(p * w for p, w in zip(e, weights)) for e in self.terms), default=0)

    def coefficient_in_var(self, i: int, power: int) -> "Poly":
        """Collect terms with exponent ``power`` in variable ``i``, dropping that variable."""
        terms = {}
        for e, c in self.terms.items():
            if e[i] == power:
                e2 = list(e)
                e2[i] = 0
                terms[tuple(e2)] = terms.get(tuple(e2), 0) + c
        return Poly(self.nvars, terms)

    # -- substitution / evaluation ----------------------------------------

    def compose(self, repl: Sequence["Poly"]) -> "Poly":
        """Substitute repl[i] for variable i. All repl share one target ring."""
        if len(repl) != self.nvars:
            raise ValueError("need one replacement per variable")
        tgt = repl[0].nvars if repl else self.nvars
        cache: list[dict[int, Poly]] = [dict() for _ in range(self.nvars)]

        def power(i: int, p: int) -> Poly:
            if p == 0:
                return Poly.const(tgt, 1)
            hit = cache[i].get(p)
            if hit is None:
                hit = power(i, p - 1) * repl[i]
                cache[i][p] = hit
            return hit

        acc = Poly(tgt)
        for e, c in self.terms.items():
            term = Poly.const(tgt, c)
            for i, p in enumerate(e):
                if p:
                    term = term * power(i, p)
            acc = acc + term
        return acc

    def embed(self, new_nvars: int, var_map: Sequence[int]) -> "Poly":
        """Re-index variables into a larger ring: old var i becomes var_map[i]."""
        terms = {}
        for e, c in self.terms.items():
            e2 = [0] * new_nvars
            for i, p in enumerate(e):
                if p:
                    e2[var_map[i]] += p
            terms[tuple(e2)] = terms.get(tuple(e2), 0) + c
        return Poly(new_nvars, terms)

    def eval_float(self, point: Sequence[float]) -> float:
        acc = 0.0
        for e, c in self.terms.items():
            v = float(c)
            for i, p in enumerate(e):
                if p:
                    v *= point[i] ** p
            acc += v
        return acc

    def eval_fraction(self, point: Sequence) -> Fraction:
        acc = Fraction(0)
        for e, c in self.terms.items():
            v = c
            for i, p in enumerate(e):
                if p:
                    v *= _as_fraction(point[i]) ** p
            acc += v
        return acc

    def to_source(self, names: Sequence[str]) -> str:
        """Render as a Python expression over the given variable names."""
        if not self.terms:
            return "0.0"
        parts = []
        for e, c in sorted(self.terms.items()):
            factors = []
            if c.denominator == 1:
                factors.append(f"{c.numerator}.0" if abs(c.numerator) < 10**15 else f"float({c.numerator})")
            else:
                factors.append(f"({c.numerator}/{c.denominator})")
            for i, p in enumerate(e):
                if p == 1:
                    factors.append(names[i])
                elif p > 1:
                    factors.append(f"{names[i]}**{p}")
            parts.append("*".join(factors))
        return " + ".join(parts).replace("+ -", "- ")

    # -- rendering ---------------------------------------------------------

    def render(self, names: Sequence[str] | None = None) -> str:
        if not self.terms:
            return "0"
        if names is None:
            names = [f"x{i+1}" for i in range(self.nvars)]
        out = []
        for e, c in sorted(self.terms.items(), key=lambda t: (sum(t[0]), t[0])):
            mono = "*".join(
                f"{names[i]}^{p}" if p > 1 else names[i] for i, p in enumerate(e) if p
            )
            if not mono:
                out.append(str(c))
            elif c == 1:
                out.append(mono)
            elif c == -1:
                out.append(f"-{mono}")
            else:
                out.append(f"{c}*{mono}")
        s = " + ".join(out)
        return s.replace("+ -", "- ")

    def __repr__(self):
        return f"Poly({self.render()})"


def compile_poly_map(polys: Sequence[Poly], nvars: int, extra: int = 0) -> Callable:
    """Compile a tuple of polynomials to a fast numeric function.

    The returned callable takes ``nvars`` positional floats plus ``extra``
    trailing floats (variables nvars..nvars+extra-1) and returns a tuple.
    """
    names = [f"v{i}" for i in range(nvars + extra)]
    body = ", ".join(p.to_source(names) for p in polys)
    src = f"def _f({', '.join(names)}):\n    return ({body}{',' if len(polys) == 1 else ''})\n"
    ns: dict = {}
    exec(src, ns)  # noqa: S102 - codegen of our own polynomials
    return ns["_f"]

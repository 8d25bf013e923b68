"""Exact differential polynomials in the jet variables of two fields.

The two fields are ``F`` (the dual coordinate ``f``) and ``A`` (its partner ``a``).
A jet variable ``F[p,q]`` stands for ``d_x^p d_y^q f``; a negative order is
a power of the nonlocal antiderivative on that axis.  ``d_x^{-1} d_x`` is
the identity (mean-free convention), so one integer per axis suffices.

Text form: ``coef * F[p,q] * A[r,s] + coef * ...`` with rational ``coef``.
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import cmp_to_key, lru_cache
import re

from .errors import JetOrderError, NonlocalInputError
from .spectral import (AREA, PAPER_CONSTANT, SpectralField, antiderive, derive)

FIELDS = ("F", "A")
_FIELD_INDEX = {"F": 0, "A": 1}
DEFAULT_CAP = 8


@dataclass(frozen=True)
class JetVariable:
    field: str
    x: int = 0
    y: int = 0

    def __post_init__(self):
        if self.field not in _FIELD_INDEX:
            raise ValueError(f"unknown field {self.field!r}")

    @property
    def key(self):
        return (_FIELD_INDEX[self.field], self.x, self.y)

    @property
    def order(self):
        return abs(self.x) + abs(self.y)

    @property
    def is_local(self):
        return self.x >= 0 and self.y >= 0

    def shifted(self, axis, n=1):
        if axis == "x":
            return JetVariable(self.field, self.x + n, self.y)
        if axis == "y":
            return JetVariable(self.field, self.x, self.y + n)
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")

    def __str__(self):
        return f"{self.field}[{self.x},{self.y}]"


def _sorted_monomial(variables):
    return tuple(sorted(variables, key=lambda v: v.key))


def _degrevlex_cmp(m1, m2):
    """Graded reverse lexicographic comparison; variables ordered by key."""
    if len(m1) != len(m2):
        return -1 if len(m1) > len(m2) else 1
    e1, e2 = {}, {}
    for v in m1:
        e1[v.key] = e1.get(v.key, 0) + 1
    for v in m2:
        e2[v.key] = e2.get(v.key, 0) + 1
    for k in sorted(set(e1) | set(e2), reverse=True):
        d = e1.get(k, 0) - e2.get(k, 0)
        if d:
            return -1 if d < 0 else 1
    return 0


_MONOMIAL_ORDER = cmp_to_key(_degrevlex_cmp)


class DiffPoly:
    """Immutable polynomial with exact rational coefficients in jet variables."""

    __slots__ = ("_terms", "cap", "_hash")

    def __init__(self, terms=None, cap=DEFAULT_CAP):
        self.cap = cap
        acc = {}
        for mono, coef in (terms or {}).items():
            mono = _sorted_monomial(mono)
            for v in mono:
                if v.order > cap:
                    raise JetOrderError(" * ".join(map(str, mono)), cap)
            acc[mono] = acc.get(mono, Fraction(0)) + Fraction(coef)
        self._terms = {m: c for m, c in sorted(acc.items(), key=lambda it: _MONOMIAL_ORDER(it[0]))
                       if c != 0}
        self._hash = None

    @classmethod
    def constant(cls, value, cap=DEFAULT_CAP):
        return cls({(): Fraction(value)}, cap)

    @property
    def terms(self):
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def variables(self):
        return sorted({v for m in self._terms for v in m}, key=lambda v: v.key)

    def is_zero(self):
        return not self._terms

    def is_local(self):
        return all(v.is_local for m in self._terms for v in m)

    def degree(self):
        return max((len(m) for m in self._terms), default=0)

    # algebra ------------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, DiffPoly):
            return other
        return DiffPoly.constant(Fraction(other), self.cap)

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self._terms)
        for m, c in other._terms.items():
            terms[m] = terms.get(m, Fraction(0)) + c
        return DiffPoly(terms, max(self.cap, other.cap))

    __radd__ = __add__

    def __neg__(self):
        return DiffPoly({m: -c for m, c in self._terms.items()}, self.cap)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, DiffPoly):
            k = Fraction(other)
            return DiffPoly({m: c * k for m, c in self._terms.items()}, self.cap)
        terms = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _sorted_monomial(m1 + m2)
                terms[m] = terms.get(m, Fraction(0)) + c1 * c2
        return DiffPoly(terms, max(self.cap, other.cap))

    __rmul__ = __mul__

    def __pow__(self, n):
        out = DiffPoly.constant(1, self.cap)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, DiffPoly):
            try:
                other = self._coerce(other)
            except (TypeError, ValueError):
                return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._terms.items()))
        return self._hash

    # text ---------------------------------------------------------------

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for mono, coef in self._terms.items():
            parts.append(" * ".join([str(coef)] + [str(v) for v in mono]))
        return " + ".join(parts)

    def __repr__(self):
        return f"DiffPoly({str(self)!r})"

    @classmethod
    def parse(cls, text, cap=DEFAULT_CAP):
        text = text.strip()
        if text == "0":
            return cls({}, cap)
        terms = {}
        for chunk in text.split(" + "):
            factors = [tok.strip() for tok in chunk.split("*")]
            coef = Fraction(factors[0])
            mono = []
            for tok in factors[1:]:
                m = _VAR_RE.fullmatch(tok)
                if m is None:
                    raise ValueError(f"bad jet variable {tok!r} in {chunk!r}")
                mono.append(JetVariable(m.group(1), int(m.group(2)), int(m.group(3))))
            mono = _sorted_monomial(mono)
            terms[mono] = terms.get(mono, Fraction(0)) + coef
        return cls(terms, cap)


_VAR_RE = re.compile(r"([FA])\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\]")


def var(field, x=0, y=0, cap=DEFAULT_CAP):
    return DiffPoly({(JetVariable(field, x, y),): 1}, cap)


def partial(p, v):
    """Ordinary partial derivative with respect to one jet variable."""
    terms = {}
    for mono, coef in p.items():
        k = mono.count(v)
        if k:
            rest = list(mono)
            rest.remove(v)
            rest = tuple(rest)
            terms[rest] = terms.get(rest, Fraction(0)) + k * coef
    return DiffPoly(terms, p.cap)


def total_derivative(p, axis):
    """Leibniz rule: raise the ``axis`` order of one factor at a time."""
    terms = {}
    for mono, coef in p.items():
        for i, v in enumerate(mono):
            if i and mono[i - 1] == v:
                continue
            k = mono.count(v)
            w = v.shifted(axis)
            if w.order > p.cap:
                raise JetOrderError(" * ".join(map(str, mono)), p.cap)
            new = _sorted_monomial(mono[:i] + (w,) + mono[i + 1:])
            terms[new] = terms.get(new, Fraction(0)) + k * coef
    return DiffPoly(terms, p.cap)


def _antiderivative(p, axis):
    """Symbolic d_axis^{-1}; exact only on linear polynomials.

    Constants map to zero (mean-free convention).  Nonlinear terms have no
    representative among jet variables.
    """
    terms = {}
    for mono, coef in p.items():
        if len(mono) == 0:
            continue
        if len(mono) > 1:
            raise NonlocalInputError(
                f"d{axis}^-1 of the nonlinear term {' * '.join(map(str, mono))} "
                "is not a jet polynomial")
        w = mono[0].shifted(axis, -1)
        if w.order > p.cap:
            raise JetOrderError(str(w), p.cap)
        terms[(w,)] = terms.get((w,), Fraction(0)) + coef
    return DiffPoly(terms, p.cap)


def _apply_orders(p, px, py):
    for axis, n in (("x", px), ("y", py)):
        step = total_derivative if n > 0 else _antiderivative
        for _ in range(abs(n)):
            p = step(p, axis)
    return p


def variational_derivative(h, field):
    """Euler operator: sum over jet variables u[p,q] of (-D)^{(p,q)} dh/du[p,q].

    Negative orders use the adjoint ``(d^{-1})^* = -d^{-1}``, which gives the
    ``- d_x^{-1}(h_{d_x^{-1} a})`` terms of the usual formula.
    """
    if field not in _FIELD_INDEX:
        raise ValueError(f"unknown field {field!r}")
    out = DiffPoly({}, h.cap)
    for v in h.variables():
        if v.field != field:
            continue
        term = _apply_orders(partial(h, v), v.x, v.y)
        out = out + (term if (v.x + v.y) % 2 == 0 else -term)
    return out


# integration by parts normal form ---------------------------------------


def _component_key(mono):
    nf = sum(1 for v in mono if v.field == "F")
    return (nf, len(mono) - nf, sum(v.x for v in mono), sum(v.y for v in mono))


def _orders_multisets(count, X, Y, lo=(0, 0)):
    """Non-decreasing tuples of ``count`` (x, y) pairs summing to (X, Y)."""
    if count == 0:
        if X == 0 and Y == 0:
            yield ()
        return
    for x in range(lo[0], X + 1):
        for y in range(lo[1] if x == lo[0] else 0, Y + 1):
            for rest in _orders_multisets(count - 1, X - x, Y - y, (x, y)):
                yield ((x, y),) + rest


def _component_monomials(nf, na, X, Y):
    out = []
    for xf in range(X + 1):
        for yf in range(Y + 1):
            for fo in _orders_multisets(nf, xf, yf):
                for ao in _orders_multisets(na, X - xf, Y - yf):
                    mono = [JetVariable("F", x, y) for x, y in fo]
                    mono += [JetVariable("A", x, y) for x, y in ao]
                    out.append(_sorted_monomial(mono))
    return out


def _lead_key(mono):
    return tuple(v.key for v in mono)


@lru_cache(maxsize=None)
def _divergence_basis(key, cap):
    """Reduced echelon basis of D_x and D_y images inside one component."""
    nf, na, X, Y = key
    rows = []
    for axis, (sx, sy) in (("x", (X - 1, Y)), ("y", (X, Y - 1))):
        if sx < 0 or sy < 0:
            continue
        for mono in _component_monomials(nf, na, sx, sy):
            img = total_derivative(DiffPoly({mono: 1}, cap + 1), axis)
            rows.append(dict(img.items()))
    pivots = []
    for row in rows:
        row = dict(row)
        for piv, prow in pivots:
            c = row.get(piv)
            if c:
                for m, v in prow.items():
                    row[m] = row.get(m, Fraction(0)) - c * v
        row = {m: v for m, v in row.items() if v != 0}
        if not row:
            continue
        lead = max(row, key=_lead_key)
        inv = 1 / row[lead]
        row = {m: v * inv for m, v in row.items()}
        new_pivots = []
        for piv, prow in pivots:
            c = prow.get(lead)
            if c:
                prow = {m: prow.get(m, Fraction(0)) - c * row.get(m, Fraction(0))
                        for m in set(prow) | set(row)}
                prow = {m: v for m, v in prow.items() if v != 0}
            new_pivots.append((piv, prow))
        pivots = new_pivots + [(lead, row)]
    return tuple((piv, tuple(prow.items())) for piv, prow in pivots)


def ibp_normal_form(p):
    """Canonical representative of ``p`` modulo total x- and y-derivatives.

    Two local polynomials define the same functional on the torus exactly
    when their normal forms coincide.
    """
    if not p.is_local():
        raise NonlocalInputError("integration-by-parts normal form needs a local polynomial")
    groups = {}
    for mono, coef in p.items():
        groups.setdefault(_component_key(mono), {})[mono] = coef
    out = {}
    for key, comp in groups.items():
        if key[0] + key[1] > 0 and key[2] + key[3] > 0:
            for piv, prow in _divergence_basis(key, p.cap):
                c = comp.get(piv)
                if c:
                    for m, v in prow:
                        comp[m] = comp.get(m, Fraction(0)) - c * v
            comp = {m: v for m, v in comp.items() if v != 0}
        out.update(comp)
    return DiffPoly(out, p.cap)


# numeric bridge ---------------------------------------------------------


def _variable_field(v, assignment, convention, cache):
    if v in cache:
        return cache[v]
    phi = assignment[v.field]
    if v.x > 0:
        phi = derive(phi, "x", v.x)
    if v.y > 0:
        phi = derive(phi, "y", v.y)
    for _ in range(-v.x):
        phi = antiderive(phi, "x", convention)
    for _ in range(-v.y):
        phi = antiderive(phi, "y", convention)
    cache[v] = phi
    return phi


def evaluate(p, assignment, convention=PAPER_CONSTANT):
    """Evaluate ``p`` pointwise with spectral derivatives and dealiased products."""
    missing = {v.field for v in p.variables()} - set(assignment)
    if missing:
        raise KeyError(f"no field assigned for {sorted(missing)}")
    ref = next(iter(assignment.values()))
    total = SpectralField.zeros(ref.nx, ref.ny)
    cache = {}
    for mono, coef in p.items():
        if not mono:
            total = total + float(coef)
            continue
        term = _variable_field(mono[0], assignment, convention, cache)
        for v in mono[1:]:
            term = term * _variable_field(v, assignment, convention, cache)
        total = total + term * float(coef)
    return total


def integrate_functional(p, assignment, convention=PAPER_CONSTANT):
    """Integral over the torus of ``p`` evaluated on the assigned fields."""
    return float(AREA * evaluate(p, assignment, convention).mean())


F = var("F")
A = var("A")

__all__ = [
    "A", "DEFAULT_CAP", "DiffPoly", "F", "FIELDS", "JetVariable", "evaluate",
    "ibp_normal_form", "integrate_functional", "partial", "total_derivative",
    "var", "variational_derivative",
]

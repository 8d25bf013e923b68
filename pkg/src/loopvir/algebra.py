"""The looped cotangent Virasoro algebra and its regular dual.

Elements are ``(f, a, alpha1, alpha2)``: a vector-field slot ``f``, a
quadratic-density slot ``a`` and two central constants.  Dual points are
``(g, b, c1, c2)``; the pairing is cross-wise, ``int (f b + g a) + alpha.c``.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import GridMismatchError, StructureError
from .spectral import SpectralField, derive, inner, norm, random_field, safe_grid


@dataclass(frozen=True)
class AlgebraElement:
    f: SpectralField
    a: SpectralField
    alpha1: float = 0.0
    alpha2: float = 0.0

    def __post_init__(self):
        if self.f.shape != self.a.shape:
            raise GridMismatchError(f"slots on grids {self.f.shape} and {self.a.shape}")

    @property
    def shape(self):
        return self.f.shape

    def __add__(self, other):
        return AlgebraElement(self.f + other.f, self.a + other.a,
                              self.alpha1 + other.alpha1, self.alpha2 + other.alpha2)

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, s):
        return AlgebraElement(self.f * s, self.a * s, self.alpha1 * s, self.alpha2 * s)

    __rmul__ = __mul__

    def norm(self):
        return float(np.sqrt(norm(self.f) ** 2 + norm(self.a) ** 2
                             + self.alpha1**2 + self.alpha2**2))

    def band(self):
        return max(*self.f.band(), *self.a.band())

    def resample(self, n):
        return AlgebraElement(self.f.resample(n), self.a.resample(n), self.alpha1, self.alpha2)

    @classmethod
    def zero(cls, n):
        z = SpectralField.zeros(n)
        return cls(z, z)

    @classmethod
    def random(cls, n, seed, band=2, stream=(), with_center=True):
        f = random_field(n, seed, band, stream=(*stream, 0))
        a = random_field(n, seed, band, stream=(*stream, 1))
        if not with_center:
            return cls(f, a)
        c = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream, 2])))
        al = c.standard_normal(2)
        return cls(f, a, float(al[0]), float(al[1]))


@dataclass(frozen=True)
class DualPoint:
    g: SpectralField
    b: SpectralField
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        if self.g.shape != self.b.shape:
            raise GridMismatchError(f"slots on grids {self.g.shape} and {self.b.shape}")

    @property
    def shape(self):
        return self.g.shape

    def __add__(self, other):
        return DualPoint(self.g + other.g, self.b + other.b, self.c1 + other.c1, self.c2 + other.c2)

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, s):
        return DualPoint(self.g * s, self.b * s, self.c1 * s, self.c2 * s)

    __rmul__ = __mul__

    def norm(self):
        return float(np.sqrt(norm(self.g) ** 2 + norm(self.b) ** 2 + self.c1**2 + self.c2**2))

    def band(self):
        return max(*self.g.band(), *self.b.band())

    def resample(self, n):
        return DualPoint(self.g.resample(n), self.b.resample(n), self.c1, self.c2)

    @classmethod
    def zero(cls, n):
        z = SpectralField.zeros(n)
        return cls(z, z)

    @classmethod
    def random(cls, n, seed, band=2, stream=(), with_charges=True):
        X = AlgebraElement.random(n, seed, band, stream, with_center=with_charges)
        return cls(X.f, X.a, X.alpha1, X.alpha2)


def _dx(phi, k=1):
    return derive(phi, "x", k)


def _dy(phi):
    return derive(phi, "y", 1)


def _same_grid(*objs):
    shapes = {o.shape for o in objs}
    if len(shapes) > 1:
        raise GridMismatchError(f"operands on different grids: {sorted(shapes)}")


def gf_cocycle(X, Y):
    """Gelfand-Fuchs cocycle: integral of f * g_xxx."""
    return inner(X.f, _dx(Y.f, 3))


def loop_cocycle(X, Y):
    """Second cocycle: integral of f b_y - g a_y."""
    return inner(X.f, _dy(Y.a)) - inner(Y.f, _dy(X.a))


def bracket(X, Y):
    """Commutator in the algebra; incoming central constants do not contribute."""
    _same_grid(X, Y)
    f, a, g, b = X.f, X.a, Y.f, Y.a
    first = f * _dx(g) - _dx(f) * g
    second = f * _dx(b) + 2.0 * (_dx(f) * b) - g * _dx(a) - 2.0 * (_dx(g) * a)
    return AlgebraElement(first, second, gf_cocycle(X, Y), loop_cocycle(X, Y))


def pair(X, m):
    _same_grid(X, m)
    return inner(X.f, m.b) + inner(m.g, X.a) + X.alpha1 * m.c1 + X.alpha2 * m.c2


def coad(X, m):
    """Coadjoint action of X on a regular dual point; output charges are zero."""
    _same_grid(X, m)
    f, a, g, b = X.f, X.a, m.g, m.b
    first = f * _dx(g) - _dx(f) * g + m.c2 * _dy(f)
    second = (f * _dx(b) + 2.0 * (_dx(f) * b) - _dx(a) * g - 2.0 * (a * _dx(g))
              + m.c1 * _dx(f, 3) + m.c2 * _dy(a))
    return DualPoint(first, second, 0.0, 0.0)


def _padded(objs, depth):
    """Resample every operand onto a grid where ``depth`` nested products are exact."""
    total = sum(o.band() for o in objs) if depth else 0
    n = safe_grid(total, objs[0].shape[0])
    return [o.resample(n) for o in objs]


def relative(defect, *norms):
    return float(defect) / (1.0 + max(norms, default=0.0))


def coad_defect(X, m, Y, sigma=None, exact=True):
    """|<Y, coad(X, m)> - sigma <[X, Y], m>| relative to the input norms."""
    if sigma is None:
        sigma = coad_sign()
    if exact:
        X, m, Y = _padded([X, m, Y], 1)
    lhs = pair(Y, coad(X, m))
    rhs = pair(bracket(X, Y), m)
    return relative(abs(lhs - sigma * rhs), X.norm(), Y.norm(), m.norm())


@lru_cache(maxsize=None)
def coad_sign(n=16, band=3, trials=3, tol=1e-9):
    """The sign relating the coadjoint action to the transposed bracket.

    Determined once from random inputs; raises :class:`StructureError`
    when neither sign makes the defect vanish.
    """
    for sigma in (1, -1):
        ok = True
        for t in range(trials):
            X = AlgebraElement.random(n, 7000 + t, band, stream=(0,))
            Y = AlgebraElement.random(n, 7000 + t, band, stream=(1,))
            m = DualPoint.random(n, 7000 + t, band, stream=(2,))
            if coad_defect(X, m, Y, sigma=sigma) > tol:
                ok = False
                break
        if ok:
            return sigma
    raise StructureError("coadjoint action matches neither sign of the transposed bracket")


def jacobi_defect(X, Y, Z, exact=True):
    """Norm of the cyclic sum of nested brackets, relative to the input norms."""
    _same_grid(X, Y, Z)
    if exact:
        X, Y, Z = _padded([X, Y, Z], 2)
    J = bracket(bracket(X, Y), Z) + bracket(bracket(Y, Z), X) + bracket(bracket(Z, X), Y)
    return relative(J.norm(), X.norm(), Y.norm(), Z.norm())


_COCYCLES = {"GF": gf_cocycle, "loop": loop_cocycle}


def cocycle_defect(which, X, Y, Z, exact=True):
    """|w([X,Y],Z) + w([Y,Z],X) + w([Z,X],Y)| relative to the input norms."""
    w = _COCYCLES[which]
    _same_grid(X, Y, Z)
    if exact:
        X, Y, Z = _padded([X, Y, Z], 1)
    s = w(bracket(X, Y), Z) + w(bracket(Y, Z), X) + w(bracket(Z, X), Y)
    return relative(abs(s), X.norm(), Y.norm(), Z.norm())

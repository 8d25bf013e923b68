"""Poisson brackets on the regular dual and the Lenard-Magri recursion.

A point of the phase space is a :class:`~loopvir.algebra.DualPoint`
``m = (f, a, c1, c2)``.  The differential of a functional is the algebra
element ``(delta_a H, delta_f H)``; its Lie-Poisson Hamiltonian field is
the coadjoint action ``ad*_{dH} m`` and its field for the constant bracket
frozen at ``m0 = (1, 1, c1', c)`` is ``ad*_{dH} m0``.  With the
sign ``<Y, ad*_X m> = -<[X, Y], m>`` both brackets satisfy
``{F, G} = dF[X_G]``.
"""
from dataclasses import dataclass
import math

import numpy as np

from .algebra import AlgebraElement, DualPoint, bracket, coad, pair, relative
from .errors import AccuracyError
from .jet import DiffPoly, evaluate, variational_derivative
from .spectral import (AREA, MEAN_FREE, PAPER_CONSTANT, NonlocalConvention, SpectralField, antiderive,
                       derive, inner, lambda_apply, lambda_invert, norm, random_field,
                       safe_grid)

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class FrozenPoint:
    """The dual point ``(1, 1, c1, c)`` defining the constant bracket."""

    c: float = SQRT2
    c1: float = 0.0

    def dual(self, n, ny=None):
        one = SpectralField.constant(1.0, n, ny)
        return DualPoint(one, one, self.c1, self.c)


@dataclass(frozen=True)
class GradientPair:
    """``(delta_a H, delta_f H)``, the differential as an algebra element."""

    da: SpectralField
    df: SpectralField

    def element(self):
        return AlgebraElement(self.da, self.df)

    def norm(self):
        return math.hypot(norm(self.da), norm(self.df))

    def __add__(self, other):
        return GradientPair(self.da + other.da, self.df + other.df)

    def __sub__(self, other):
        return GradientPair(self.da - other.da, self.df - other.df)

    def resample(self, n):
        return GradientPair(self.da.resample(n), self.df.resample(n))


@dataclass(frozen=True)
class TangentField:
    f_t: SpectralField
    a_t: SpectralField

    def norm(self):
        return math.hypot(norm(self.f_t), norm(self.a_t))

    def __add__(self, other):
        return TangentField(self.f_t + other.f_t, self.a_t + other.a_t)

    def __sub__(self, other):
        return TangentField(self.f_t - other.f_t, self.a_t - other.a_t)

    def __mul__(self, s):
        return TangentField(self.f_t * s, self.a_t * s)

    __rmul__ = __mul__

    def as_dual(self):
        return DualPoint(self.f_t, self.a_t)


def tangent_defect(V, W):
    """||V - W|| relative to the larger of the two norms."""
    return relative((V - W).norm(), V.norm(), W.norm())


def directional(grad, V):
    """dH[V] = int(delta_f H * f_t + delta_a H * a_t)."""
    return inner(grad.df, V.f_t) + inner(grad.da, V.a_t)


@dataclass(frozen=True)
class Functional:
    """A Hamiltonian functional on the regular dual.

    ``gradient(m)`` returns a :class:`GradientPair`, ``value(m)`` a float.
    ``integrand`` is kept when the functional comes from a jet polynomial.
    """

    name: str
    gradient: object
    value: object
    integrand: DiffPoly = None

    def __add__(self, other):
        return Functional(
            f"{self.name}+{other.name}",
            lambda m: self.gradient(m) + other.gradient(m),
            lambda m: self.value(m) + other.value(m),
            None if self.integrand is None or other.integrand is None
            else self.integrand + other.integrand)


def check_gradient(H, m, seed=0, eps=1e-5, directions=2):
    """Largest relative mismatch between central differences of H.value and dH[phi]."""
    grad = H.gradient(m)
    worst = 0.0
    n = m.shape[0]
    band = max(1, min(2, (n - 1) // 6))
    for i in range(directions):
        phi = TangentField(random_field(n, seed, band, stream=(i, 0)),
                           random_field(n, seed, band, stream=(i, 1)))
        plus = H.value(m + phi.as_dual() * eps)
        minus = H.value(m - phi.as_dual() * eps)
        fd = (plus - minus) / (2 * eps)
        exact = directional(grad, phi)
        worst = max(worst, abs(fd - exact) / (1.0 + abs(exact)))
    return worst


def _validation_point(band, degree, n=16):
    n = safe_grid(band * max(degree, 1), n)
    return DualPoint(random_field(n, 12345, band, stream=(0,)) + 0.3,
                     random_field(n, 12345, band, stream=(1,)) - 0.2, 0.7, -0.4)


def from_integrand(h, name="H", convention=MEAN_FREE, validate=True, tol=1e-6):
    """Functional ``int h dxdy`` with gradient from the Euler operator."""
    dA = variational_derivative(h, "A")
    dF = variational_derivative(h, "F")

    def assign(m):
        return {"F": m.g, "A": m.b}

    def gradient(m):
        return GradientPair(evaluate(dA, assign(m), convention),
                            evaluate(dF, assign(m), convention))

    def value(m):
        return AREA * evaluate(h, assign(m), convention).mean()

    H = Functional(name, gradient, value, h)
    if validate:
        err = check_gradient(H, _validation_point(1, h.degree()))
        if err > tol:
            raise AccuracyError(f"gradient of {name} fails the finite-difference check ({err:.2e})")
    return H


# Hamiltonian vector fields -------------------------------------------------


def lie_field(grad, m):
    """X_H(m) = ad*_{dH} m."""
    V = coad(grad.element(), m)
    return TangentField(V.g, V.b)


def const_field(grad, fp):
    """Field of the bracket frozen at ``fp``.

    f_t = Lambda(delta_a H); a_t = 2 (delta_a H)_x + Lambda(delta_f H) + c1' (delta_a H)_xxx.
    """
    da, df = grad.da, grad.df
    f_t = lambda_apply(da, fp.c)
    a_t = 2.0 * derive(da, "x") + lambda_apply(df, fp.c)
    if fp.c1:
        a_t = a_t + fp.c1 * derive(da, "x", 3)
    return TangentField(f_t, a_t)


def limit_field(grad):
    """Large-c limit of the frozen bracket: f_t = (delta_a H)_y, a_t = (delta_f H)_y."""
    return TangentField(derive(grad.da, "y"), derive(grad.df, "y"))


def ham_lie(H, m):
    return lie_field(H.gradient(m), m)


def ham_const(H, fp, m):
    return const_field(H.gradient(m), fp)


def ham_limit(H, m):
    return limit_field(H.gradient(m))


def _pad_pair(gH, gG, m):
    n = safe_grid(max(gH.da.band() + gH.df.band()) + max(gG.da.band() + gG.df.band())
                  + max(m.g.band() + m.b.band()), m.shape[0])
    if n == m.shape[0]:
        return gH, gG, m
    return gH.resample(n), gG.resample(n), m.resample(n)


def bracket_lie(H, G, m, exact=True):
    """{H, G}(m) = <[dH, dG], m>."""
    gH, gG = H.gradient(m), G.gradient(m)
    if exact:
        gH, gG, m = _pad_pair(gH, gG, m)
    return pair(bracket(gH.element(), gG.element()), m)


def bracket_const(H, G, fp, m, exact=True):
    """{H, G}_w(m) = <m0, [dH, dG]> with m0 the frozen point."""
    gH, gG = H.gradient(m), G.gradient(m)
    if exact:
        gH, gG, m = _pad_pair(gH, gG, m)
    return pair(bracket(gH.element(), gG.element()), fp.dual(m.shape[0]))


def pencil_bracket(lam, H, G, fp, m):
    return bracket_const(H, G, fp, m) - lam * bracket_lie(H, G, m)


def pencil_field(lam, H, fp, m):
    """V with {H, K}_lam(m) = dK[V] for every K."""
    g = H.gradient(m)
    return lam * lie_field(g, m) - const_field(g, fp)


def pencil_jacobi_defect(lam, F, G, H, m, fp=FrozenPoint(), eps=1e-5):
    """Cyclic Jacobi sum of the pencil {,}_w - lam {,} at ``m``.

    The outer bracket {A, K}_lam is the derivative of K = {B, C}_lam along the
    pencil field of A, taken by central differences of step ``eps``.
    Returns the defect relative to the largest of the three terms.
    """
    terms = []
    for A_, B_, C_ in ((F, G, H), (G, H, F), (H, F, G)):
        V = pencil_field(lam, A_, fp, m)
        vn = V.norm()
        if vn == 0:
            terms.append(0.0)
            continue
        step = V.as_dual() * (eps / vn)
        kp = pencil_bracket(lam, B_, C_, fp, m + step)
        km = pencil_bracket(lam, B_, C_, fp, m - step)
        terms.append(vn * (kp - km) / (2 * eps))
    return relative(abs(sum(terms)), *map(abs, terms))


# the hierarchy ---------------------------------------------------------------


def _casimir_gradient(m):
    n, ny = m.shape
    return GradientPair(SpectralField.constant(1.0, n, ny), SpectralField.constant(-1.0, n, ny))


def casimir_H0():
    """H0 = int (a - f) dxdy, a Casimir of the frozen bracket."""
    from .jet import A, F
    return Functional("H0", _casimir_gradient,
                      lambda m: AREA * (m.b.mean() - m.g.mean()), A - F)


def _h1_parts(m, c, convention):
    f, a = m.g, m.b
    L1fx = lambda_invert(derive(f, "x"), c, convention)
    L2fxx = lambda_invert(derive(f, "x", 2), c, convention, power=2)
    return f, a, L1fx, L2fxx


def h1_closed_form(c=SQRT2, convention=PAPER_CONSTANT, validate=True):
    """H1 = int (Lambda^-1(f_x) a + Lambda^-1(f_x) f - Lambda^-2(f_xx) f) dxdy."""

    def value(m):
        f, a, L1fx, L2fxx = _h1_parts(m, c, convention)
        return inner(L1fx, a + f) - inner(L2fxx, f)

    def gradient(m):
        f, a, L1fx, L2fxx = _h1_parts(m, c, convention)
        L1ax = lambda_invert(derive(a, "x"), c, convention)
        return GradientPair(L1fx, L1ax + 2.0 * L1fx - 2.0 * L2fxx)

    H = Functional("H1", gradient, value)
    if validate:
        err = check_gradient(H, _validation_point(2, 2))
        if err > 1e-6:
            raise AccuracyError(f"H1 gradient fails the finite-difference check ({err:.2e})")
    return H


def h1_limit(convention=MEAN_FREE):
    """First Hamiltonian of the large-c limit structure.

    H1 = int d_y^{-1}(f_x) (a + f) dxdy, whose limit field equals X_{H0}.
    """

    def value(m):
        return inner(antiderive(derive(m.g, "x"), "y", convention), m.b + m.g)

    def gradient(m):
        da = antiderive(derive(m.g, "x"), "y", convention)
        df = antiderive(derive(m.b + 2.0 * m.g, "x"), "y", convention)
        return GradientPair(da, df)

    return Functional("H1_limit", gradient, value)


def magri_step(X, fp, convention=PAPER_CONSTANT):
    """Gradient of the next Hamiltonian: solve const_field(grad, fp) = X."""
    da = lambda_invert(X.f_t, fp.c, convention)
    rhs = X.a_t - 2.0 * derive(da, "x")
    if fp.c1:
        rhs = rhs - fp.c1 * derive(da, "x", 3)
    return GradientPair(da, lambda_invert(rhs, fp.c, convention))


def hierarchy_gradients(m, fp, k_max, convention=PAPER_CONSTANT):
    """[dH0, dH1, ..., dH_kmax] at ``m`` by iterating X_{H_k} = X^w_{H_{k+1}}."""
    if k_max > 3:
        raise ValueError("hierarchy depth is capped at 3")
    grads = [_casimir_gradient(m)]
    for _ in range(k_max):
        grads.append(magri_step(lie_field(grads[-1], m), fp, convention))
    return grads


def _gl_value(k, m, fp, nodes, convention):
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    total = 0.0
    for ti, wi in zip(t, w):
        mt = DualPoint(m.g * ti, m.b * ti, m.c1, m.c2)
        g = hierarchy_gradients(mt, fp, k, convention)[k]
        total += wi * (inner(g.df, m.g) + inner(g.da, m.b))
    return total


def magri_reconstruct(k, m, fp=FrozenPoint(), nodes=32, convention=PAPER_CONSTANT, check=True):
    """H_k(f, a) = int_0^1 <dH_k(t f, t a), (f, a)> dt with H_k(0, 0) = 0."""
    if k == 0:
        return AREA * (m.b.mean() - m.g.mean())
    val = _gl_value(k, m, fp, nodes, convention)
    if check:
        val2 = _gl_value(k, m, fp, 2 * nodes, convention)
        if abs(val - val2) > 1e-6 * max(1.0, abs(val2)):
            raise AccuracyError(f"homotopy quadrature for H{k} did not converge: {val} vs {val2}")
    return val


def magri_functional(k, fp=FrozenPoint(), convention=PAPER_CONSTANT):
    if k == 0:
        return casimir_H0()
    return Functional(
        f"H{k}",
        lambda m: hierarchy_gradients(m, fp, k, convention)[k],
        lambda m: magri_reconstruct(k, m, fp, convention=convention, check=False))


def ladder_defect(k, m, fp, grads=None):
    """||X^w_{H_k} - X_{H_{k-1}}|| relative; for k = 0 the norm of X^w_{H_0}."""
    grads = grads or hierarchy_gradients(m, fp, max(k, 0))
    if k == 0:
        return relative(const_field(grads[0], fp).norm())
    return tangent_defect(const_field(grads[k], fp), lie_field(grads[k - 1], m))


def involution(m, fp, k_max, grads=None):
    """Matrices of relative |{H_k, H_l}| and |{H_k, H_l}_w| for k, l <= k_max.

    Each entry is divided by 1 + ||dH_k|| ||X_{H_l}||, the Cauchy-Schwarz
    bound of the pairing it is computed from.
    """
    grads = grads or hierarchy_gradients(m, fp, k_max)
    lie = np.zeros((k_max + 1, k_max + 1))
    const = np.zeros((k_max + 1, k_max + 1))
    n = m.shape[0]
    top = max(max(g.da.band() + g.df.band()) for g in grads)
    npad = safe_grid(2 * top + max(m.g.band() + m.b.band()), n)
    gp = [g.resample(npad) for g in grads]
    mp = m.resample(npad)
    m0 = fp.dual(npad)
    for k in range(k_max + 1):
        for l in range(k_max + 1):
            B = bracket(gp[k].element(), gp[l].element())
            Xl = lie_field(gp[l], mp)
            Wl = const_field(gp[l], fp)
            lie[k, l] = abs(pair(B, mp)) / (1.0 + gp[k].norm() * Xl.norm())
            const[k, l] = abs(pair(B, m0)) / (1.0 + gp[k].norm() * Wl.norm())
    return lie, const


def closure_defect(k, m, fp=FrozenPoint(), seed=0, eps=1e-4, convention=PAPER_CONSTANT):
    """Asymmetry of the second variation of the k-th recursion form at ``m``.

    Compares d(dH_k)[phi] . psi with d(dH_k)[psi] . phi by central
    differences along two seeded band-2 directions.  A closed form (a true
    gradient) gives round-off; the homotopy value of a non-closed form is
    path dependent.
    """
    n = m.shape[0]
    phi, psi = (TangentField(random_field(n, seed, 2, stream=(9, i, 0)),
                             random_field(n, seed, 2, stream=(9, i, 1))) for i in range(2))

    def dgrad(v):
        gp = hierarchy_gradients(m + v.as_dual() * eps, fp, k, convention)[k]
        gm = hierarchy_gradients(m - v.as_dual() * eps, fp, k, convention)[k]
        return GradientPair((gp.da - gm.da) / (2 * eps), (gp.df - gm.df) / (2 * eps))

    a = directional(dgrad(phi), psi)
    b = directional(dgrad(psi), phi)
    return abs(a - b) / (1.0 + max(abs(a), abs(b)))


# large-c limit hierarchy ----------------------------------------------------

_LIMIT_INVERSE = NonlocalConvention("mean_free", project=True)


def limit_step(X):
    """Solve limit_field(grad) = X; y-mean parts of X are discarded."""
    return GradientPair(antiderive(X.f_t, "y", _LIMIT_INVERSE),
                        antiderive(X.a_t, "y", _LIMIT_INVERSE))


def limit_hierarchy_gradients(m, k_max):
    """[dH0, dH1, ...] for the Lie-Poisson / limit pair, seeded by H0."""
    if k_max > 3:
        raise ValueError("hierarchy depth is capped at 3")
    grads = [_casimir_gradient(m)]
    for _ in range(k_max):
        grads.append(limit_step(lie_field(grads[-1], m)))
    return grads


def limit_value(k, m, nodes=8):
    """Homotopy value of the k-th limit Hamiltonian, zero at the origin."""
    if k == 0:
        return AREA * (m.b.mean() - m.g.mean())
    t, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for ti, wi in zip(0.5 * (t + 1.0), 0.5 * w):
        g = limit_hierarchy_gradients(DualPoint(m.g * ti, m.b * ti, m.c1, m.c2), k)[k]
        total += wi * (inner(g.df, m.g) + inner(g.da, m.b))
    return total


def quadratic_functionals():
    """Three local quadratic functionals with mixed x- and y-derivatives."""
    from .jet import A, F, var
    return (from_integrand(F * A, "FA", validate=False),
            from_integrand(var("F", 1, 0) * A, "FxA", validate=False),
            from_integrand(F * var("F", 0, 1) + A * A, "FFy+AA", validate=False))

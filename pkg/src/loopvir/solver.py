"""Pseudospectral RK4 integration of the u_tx-type equations on the torus.

Every equation is written as ``L(u_t) = R(u)`` with ``L = d/dx`` for the
scalar equations and the theorem system, and ``L = Lambda`` for the
intermediate system.  ``R`` is assembled in physical space and dealiased
once; the inversion of ``L`` discards the modes ``L`` cannot reach and
reports their L2 norm as the solvability defect.

Monitored quantities per equation (columns H0, H1, H2 of the log):

* ``theorem_system``: H0 and H1 of the limit hierarchy at ``f = u_y, a = v_y``.
  H2 is not tracked: with x and y exchanged the flow is the limit field of
  H2 only after its mean is discarded, and that projected H2 is not a first
  integral (see ``theorem_flow_point``).
* ``intermediate``: the Lambda hierarchy at ``f = Lambda u, a = Lambda v``.
* ``eq1``: H1 = int u_x u_y.
* ``eq2``: H1 = int u_x^2.
* ``family``: H1 = c int u_x u_y + int u_x^2.

For the scalar equations H0 = -int u_y, which vanishes identically, and
H2 is not tracked.
"""
from dataclasses import asdict, dataclass, field, replace
import math

import numpy as np

from .algebra import DualPoint
from .errors import BlowUpError, ConfigError, ResonanceError, SolvabilityError
from .magri import (FrozenPoint, TangentField, h1_closed_form, h1_limit, limit_value,
                    magri_reconstruct)
from .spectral import (AREA, MEAN_FREE, PAPER_CONSTANT, SpectralField,
                       antiderive, dealias_cutoff, derive, from_physical_product, inner,
                       lambda_apply, lambda_invert, norm, random_field)

EQUATIONS = ("eq1", "eq2", "theorem_system", "intermediate", "family")
COUPLED = ("theorem_system", "intermediate")
INITIAL = ("random", "random_full", "x_independent", "zero")
SOLVABILITY_TOL = 1e-8


@dataclass(frozen=True)
class SimConfig:
    equation: str = "theorem_system"
    n: int = 64
    ny: int = None
    dt: float = 1e-3
    t_final: float = 1.0
    c: float = math.sqrt(2.0)
    c1: float = 0.0
    c2: float = 0.0
    convention: str = "mean_free"
    xmean_policy: str = "project_and_log"
    seed: int = 0
    stride: int = 100
    band: int = 1
    amplitude: float = 1.0
    initial: str = "random"
    monitor_h2: bool = False

    def __post_init__(self):
        ny = self.n if self.ny is None else self.ny
        object.__setattr__(self, "ny", ny)
        problems = []
        if self.equation not in EQUATIONS:
            problems.append(f"equation must be one of {EQUATIONS}")
        if self.n % 2 or ny % 2 or self.n < 4 or ny < 4:
            problems.append("grid sizes must be even and at least 4")
        if not self.dt > 0:
            problems.append("dt must be positive")
        elif not self.t_final >= self.dt:
            problems.append("t_final must be at least dt")
        elif abs(self.t_final / self.dt - round(self.t_final / self.dt)) > 1e-9 * self.t_final / self.dt:
            problems.append("t_final must be an integer multiple of dt")
        if self.convention not in ("mean_free", "paper_constant"):
            problems.append("convention must be mean_free or paper_constant")
        if self.xmean_policy not in ("project_and_log", "error"):
            problems.append("xmean_policy must be project_and_log or error")
        if self.stride < 1:
            problems.append("stride must be at least 1")
        if self.initial not in INITIAL:
            problems.append(f"initial must be one of {INITIAL}")
        if not 1 <= self.band <= min(self.n, ny) // 6:
            problems.append(f"band must lie in [1, N/6] = [1, {min(self.n, ny) // 6}]")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def coupled(self):
        return self.equation in COUPLED

    @property
    def inverse(self):
        rule = PAPER_CONSTANT if self.convention == "paper_constant" else MEAN_FREE
        return replace(rule, project=True)

    def to_dict(self):
        return asdict(self)


@dataclass
class ConservationLog:
    t: list = field(default_factory=list)
    H0: list = field(default_factory=list)
    H1: list = field(default_factory=list)
    H2: list = field(default_factory=list)
    xmean_defect: list = field(default_factory=list)

    def append(self, t, values, defect):
        if self.t and t <= self.t[-1]:
            raise ValueError("log times must increase")
        self.t.append(float(t))
        h0, h1, h2 = values
        self.H0.append(float(h0))
        self.H1.append(float(h1))
        self.H2.append(float(h2))
        self.xmean_defect.append(float(defect))

    def rows(self):
        return list(zip(self.t, self.H0, self.H1, self.H2, self.xmean_defect))

    def drift(self, name, scale=0.0):
        """max |H(t) - H(0)| / max(|H(0)|, scale)."""
        h = np.asarray(getattr(self, name))
        if h.size == 0 or np.isnan(h).all():
            return float("nan")
        den = max(abs(h[0]), scale)
        dev = float(np.max(np.abs(h - h[0])))
        return dev / den if den > 0 else dev


@dataclass
class SimState:
    t: float
    u: SpectralField
    v: SpectralField = None
    log: ConservationLog = field(default_factory=ConservationLog)


# physical-space assembly -------------------------------------------------------


def _g(phi, ox=0, oy=0):
    """Grid values of d^ox/dx^ox d^oy/dy^oy phi."""
    if ox:
        phi = derive(phi, "x", ox)
    if oy:
        phi = derive(phi, "y", oy)
    return phi.to_grid()


def forcing_eq1(u):
    """u_xy u_y - u_yy u_x."""
    return from_physical_product(_g(u, 1, 1) * _g(u, 0, 1) - _g(u, 0, 2) * _g(u, 1, 0))


def forcing_eq2(u, c=0.0):
    """u_xx u_y - u_xy u_x + c u_yy."""
    R = from_physical_product(_g(u, 2, 0) * _g(u, 0, 1) - _g(u, 1, 1) * _g(u, 1, 0))
    return R + c * derive(u, "y", 2) if c else R


def forcing_family(u, c):
    """c (u_xy u_y - u_yy u_x) + u_xx u_y - u_xy u_x."""
    ux, uy = _g(u, 1, 0), _g(u, 0, 1)
    uxx, uxy, uyy = _g(u, 2, 0), _g(u, 1, 1), _g(u, 0, 2)
    return from_physical_product(c * (uxy * uy - uyy * ux) + uxx * uy - uxy * ux)


def forcing_theorem(u, v):
    """Right sides of u_tx and v_tx in the coupled system."""
    ux, uy = _g(u, 1, 0), _g(u, 0, 1)
    uxy, uyy = _g(u, 1, 1), _g(u, 0, 2)
    vx, vy = _g(v, 1, 0), _g(v, 0, 1)
    vxy, vyy = _g(v, 1, 1), _g(v, 0, 2)
    R1 = uxy * uy - uyy * ux
    R2 = (2.0 * (uyy * vx - uxy * vy) + uy * vxy - ux * vyy
          - 2.0 * (uyy * ux + 2.0 * uxy * uy))
    return from_physical_product(R1), from_physical_product(R2)


def forcing_intermediate(u, v, c, c1=0.0, c2=0.0, convention=MEAN_FREE):
    """Right sides of Lambda(u_t) and Lambda(v_t) in the intermediate system."""
    ux, uy = _g(u, 1, 0), _g(u, 0, 1)
    uxx, uxy = _g(u, 2, 0), _g(u, 1, 1)
    vx, vy = _g(v, 1, 0), _g(v, 0, 1)
    vxx, vxy = _g(v, 2, 0), _g(v, 1, 1)
    Lxxx = lambda_invert(derive(u, "x", 3), c, convention).to_grid()
    Lxx = lambda_invert(derive(u, "x", 2), c, convention)
    R1 = c * (uxy * ux - uxx * uy)
    R2 = (c * (2.0 * uxx * vy - 2.0 * uxy * vx + ux * vxy - uy * vxx)
          + 2.0 * (uxx - Lxxx) * (ux - c * uy)
          + 4.0 * (ux - Lxx.to_grid()) * (uxx - c * uxy))
    F1 = from_physical_product(R1)
    F2 = from_physical_product(R2)
    if c2:
        F1 = F1 + c2 * derive(derive(u, "x"), "y")
        F2 = F2 + c2 * (derive(derive(v, "x"), "y") + 2.0 * derive(derive(u, "x"), "y")
                        - 2.0 * derive(Lxx, "y"))
    if c1:
        F2 = F2 + c1 * derive(u, "x", 4)
    return F1, F2


# inversions ------------------------------------------------------------------------


def _xmean_part(R):
    c = np.zeros_like(R.coef)
    c[0, :] = R.coef[0, :]
    return SpectralField(c)


def invert_x(R, policy="project_and_log", convention=MEAN_FREE):
    """Solve d/dx u_t = R.  Returns ``(u_t, defect)``.

    ``defect`` is the L2 norm of the x-mean of ``R``, the part no u_t can
    produce.  It is discarded, or raises under ``policy = 'error'`` when it
    exceeds the solvability tolerance.
    """
    defect = norm(_xmean_part(R))
    if policy == "error" and defect > SOLVABILITY_TOL:
        row = np.abs(R.coef[0, :])
        j = int(np.argmax(row))
        ky = int(np.fft.fftfreq(R.ny, 1.0 / R.ny)[j])
        raise SolvabilityError(
            f"x-mean of the right side has norm {defect:.3e}; largest mode (0, {ky})",
            mode=(0, ky), magnitude=float(row[j]))
    return antiderive(R, "x", replace(convention, project=True)), defect


def invert_lambda(R, c, policy="project_and_log", convention=MEAN_FREE):
    """Solve Lambda(u_t) = R.  Returns ``(u_t, defect)``; defect is the resonant norm."""
    sym = np.abs(-np.fft.fftfreq(R.nx, 1.0 / R.nx)[:, None] + c * np.fft.fftfreq(R.ny, 1.0 / R.ny)[None, :])
    tol = convention.resonance_tolerance
    res = np.where(sym <= tol, R.coef, 0.0)
    defect = norm(SpectralField(res))
    if policy == "error" and defect > SOLVABILITY_TOL:
        idx = np.argwhere(np.abs(res) > 0)
        fx = np.fft.fftfreq(R.nx, 1.0 / R.nx)
        fy = np.fft.fftfreq(R.ny, 1.0 / R.ny)
        raise ResonanceError([(int(fx[i]), int(fy[j])) for i, j in idx], c)
    return lambda_invert(R, c, replace(convention, project=True)), defect


# right-hand sides ------------------------------------------------------------------


def rhs_eq1(u, policy="project_and_log", convention=MEAN_FREE):
    return invert_x(forcing_eq1(u), policy, convention)


def rhs_eq2(u, c=0.0, policy="project_and_log", convention=MEAN_FREE):
    return invert_x(forcing_eq2(u, c), policy, convention)


def rhs_family(u, c, policy="project_and_log", convention=MEAN_FREE):
    return invert_x(forcing_family(u, c), policy, convention)


def rhs_theorem_system(u, v, policy="project_and_log", convention=MEAN_FREE):
    """Returns ``(u_t, v_t, defect)`` with the larger of the two defects."""
    R1, R2 = forcing_theorem(u, v)
    ut, d1 = invert_x(R1, policy, convention)
    vt, d2 = invert_x(R2, policy, convention)
    return ut, vt, max(d1, d2)


def rhs_intermediate(u, v, c, c1=0.0, c2=0.0, policy="project_and_log", convention=MEAN_FREE):
    """Returns ``(u_t, v_t, defect)``; the defect is the resonant part of the right side."""
    R1, R2 = forcing_intermediate(u, v, c, c1, c2)
    ut, d1 = invert_lambda(R1, c, policy, convention)
    vt, d2 = invert_lambda(R2, c, policy, convention)
    return ut, vt, max(d1, d2)


def rhs(config, u, v=None):
    """``(u_t, v_t, defect)`` for the configured equation; v_t is None for scalar ones."""
    p, conv = config.xmean_policy, config.inverse
    eq = config.equation
    if eq == "theorem_system":
        return rhs_theorem_system(u, v, p, conv)
    if eq == "intermediate":
        return rhs_intermediate(u, v, config.c, config.c1, config.c2, p, conv)
    if eq == "eq1":
        ut, d = rhs_eq1(u, p, conv)
    elif eq == "eq2":
        ut, d = rhs_eq2(u, config.c, p, conv)
    else:
        ut, d = rhs_family(u, config.c, p, conv)
    return ut, None, d


# monitors ----------------------------------------------------------------------------


def _x_inv(phi):
    return antiderive(phi, "x", MEAN_FREE)


def monitors(config, u, v=None):
    """``(H0, H1, H2)`` for the configured equation; see the module docstring."""
    eq = config.equation
    nan = float("nan")
    uy = derive(u, "y")
    if eq == "theorem_system":
        m = DualPoint(uy, derive(v, "y"))
        return limit_value(0, m), h1_limit(MEAN_FREE).value(m), nan
    if eq == "intermediate":
        m = DualPoint(lambda_apply(u, config.c), lambda_apply(v, config.c), config.c1, config.c2)
        h1 = h1_closed_form(config.c, MEAN_FREE, validate=False).value(m)
        h2 = (magri_reconstruct(2, m, FrozenPoint(config.c), nodes=4, check=False)
              if config.monitor_h2 else nan)
        return AREA * (m.b.mean() - m.g.mean()), h1, h2
    ux = derive(u, "x")
    h0 = -AREA * uy.mean()
    if eq == "eq1":
        return h0, inner(ux, uy), nan
    if eq == "eq2":
        return h0, inner(ux, ux), nan
    return h0, config.c * inner(ux, uy) + inner(ux, ux), nan


def theorem_flow_point(u, v, u_t=None, v_t=None):
    """The point ``(f, a) = (u_x, v_x)`` with x and y exchanged, and optionally its rate.

    In these coordinates the theorem-system flow equals
    ``limit_field(limit_hierarchy_gradients(m, 2)[2])``.
    """
    U, V = u.transpose(), v.transpose()
    m = DualPoint(derive(U, "y"), derive(V, "y"))
    if u_t is None:
        return m
    return m, TangentField(derive(u_t.transpose(), "y"), derive(v_t.transpose(), "y"))


def monitor_scale(config, u, v=None):
    """Cauchy-Schwarz size of the monitored quadratic functionals at (u, v)."""
    s = norm(derive(u, "x")) + norm(derive(u, "y"))
    if v is not None:
        s += norm(derive(v, "x")) + norm(derive(v, "y"))
    if config.equation == "intermediate":
        s *= 1.0 + abs(config.c)
    return s * s


# time stepping ------------------------------------------------------------------------


def initial_state(config):
    n, ny, b, s = config.n, config.ny, config.band, config.seed
    amp = config.amplitude
    if config.initial == "zero":
        u = SpectralField.zeros(n, ny)
        v = SpectralField.zeros(n, ny) if config.coupled else None
    elif config.initial == "x_independent":
        u = _x_independent(random_field(n, s, b, amp, ny, stream=(0,)))
        v = _x_independent(random_field(n, s, b, amp, ny, stream=(1,))) if config.coupled else None
    else:
        xmf = config.initial == "random"
        u = random_field(n, s, b, amp, ny, stream=(0,), x_mean_free=xmf)
        v = random_field(n, s, b, amp, ny, stream=(1,), x_mean_free=xmf) if config.coupled else None
    return SimState(0.0, u, v)


def _x_independent(phi):
    c = np.zeros_like(phi.coef)
    c[0, :] = phi.coef[0, :]
    if not np.any(c):
        c[0, 1] = c[0, -1] = 0.5
    return SpectralField(c)


def _axpy(a, x, y):
    return None if x is None else x + y * a


def step_rk4(state, config, forcing=None, dt=None, rhs_fn=None):
    """One classical RK4 step.  ``forcing(t)`` adds a source to (u_t, v_t).

    ``rhs_fn(u, v)`` replaces the configured right side when given.
    Returns ``(new_state, defect)``; ``defect`` comes from the first stage.
    """
    dt = config.dt if dt is None else dt
    t, u, v = state.t, state.u, state.v
    rhs_fn = rhs_fn or (lambda uu, vv: rhs(config, uu, vv))

    def f(tt, uu, vv):
        du, dv, d = rhs_fn(uu, vv)
        if forcing is not None:
            fu, fv = forcing(tt)
            du = du + fu
            dv = dv + fv if dv is not None else None
        return du, dv, d

    k1u, k1v, defect = f(t, u, v)
    k2u, k2v, _ = f(t + dt / 2, u + k1u * (dt / 2), _axpy(dt / 2, v, k1v))
    k3u, k3v, _ = f(t + dt / 2, u + k2u * (dt / 2), _axpy(dt / 2, v, k2v))
    k4u, k4v, _ = f(t + dt, u + k3u * dt, _axpy(dt, v, k3v))
    un = u + (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (dt / 6)
    vn = None if v is None else v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6)
    return SimState(t + dt, un, vn, state.log), defect


def _finite(*fields):
    return all(f is None or np.all(np.isfinite(f.coef)) for f in fields)


def run(config, state=None, forcing=None, snapshots=True):
    """Integrate to ``t_final``.

    Returns ``(final_state, log, snaps)`` where ``snaps`` is a list of
    ``(t, u, v)`` taken every ``stride`` steps including t = 0.
    """
    state = state or initial_state(config)
    log = state.log
    snaps = []
    defect = rhs(config, state.u, state.v)[2]
    for i in range(config.steps + 1):
        if i % config.stride == 0 or i == config.steps:
            log.append(state.t, monitors(config, state.u, state.v), defect)
            if snapshots:
                snaps.append((state.t, state.u, state.v))
        if i == config.steps:
            break
        # overflow on the way to a blow-up is detected below
        with np.errstate(over="ignore", invalid="ignore"):
            new, defect = step_rk4(state, config, forcing)
        if not _finite(new.u, new.v):
            raise BlowUpError(state.t)
        # fixed-step time grid, free of accumulated rounding
        state = SimState((i + 1) * config.dt, new.u, new.v, log)
    return state, log, snaps


# manufactured solutions ----------------------------------------------------------------


@dataclass(frozen=True)
class Manufactured:
    """Closed-form scalar solution ``u(x, y, t)`` with its time derivative."""

    u: object
    u_t: object
    name: str = "u_star"

    def field(self, t, n):
        return SpectralField.from_function(lambda x, y: self.u(x, y, t), n)

    def rate(self, t, n):
        return SpectralField.from_function(lambda x, y: self.u_t(x, y, t), n)


def sin_sin_cos():
    """u = sin x sin y cos t."""
    return Manufactured(lambda x, y, t: np.sin(x) * np.sin(y) * np.cos(t),
                        lambda x, y, t: -np.sin(x) * np.sin(y) * np.sin(t),
                        "sin(x)sin(y)cos(t)")


def analytic_wave():
    """u = cos t sin(x + sin y) + sin t cos(2x + cos y)/2, analytic with all y-modes."""
    return Manufactured(
        lambda x, y, t: np.cos(t) * np.sin(x + np.sin(y)) + 0.5 * np.sin(t) * np.cos(2 * x + np.cos(y)),
        lambda x, y, t: -np.sin(t) * np.sin(x + np.sin(y)) + 0.5 * np.cos(t) * np.cos(2 * x + np.cos(y)),
        "cos(t)sin(x+sin y)+sin(t)cos(2x+cos y)/2")


def _truncate(phi, n):
    """Resample to n and keep the dealiased band."""
    out = phi.resample(n)
    k = dealias_cutoff(n)
    c = out.coef.copy()
    fx = np.abs(np.fft.fftfreq(n, 1.0 / n))
    c[fx > k, :] = 0.0
    c[:, fx > k] = 0.0
    return SpectralField(c)


def manufactured_forcing(u_star, config, reference=128):
    """forcing(t) = u*_t - rhs(u*(t)), built on a ``reference`` grid and truncated."""
    ref = replace(config, n=reference, ny=reference, band=1)
    n = config.n

    def forcing(t):
        us = u_star.field(t, reference)
        du, _, _ = rhs(ref, us)
        return _truncate(u_star.rate(t, reference) - du, n), None

    return forcing


def manufactured_run(u_star, config, reference=128):
    """Run the scalar equation with manufactured forcing; return the max-norm error at T."""
    if config.coupled:
        raise ConfigError("manufactured runs support the scalar equations only")
    u0 = _truncate(u_star.field(0.0, reference), config.n)
    state = SimState(0.0, u0)
    forcing = manufactured_forcing(u_star, config, reference)
    final, _, _ = run(config, state, forcing, snapshots=False)
    exact = u_star.field(config.t_final, config.n).to_grid()
    return float(np.max(np.abs(final.u.to_grid() - exact)))


def observed_order(steps, errors):
    """Least-squares slope of log(error) against log(step)."""
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


def temporal_study(u_star, config, dts=(0.2, 0.1, 0.05, 0.025)):
    errs = [manufactured_run(u_star, replace(config, dt=dt)) for dt in dts]
    return list(dts), errs, observed_order(dts, errs)


def spatial_study(u_star, config, grids=(16, 32)):
    errs = [manufactured_run(u_star, replace(config, n=g, ny=g, band=min(config.band, g // 6)))
            for g in grids]
    return list(grids), errs, errs[0] / errs[-1]

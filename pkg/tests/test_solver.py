import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loopvir.errors import BlowUpError, ConfigError, ResonanceError, SolvabilityError
from loopvir.magri import (SQRT2, TangentField, h1_closed_form, ham_lie, limit_field,
                           limit_hierarchy_gradients, tangent_defect)
from loopvir.algebra import DualPoint
from loopvir.solver import (ConservationLog, Manufactured, SimConfig, SimState, forcing_eq1,
                            forcing_intermediate, forcing_theorem, initial_state, invert_lambda,
                            manufactured_run, monitors, rhs, rhs_eq1, rhs_eq2, rhs_family,
                            rhs_intermediate, rhs_theorem_system, run, step_rk4,
                            theorem_flow_point)
from loopvir.spectral import (MEAN_FREE, SpectralField, antiderive, derive, grid_coords,
                              inner, lambda_apply, multiply, norm, random_field)

N = 32


def rel(a, b):
    return norm(a - b) / max(norm(b), 1e-300)


def fn(func, n=N):
    return SpectralField.from_function(func, n)


def xmean(phi):
    c = np.zeros_like(phi.coef)
    c[0, :] = phi.coef[0, :]
    return SpectralField(c)


def fields(seed, band=2, xmf=True):
    return (random_field(N, seed, band, stream=(0,), x_mean_free=xmf),
            random_field(N, seed, band, stream=(1,), x_mean_free=xmf))


# dense finite differences ---------------------------------------------------------------

_D1 = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
_D2 = np.array([2, -27, 270, -490, 270, -27, 2]) / 180.0


def fd(values, axis, order):
    """Sixth-order periodic central difference on a uniform grid of [0, 2pi)."""
    h = 2 * np.pi / values.shape[axis]
    w = _D1 if order == 1 else _D2
    out = sum(wi * np.roll(values, 3 - i, axis=axis) for i, wi in enumerate(w))
    return out / h**order


def fd_derivs(func, n=256):
    x, y = grid_coords(n)
    u = func(x, y)
    ux, uy = fd(u, 0, 1), fd(u, 1, 1)
    return {"x": ux, "y": uy, "xx": fd(u, 0, 2), "yy": fd(u, 1, 2), "xy": fd(ux, 1, 1)}


def max_rel(got, want):
    return np.max(np.abs(got - want)) / np.max(np.abs(want))


# eq1 -------------------------------------------------------------------------------------


def test_eq1_stationary_and_constant():
    g = fn(lambda x, y: np.sin(y) + 0.3 * np.cos(2 * y))
    ut, d = rhs_eq1(g)
    assert norm(ut) == 0.0 and d == 0.0
    ut, d = rhs_eq1(SpectralField.constant(2.0, N))
    assert norm(ut) == 0.0 and d == 0.0


def test_eq1_against_finite_differences():
    func = lambda x, y: np.sin(x) * np.cos(y)  # noqa: E731
    D = fd_derivs(func)
    R_fd = D["xy"] * D["y"] - D["yy"] * D["x"]
    R = forcing_eq1(fn(func, 256)).to_grid()
    assert max_rel(R, R_fd) < 1e-6
    # R = sin(2x)/2, so u_t = -cos(2x)/4
    ut, d = rhs_eq1(fn(func))
    x, y = grid_coords(N)
    assert np.max(np.abs(ut.to_grid() + np.cos(2 * x) / 4)) < 1e-14 and d < 1e-14


# eq2 --------------------------------------------------------------------------------------


def test_eq2_x_independent_zero_charge():
    ut, d = rhs_eq2(fn(lambda x, y: np.cos(3 * y)), 0.0)
    assert norm(ut) == 0.0 and d == 0.0


def test_eq2_charge_term_exposes_solvability():
    u = fn(lambda x, y: np.cos(y))
    ut, d = rhs_eq2(u, 1.0)
    assert norm(ut) == 0.0
    assert d == pytest.approx(norm(u), rel=1e-14)
    with pytest.raises(SolvabilityError) as info:
        rhs_eq2(u, 1.0, policy="error")
    assert info.value.mode in ((0, 1), (0, -1))


@pytest.mark.parametrize("seed", range(3))
def test_eq2_matches_nonlocal_form(seed):
    # with f = u_x: f_t = f_x d_x^{-1} f_y - f_y f + c d_x^{-1} f_yy, up to the x-mean
    c = 0.7
    u = random_field(N, seed, 3, x_mean_free=True)
    f = derive(u, "x")
    inv = lambda phi: antiderive(phi, "x", MEAN_FREE)  # noqa: E731
    rhs_f = (multiply(derive(f, "x"), inv(derive(f, "y"))) - multiply(derive(f, "y"), f)
             + c * inv(derive(f, "y", 2)))
    rhs_f = rhs_f - xmean(rhs_f)
    ut, _ = rhs_eq2(u, c)
    assert rel(derive(ut, "x"), rhs_f) < 1e-8


# theorem system -----------------------------------------------------------------------------


def test_theorem_system_without_v():
    u = random_field(N, 4, 3)
    zero = SpectralField.zeros(N)
    ut, vt, _ = rhs_theorem_system(u, zero)
    assert norm(ut - rhs_eq1(u)[0]) == 0.0
    uy, ux = derive(u, "y"), derive(u, "x")
    R = -2.0 * (multiply(derive(u, "y", 2), ux) + 2.0 * multiply(derive(ux, "y"), uy))
    want = antiderive(R - xmean(R), "x", MEAN_FREE)
    assert rel(vt, want) < 1e-13


def test_theorem_system_zero_u():
    zero = SpectralField.zeros(N)
    ut, vt, d = rhs_theorem_system(zero, random_field(N, 5, 3))
    assert norm(ut) == 0.0 and norm(vt) == 0.0 and d == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_theorem_system_is_limit_field_with_exchanged_variables(seed):
    u, v = fields(seed)
    ut, vt, _ = rhs_theorem_system(u, v)
    m, flow = theorem_flow_point(u, v, ut, vt)
    grads = limit_hierarchy_gradients(m, 2)
    assert tangent_defect(flow, limit_field(grads[2])) < 1e-6


# intermediate system ------------------------------------------------------------------------


def test_intermediate_single_mode_against_finite_differences():
    c = SQRT2
    k = 2 * c - 1  # Lambda sin(x+2y) = k cos(x+2y)
    func = lambda x, y: np.sin(x + 2 * y)  # noqa: E731
    D = fd_derivs(func)
    x, y = grid_coords(256)
    th = x + 2 * y
    Lxxx, Lxx = -np.sin(th) / k, np.cos(th) / k  # Lambda^{-1} of u_xxx and u_xx
    R1 = c * (D["xy"] * D["x"] - D["xx"] * D["y"])
    R2 = 2.0 * (D["xx"] - Lxxx) * (D["x"] - c * D["y"]) + 4.0 * (D["x"] - Lxx) * (D["xx"] - c * D["xy"])
    u = fn(func, 256)
    F1, F2 = forcing_intermediate(u, SpectralField.zeros(256), c)
    assert np.max(np.abs(F1.to_grid() - R1)) < 1e-6
    assert max_rel(F2.to_grid(), R2) < 1e-6
    ut, vt, _ = rhs_intermediate(u, SpectralField.zeros(256), c)
    assert rel(lambda_apply(vt, c), F2) < 1e-12


def test_intermediate_zero_u():
    zero = SpectralField.zeros(N)
    ut, vt, _ = rhs_intermediate(zero, zero, SQRT2)
    assert norm(ut) == 0.0 and norm(vt) == 0.0


@pytest.mark.parametrize("c1,c2", [(0.0, 0.0), (0.7, -0.4)])
def test_intermediate_is_lie_field_of_h1(c1, c2):
    c = SQRT2
    u, v = fields(6, xmf=False)
    m = DualPoint(lambda_apply(u, c), lambda_apply(v, c), c1, c2)
    X = ham_lie(h1_closed_form(c, MEAN_FREE, validate=False), m)
    assert tangent_defect(TangentField(*forcing_intermediate(u, v, c, c1, c2)), X) < 1e-12


def test_intermediate_resonance_policy():
    R = fn(lambda x, y: np.cos(x + y))
    ut, d = invert_lambda(R, 1.0)
    assert norm(ut) < 1e-14 and d == pytest.approx(norm(R))
    with pytest.raises(ResonanceError) as info:
        invert_lambda(R, 1.0, policy="error")
    assert (1, 1) in info.value.modes


def test_large_c_intermediate_matches_exchanged_theorem_system():
    # compared before inversion: Lambda / c tends to d/dy, but Lambda^{-1} keeps the
    # y-independent modes that the exchanged d/dx inversion discards
    c = 1e3
    for seed in range(3):
        u, v = (random_field(N, seed, 1, stream=(i,), x_mean_free=True).transpose() for i in (0, 1))
        R1, R2 = forcing_intermediate(u, v, c)
        T1, T2 = forcing_theorem(u.transpose(), v.transpose())
        assert rel(R1 * (1 / c), T1.transpose()) < 2e-3
        assert rel(R2 * (1 / c), T2.transpose()) < 2e-3


# family -------------------------------------------------------------------------------------


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_family_at_zero_is_eq2(seed):
    u = random_field(N, seed, 3)
    assert np.array_equal(rhs_family(u, 0.0)[0].coef, rhs_eq2(u, 0.0)[0].coef)


def test_family_large_c_tends_to_eq1():
    c = 1e3
    for seed in range(3):
        u = random_field(N, seed, 1)
        assert rel(rhs_family(u, c)[0] * (1 / c), rhs_eq1(u)[0]) < 2e-3


def test_family_x_independent():
    ut, d = rhs_family(fn(lambda x, y: np.sin(2 * y)), 3.0)
    assert norm(ut) == 0.0 and d == 0.0


# stepping -----------------------------------------------------------------------------------


@pytest.mark.parametrize("eq", ["eq1", "theorem_system", "intermediate", "family"])
def test_zero_data_stays_zero(eq):
    cfg = SimConfig(eq, n=16, dt=0.01, t_final=0.1, stride=5, initial="zero")
    final, log, _ = run(cfg)
    assert norm(final.u) == 0.0
    assert final.v is None or norm(final.v) == 0.0


def test_rk4_order_on_linear_mode():
    lam = 5.0
    cfg = SimConfig("eq1", n=16, t_final=0.1, dt=0.01)
    u0 = fn(lambda x, y: np.sin(x + y), 16)
    lin = lambda u, v: (u * lam, None, 0.0)  # noqa: E731
    dts, errs = (1e-2, 5e-3, 2.5e-3), []
    for dt in dts:
        s = SimState(0.0, u0)
        for _ in range(round(1.0 / dt)):
            s, _ = step_rk4(s, cfg, dt=dt, rhs_fn=lin)
        errs.append(norm(s.u - u0 * math.exp(lam)))
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(order - 4.0) < 0.1


@pytest.mark.parametrize("eq", ["eq1", "family"])
def test_x_independent_data_is_fixed(eq):
    cfg = SimConfig(eq, n=16, dt=0.01, t_final=0.1, initial="x_independent", seed=3)
    s0 = initial_state(cfg)
    s1, _ = step_rk4(s0, cfg)
    assert norm(s1.u - s0.u) < 1e-15
    final, _, snaps = run(cfg)
    assert all(np.array_equal(u.coef, s0.u.coef) for _, u, _ in snaps)


def test_run_is_deterministic():
    cfg = SimConfig("theorem_system", n=16, dt=0.01, t_final=0.2, stride=5, seed=7)
    a, b = run(cfg)[1], run(cfg)[1]
    assert repr(a.rows()) == repr(b.rows())
    assert len(a.t) == 5 and a.t[-1] == pytest.approx(0.2)


def test_short_theorem_run_conserves():
    cfg = SimConfig("theorem_system", n=32, dt=2e-3, t_final=0.2, stride=20)
    final, log, _ = run(cfg, snapshots=False)
    assert max(abs(h) for h in log.H0) < 1e-12
    assert log.drift("H1") < 1e-6
    assert all(math.isnan(h) for h in log.H2)


def test_blow_up_reports_last_good_time():
    cfg = SimConfig("eq1", n=16, dt=0.01, t_final=0.1)
    bad = SpectralField(np.full((16, 16), np.nan, dtype=complex))
    with pytest.raises(BlowUpError) as info:
        run(cfg, forcing=lambda t: (bad, None))
    assert info.value.last_good_t == 0.0


@pytest.mark.parametrize("kw", [dict(n=15), dict(dt=0.0), dict(equation="kdv"), dict(band=10),
                                dict(t_final=0.0105, dt=0.01), dict(xmean_policy="ignore")])
def test_config_validation(kw):
    base = dict(equation="eq1", n=32, dt=0.01, t_final=0.1)
    base.update(kw)
    with pytest.raises(ConfigError):
        SimConfig(**base)


def test_log_times_must_increase():
    log = ConservationLog()
    log.append(0.0, (0, 0, 0), 0.0)
    with pytest.raises(ValueError):
        log.append(0.0, (0, 0, 0), 0.0)


def test_scalar_monitors():
    u = random_field(N, 2, 3)
    cfg = SimConfig("family", n=N, c=2.0)
    h0, h1, h2 = monitors(cfg, u)
    ux, uy = derive(u, "x"), derive(u, "y")
    assert h0 == pytest.approx(0.0, abs=1e-14)
    assert h1 == pytest.approx(2.0 * inner(ux, uy) + inner(ux, ux), rel=1e-14)
    assert math.isnan(h2)


def test_config_rhs_dispatch():
    u = random_field(16, 1, 2)
    cfg = SimConfig("eq2", n=16, c=0.5)
    ut, vt, d = rhs(cfg, u)
    assert vt is None and norm(ut - rhs_eq2(u, 0.5)[0]) == 0.0


# manufactured solutions ---------------------------------------------------------------------


def test_static_manufactured_solution_is_held():
    u_star = Manufactured(lambda x, y, t: np.sin(x) * np.sin(2 * y) + 0.5 * np.cos(x - y),
                          lambda x, y, t: 0.0 * x, "static")
    cfg = SimConfig("eq1", n=16, dt=0.01, t_final=0.1)
    assert manufactured_run(u_star, cfg) < 1e-9


def test_manufactured_rejects_coupled_equations():
    u_star = Manufactured(lambda x, y, t: np.sin(x), lambda x, y, t: 0.0 * x)
    with pytest.raises(ConfigError):
        manufactured_run(u_star, SimConfig("theorem_system", n=16, dt=0.01, t_final=0.1))


def test_config_round_trip():
    cfg = SimConfig("intermediate", n=16, c1=0.3)
    assert SimConfig(**cfg.to_dict()) == cfg
    assert replace(cfg, seed=4).seed == 4

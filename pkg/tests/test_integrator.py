import math

import numpy as np
import pytest

from indefbvp.checks import damped_linear, rk4_order, variational_vs_fd
from indefbvp.errors import ValidationError
from indefbvp.integrator import (CoverageError, MeshTooLarge, integrate, max_on_interval, rhs,
                                 step_grid)
from indefbvp.nonlinearity import DomainError


def test_free_motion_above_one(fig2n):
    # f vanishes for u >= 1, so u'' = 0 with c = 0
    p = fig2n.with_(c=0.0)
    t = integrate(p, 0.0, 1.0, 1.0, 0.3, h=2e-3)
    assert abs(t.u[-1] - 1.3) < 1e-13 and abs(t.v[-1] - 0.3) < 1e-13


def test_damped_free_motion(fig2n):
    # u'' + u' = 0 from (1, 1): u = 2 - e^{-x}
    t = integrate(fig2n, 0.0, 1.0, 1.0, 1.0, h=2e-3)
    assert abs(t.u[-1] - (2 - math.exp(-1))) < 1e-10
    assert abs(t.v[-1] - math.exp(-1)) < 1e-10


def test_truncation_below_zero(fig2n):
    # f = -u for u <= 0: u'' = u, u = -0.1 cosh x
    p = fig2n.with_(c=0.0)
    t = integrate(p, 0.0, 1.0, -0.1, 0.0, h=1e-3)
    assert abs(t.u[-1] + 0.1 * math.cosh(1)) < 1e-11


def test_damped_linear_closed_form():
    # check the oracle itself against a dense solve
    from scipy.integrate import solve_ivp
    sol = solve_ivp(lambda x, y: [y[1], -y[1] - 4 * y[0]], (0, 3), [1.0, 0.0], rtol=1e-12, atol=1e-13)
    assert np.allclose(sol.y[:, -1], damped_linear(1.0, 4.0, 3.0), atol=1e-9)


def test_rk4_order():
    res = rk4_order()
    assert res["ok"], res


def test_variational_matches_differences(fig2n):
    rel, J, F = variational_vs_fd(fig2n, 0.0, math.pi, 0.3, 0.0)
    assert rel < 1e-6
    # Liouville: det J = exp(-c L)
    assert abs(np.linalg.det(J) - math.exp(-math.pi)) < 1e-6


def test_grid_hits_breakpoints(fig2n):
    x = integrate(fig2n, 0.0, 2 * math.pi, 0.4, 0.0, h=0.05).x
    tau = math.acos(0.25)
    for b in fig2n.breakpoints(0.0, 2 * math.pi):
        assert np.min(np.abs(x - b)) < 1e-13
    for b in (tau, math.pi, math.pi + tau):
        assert np.min(np.abs(x - b)) < 1e-10


def test_no_step_straddles_a_sign_change(fig2n):
    x, A0, Am, A1 = step_grid(fig2n, 0.0, math.pi, 0.01)
    assert np.all(A0 * Am >= -1e-7) and np.all(A1 * Am >= -1e-7)
    assert np.all(np.diff(x) <= 0.01 + 1e-15)


def test_adaptive_error_estimate(fig2n):
    t = integrate(fig2n, 0.0, math.pi, 0.3, 0.0, tol=1e-10)
    ref = integrate(fig2n, 0.0, math.pi, 0.3, 0.0, h=1e-4)
    assert t.err_est < 1e-10
    assert abs(t.u[-1] - ref.u[-1]) < 1e-9


def test_raw_mode_refuses_to_leave_unit_interval(fig2n):
    p = fig2n.with_(truncated=False)
    with pytest.raises(DomainError):
        integrate(p, 0.0, 3.0, 0.9, 2.0, h=1e-2)
    with pytest.raises(DomainError):
        rhs(0.1, 1.5, 0.0, p)


def test_input_validation(fig2n):
    with pytest.raises(ValidationError):
        integrate(fig2n, 1.0, 1.0, 0.1, 0.0)
    with pytest.raises(ValidationError):
        integrate(fig2n, 0.0, 1.0, 0.1, 0.0, h=-1.0)


def test_mesh_cap(fig2n):
    with pytest.raises(MeshTooLarge):
        integrate(fig2n.with_(mu=1e30), 0.0, math.pi, 0.1, 0.0, h=2e-3)


def test_max_on_interval_parabola():
    x = np.linspace(0, math.pi, 41)
    xm, um = max_on_interval(x, np.sin(x), (0.0, math.pi))
    assert abs(xm - math.pi / 2) < 1e-3
    assert abs(um - 1.0) < 1e-3 and um >= np.sin(x).max()
    with pytest.raises(CoverageError):
        max_on_interval(x, np.sin(x), (0.0, 4.0))

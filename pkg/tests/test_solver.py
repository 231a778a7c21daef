
import numpy as np
import pytest
from scipy.integrate import solve_ivp

from indefbvp.errors import ValidationError
from indefbvp.solver import (BoundaryCondition, SolutionProfile, StuckAtBoundary, Unclassifiable, classify,
                             minus_intervals, newton, plus_intervals, profile_distance, residual)


def _fake(maxima, x=None, u=None):
    x = np.linspace(0, 1, 11) if x is None else x
    u = np.zeros_like(x) if u is None else u
    return SolutionProfile(BoundaryCondition(), {}, x, u, np.zeros_like(x), np.empty(0), None, 0.0,
                           list(maxima), [0.0] * len(maxima))


def _reference(params, x_end, u0, v0, xs):
    """Independent piecewise DOP853 solve across the weight breakpoints."""
    def f(x, y):
        a = float(params.a_lm(np.array([x]))[0])
        u = min(max(y[0], 0.0), 1.0)
        return [y[1], -params.c * y[1] - a * float(params.g(np.array([u]))[0])]
    bps = params.breakpoints(0.0, x_end)
    y, out = [u0, v0], []
    for a, b in zip(bps[:-1], bps[1:]):
        sol = solve_ivp(f, (a, b), y, method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
        sel = xs[(xs >= a) & (xs <= b)]
        out.append(np.column_stack([sel, sol.sol(sel)[0]]))
        y = sol.y[:, -1]
    return np.concatenate(out)


def test_bc_validation():
    with pytest.raises(ValidationError):
        BoundaryCondition("robin")
    with pytest.raises(ValidationError):
        BoundaryCondition("neumann", 2)
    assert BoundaryCondition("periodic", 3).span(2.0) == (0.0, 6.0)


@pytest.mark.parametrize("kind,y0", [("neumann", [0.0]), ("neumann", [1.0]), ("periodic", [0.0, 0.0]),
                                     ("periodic", [1.0, 0.0]), ("dirichlet", [0.0])])
def test_residual_vanishes_on_constant_equilibria(fig2n, kind, y0):
    assert np.max(np.abs(residual(BoundaryCondition(kind), y0, fig2n))) < 1e-15


@pytest.mark.parametrize("seed", [0.0, 1.0])
def test_newton_rejects_constant_equilibria(fig2n, seed):
    with pytest.raises(StuckAtBoundary):
        newton(BoundaryCondition("neumann"), [seed], fig2n)


@pytest.mark.parametrize("which", ["two_neumann", "two_periodic"])
def test_two_solutions_against_independent_integrator(request, which):
    small, large = request.getfixturevalue(which)
    params = request.getfixturevalue("fig2n" if which == "two_neumann" else "fig2p")
    for prof in (small, large):
        assert prof.residual < 1e-8
        xs = prof.x[:: max(1, len(prof.x) // 400)]
        ref = _reference(params, prof.x[-1], prof.u[0], prof.v[0], xs)
        assert np.max(np.abs(np.interp(ref[:, 0], prof.x, prof.u) - ref[:, 1])) < 1e-6
    assert small.sup < 0.5 < large.sup < 1


def test_neumann_ends_are_flat(two_neumann):
    for p in two_neumann:
        assert abs(p.v[0]) < 1e-12 and abs(p.v[-1]) < 1e-8


def test_periodic_closes(two_periodic):
    for p in two_periodic:
        assert abs(p.u[-1] - p.u[0]) < 1e-8 and abs(p.v[-1] - p.v[0]) < 1e-8


def test_classify_bands():
    bands = (0.05, 0.5, 0.99)
    assert classify(_fake([0.01, 0.3, 0.7]), bands) == (0, 1, 2)
    for bad in ([0.05 + 1e-8], [0.995], [0.5]):
        with pytest.raises(Unclassifiable):
            classify(_fake(bad), bands)


def test_profile_distance():
    x = np.linspace(0, 1, 101)
    a, b = _fake([], x, x.copy()), _fake([], x, x + 0.25)
    assert profile_distance(a, b) == pytest.approx(0.25)
    c = _fake([], np.linspace(0, 1, 57), np.linspace(0, 1, 57) ** 2)
    assert profile_distance(a, c) == pytest.approx(0.25, abs=1e-6)


def test_interval_lists(fig1):
    assert len(plus_intervals(fig1, BoundaryCondition("neumann"))) == 3
    assert len(plus_intervals(fig1, BoundaryCondition("periodic", 2))) == 6
    assert len(minus_intervals(fig1, BoundaryCondition("neumann"))) == 2

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from indefbvp.integrator import ProblemParams
from indefbvp.solver import BoundaryCondition, SolutionProfile
from indefbvp.stability import convexity_bound, fd_principal_eigenvalue, principal_eigenvalue
from indefbvp.sweep import shrink, sweep
from indefbvp.errors import ValidationError
from indefbvp.weight import Piece, WeightSpec


def _zero_profile(L, kind):
    x = np.linspace(0, L, 2001)
    z = np.zeros_like(x)
    return SolutionProfile(BoundaryCondition(kind), {}, x, z, z.copy(), np.empty(0), None, 0.0, [], [])


@pytest.fixture(scope="module")
def step(g_hap):
    # a = +1 on [0, 1), -1 on [1, 2)
    w = WeightSpec(2.0, [Piece(0, 1, "1"), Piece(1, 2, "-1")])
    return ProblemParams(0.0, 3.0, 3.0, w, g_hap)


def _step_neumann_nu0(lam):
    # cos(k1 x) on [0,1], cosh(k2 (2-x)) on [1,2]; match w'/w at x = 1
    f = lambda nu: math.sqrt(nu + lam) * math.tan(math.sqrt(nu + lam)) - \
        math.sqrt(lam - nu) * math.tanh(math.sqrt(lam - nu))
    return brentq(f, -lam + 1e-12, min(lam, (math.pi / 2) ** 2 - lam) - 1e-9, xtol=1e-14)


def test_zero_state_neumann_step_weight(step):
    # g'(0) = 1 for the haploid g, so the potential is a_lm itself
    want = _step_neumann_nu0(3.0)
    res = principal_eigenvalue(_zero_profile(2.0, "neumann"), step, h=1e-3)
    assert abs(res.nu0 - want) < 1e-7
    assert res.label == ("stable" if want >= 0 else "unstable") and res.eigenfunction_positive
    assert abs(fd_principal_eigenvalue(_zero_profile(2.0, "neumann"), step, n=4000) - want) < 1e-5


@pytest.mark.parametrize("c", [0.0, 0.8])
def test_zero_state_dominant(fig2n, c):
    # g'(0) = 0: the linearisation at u = 0 is w'' + c w' + nu w = 0
    p = fig2n.with_(c=c)
    assert abs(principal_eigenvalue(_zero_profile(math.pi, "neumann"), p).nu0) < 1e-7
    d = principal_eigenvalue(_zero_profile(math.pi, "dirichlet"), p).nu0
    assert abs(d - (1 + c * c / 4)) < 1e-7
    per = principal_eigenvalue(_zero_profile(math.pi, "periodic"), p)
    assert abs(per.nu0) < 1e-7 and per.method == "hill_discriminant"


def test_fd_second_order(step):
    want = _step_neumann_nu0(3.0)
    prof = _zero_profile(2.0, "neumann")
    e1 = abs(fd_principal_eigenvalue(prof, step, n=500) - want)
    e2 = abs(fd_principal_eigenvalue(prof, step, n=1000) - want)
    assert 3.0 < e1 / e2 < 5.0


@pytest.mark.parametrize("which", ["two_neumann", "two_periodic"])
def test_shooting_matches_fd(request, which):
    params = request.getfixturevalue("fig2n" if which == "two_neumann" else "fig2p")
    for prof in request.getfixturevalue(which):
        nu = principal_eigenvalue(prof, params).nu0
        fd = fd_principal_eigenvalue(prof, params)
        assert abs(nu - fd) <= 1e-4 * (1 + abs(nu))


def test_convention_tag(two_neumann, fig2n):
    assert principal_eigenvalue(two_neumann[0], fig2n).convention == "extended"
    p0 = fig2n.with_(c=0.0)
    assert principal_eigenvalue(_zero_profile(math.pi, "neumann"), p0).convention == "self_adjoint"


def test_convexity_bound(g_dom, g_hap):
    assert abs(convexity_bound(g_dom) - 1 / 3) < 1e-3
    assert convexity_bound(g_hap) == 0.0


def test_shrink():
    assert shrink((0.0, 1.0)) == (0.05, 0.95)


def test_sweep_short(fig2n):
    res = sweep(fig2n, [12, 30, 100], "mu", BoundaryCondition("neumann"))
    ms = res.column("minus_sups")
    assert np.all(np.diff(ms) < 0)
    assert all(s.residual < 1e-8 and s.sup_norm > 0.5 for s in res.steps)
    assert res.to_dict()["values"] == [12.0, 30.0, 100.0]
    with pytest.raises(ValidationError):
        sweep(fig2n, [12, 10], "mu")
    with pytest.raises(ValidationError):
        sweep(fig2n, [12, 30], "lam")

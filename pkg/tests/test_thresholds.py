import math

import pytest
from hypothesis import given, settings, strategies as st

from indefbvp.errors import ValidationError
from indefbvp.integrator import ProblemParams
from indefbvp.nonlinearity import G0Required, make_builtin
from indefbvp.thresholds import (Geometry, PreconditionViolated, R_bar, R_eps, ThresholdSet, _rbar_bound, auto_r_R,
                                 compute_thresholds, lambda_star, lambda_star_at, mu_star, r_bar)
from indefbvp.weight import figure2_weight

TAU = math.acos(0.25)
F = lambda x: -math.cos(2 * x) + math.cos(x)   # antiderivative of the [0, pi] weight
NP = 9 / 8


@pytest.fixture(scope="module")
def ts12(fig2n):
    return compute_thresholds(fig2n, 0.5)


@pytest.mark.parametrize("c", [0.0, 1.0, -0.7])
@pytest.mark.parametrize("eps", [0.01, 0.1, 0.4])
def test_lambda_star_candidate_closed_form(g_dom, c, eps):
    p = ProblemParams(c, 12.0, 12.0, figure2_weight(), g_dom)
    rho, L = 0.5, TAU
    delta = eps / (eps + math.exp(2 * abs(c) * L) * L)
    eta = (delta * rho) ** 2 * (1 - delta * rho)   # u^2(1-u) increases on [0, 2/3]
    si = F(L - eps) - F(eps)
    want = rho * (eps * abs(c) + 2 * math.exp(abs(c) * L)) / (eps * eta * si)
    dl, et, sh, cand = lambda_star_at(rho, p, eps)
    assert abs(dl[0] / delta - 1) < 1e-9   # sign change located to ~1e-11
    assert abs(sh[0] / si - 1) < 1e-10
    assert abs(cand[0] / want - 1) < 1e-8


def test_lambda_star_inadmissible_eps(fig2n):
    assert lambda_star_at(0.5, fig2n, TAU / 2 + 1e-3) is None


def test_lambda_star_minimises_grid(fig2n):
    cert = lambda_star(0.5, fig2n)
    vals = [v for _, v in cert.eps_table if v is not None]
    assert cert.lambda_star == min(vals)
    with pytest.raises(ValidationError):
        lambda_star(1.5, fig2n)


@pytest.mark.parametrize("lam", [1.0, 12.0, 500.0])
def test_r_bar_quadratic_root(fig2n, lam):
    # zeta(r) = r(1-r) for logistic_dominant; J = |I+| + |I-| = pi on the Neumann layout
    b = 1 / (2 * lam * math.exp(math.pi) * math.pi * NP)
    p = fig2n.with_(lam=lam)
    assert abs(_rbar_bound(p, lam, Geometry(p)) / b - 1) < 1e-10
    bb = b / (1 + 1e-9)
    want = (1 - math.sqrt(1 - 4 * bb)) / 2
    assert abs(r_bar(p, lam) / want - 1) < 1e-8


def test_r_bar_periodic_wraps(fig2p):
    J = TAU + 2 * (math.pi - TAU)
    b = 1 / (2 * 12 * math.exp(J) * J * NP)
    assert abs(_rbar_bound(fig2p, 12.0, Geometry(fig2p)) / b - 1) < 1e-10


def test_r_bar_requires_g0(fig2n, g_hap):
    with pytest.raises(G0Required):
        r_bar(fig2n.with_(g=g_hap), 12.0)


def test_R_eps_plug_in():
    K, eps, c, J, b = 1.01, 0.2, 0.5, 1.3, 2.0
    want = 1 - eps * math.exp(-(K * b + 2 * J) / 2)
    assert abs(R_eps(eps, c, J_length=J, b_L1=b, K=K) - want) < 1e-15


def test_R_bar_closed_form(fig2n):
    K = 1.01
    Lm = math.pi - TAU
    eps = 0.5 / (1 + Lm * math.exp(Lm))
    want = 1 - eps * math.exp(-(K * 12 * NP + 3 * TAU) / 2)
    assert abs(R_bar(0.5, fig2n, K=K) - want) < 1e-12


def test_auto_policy():
    assert auto_r_R(0.5, 1e-3, 0.9) == (1e-3, 0.9)
    assert auto_r_R(0.5, 1.0, 0.2) == (0.05, 0.75)
    assert auto_r_R(0.5, 1.0, 0.999999)[1] == 1 - 1e-4


def test_mu_star_preconditions(fig2n):
    with pytest.raises(PreconditionViolated):
        mu_star(12.0, 0.6, 0.5, 0.9, fig2n)
    with pytest.raises(PreconditionViolated):
        mu_star(12.0, 0.01, 0.5, 0.9, fig2n, checks=dict(r_bar=1e-3))
    led = mu_star(12.0, 0.01, 0.5, 0.9, fig2n, strict=False, checks=dict(r_bar=1e-3))
    assert led.violations and "r_bar" in led.violations[0]


def test_mu_star_c0_terms(fig2n, g_dom):
    # at c = 0 the exponentials drop out
    p = fig2n.with_(c=0.0)
    r, rho, R = 0.01, 0.5, 0.9
    led = mu_star(12.0, r, rho, R, p)
    geo = Geometry(p)
    s = led.stats
    assert abs(led.mu_hat_r[0] - 2 * R / (r * s["gamma_r"] * geo.Ar(0))) < 1e-9 * led.mu_hat_r[0]
    U = geo.Lp(0) + geo.Lm(0)
    want = 12 * NP * s["Gamma_R"] * U / (geo.Ar(0) * s["chi_rhoR"])
    assert abs(led.mu_check_r[0] / want - 1) < 1e-12
    assert led.mu_tilde_r == [None] and led.mu_star_plus == [None]   # no neighbour on [0, pi] Neumann
    assert led.mu_star == max(led.mu_H1, led.mu_H3)
    assert led.mu_H3 >= led.mu_sharp


def test_mu_star_scaling(fig2n):
    a = mu_star(12.0, 0.01, 0.5, 0.9, fig2n)
    b = mu_star(12.0, 0.01, 0.5, 0.9, fig2n.with_(lam=24.0))
    assert abs(b.mu_hat_r[0] / a.mu_hat_r[0] - 1) < 1e-14        # independent of lambda
    c = mu_star(24.0, 0.01, 0.5, 0.9, fig2n.with_(lam=24.0))
    assert abs(c.mu_check_r[0] / a.mu_check_r[0] - 2) < 1e-12    # linear in lambda


# frozen regression anchors for the [0, pi] weight, c = 1, rho = 0.5
ANCHORS = [
    ("neumann", 12, 195508.35619177905, 4664682933.656721, 0.0005097197175364289),
    ("neumann", 30, 195508.35619177905, 72907977513.33891, 0.0002038255061753611),
    ("periodic", 12, 195508.35619177905, 447119339759.57446, 5.205127372685578e-05),
    ("periodic", 20, 195508.35619177905, 2070040045311.9587, 3.123011395507317e-05),
    ("periodic", 30, 195508.35619177905, 6986457885248.398, 2.0819859223241755e-05),
]


@pytest.mark.parametrize("bc,lam,ls,ms,rb", ANCHORS)
def test_frozen_anchors(g_dom, bc, lam, ls, ms, rb):
    p = ProblemParams(1.0, float(lam), float(lam), figure2_weight(bc), g_dom)
    t = compute_thresholds(p, 0.5)
    assert abs(t.lambda_star.lambda_star / ls - 1) < 1e-9
    assert abs(t.ledger.mu_star / ms - 1) < 1e-9
    assert abs(t.r_bar / rb - 1) < 1e-9
    assert t.R == 1 - 1e-4
    assert abs(t.mu_sharp - 0.36 * lam) < 1e-9


def test_threshold_set_dict_round_trip(ts12):
    back = ThresholdSet.from_dict(ts12.to_dict())
    assert back.to_dict() == ts12.to_dict()
    assert back.bands == ts12.bands


def test_precondition_report(ts12):
    v = " ".join(ts12.ledger.violations)
    assert "R_bar" in v and "lambda_star" in v


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.95))
def test_lambda_star_haploid_closed_form(rho):
    p = ProblemParams(0.0, 1.0, 1.0, figure2_weight(), make_builtin("logistic_haploid"))
    a = lambda_star(rho, p, eps_grid=[0.1]).lambda_star
    # haploid, c = 0: eta = min of u(1-u) over [delta rho, rho]
    delta = 0.1 / (0.1 + TAU)
    si = F(TAU - 0.1) - F(0.1)
    want = 2 * rho / (0.1 * si * min(delta * rho * (1 - delta * rho), rho * (1 - rho)))
    assert abs(a / want - 1) < 1e-8

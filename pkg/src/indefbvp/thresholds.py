"""Explicit thresholds: lambda*(rho), mu#, r_bar, R_eps, R_bar and the mu* ledger."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field

import numpy as np

from .errors import ValidationError, NumericalError
from .nonlinearity import zeta, gamma, Gamma, chi, lipschitz_at_one, G0Required
from .weight import quadratures, mu_sharp, integral


class NoAdmissibleEpsilon(NumericalError):
    pass


class PreconditionViolated(ValidationError):
    pass


class Geometry:
    """Lengths and norms of the nodal intervals with the index conventions of the ledger.

    Periodic profiles wrap indices modulo m; otherwise a missing neighbour is None
    and the terms that need it are dropped.
    """

    def __init__(self, params, quad=None, quad_tol=1e-10):
        self.params = params
        d = params.decomp
        self.d, self.m, self.cyclic = d, d.m, d.cyclic
        self.q = quad or quadratures(params.weight, d, quad_tol)

    def _wrap(self, i, minus=False):
        if self.cyclic:
            return i % self.m
        if minus and i == -1 and self.d.minus_before(0) is not None:
            return -1
        return i if 0 <= i < self.m else None

    def Lp(self, i):
        j = self._wrap(i)
        if j is None:
            return None
        a, b = self.d.plus[j]
        return b - a

    def Np(self, i):
        j = self._wrap(i)
        return None if j is None else self.q.plus_L1[j]

    def _minus(self, i, attr, lead):
        j = self._wrap(i, minus=True)
        if j is None:
            return None
        if j == -1:
            v = getattr(self.q, lead)
        else:
            v = getattr(self.q, attr)[j]
        return None if v is None or math.isnan(v) else v

    def Im(self, i):
        j = self._wrap(i, minus=True)
        if j is None:
            return None
        return self.d.minus_before(0) if j == -1 else self.d.minus_after(j)

    def Lm(self, i):
        I = self.Im(i)
        return None if I is None else I[1] - I[0]

    def Nm(self, i):
        return self._minus(i, "minus_L1", "minus_before_L1")

    def Ar(self, i):
        return self._minus(i, "A_r_L1", "A_r_before_L1")

    def Al(self, i):
        return self._minus(i, "A_l_L1", "A_l_before_L1")


def _ok(*xs):
    return all(x is not None for x in xs)


@dataclass
class LambdaStarCert:
    rho: float
    epsilon: float
    delta: list
    eta: list
    shrunk_integral: list
    candidates: list
    lambda_star: float
    eps_table: list = field(default_factory=list)


def lambda_star_at(rho, params, eps, geo=None, grid_n=4096):
    """Per-interval lambda* candidates at one epsilon (None if inadmissible)."""
    geo = geo or Geometry(params)
    c, g = abs(params.c), params.g
    delta, eta, sh, cand = [], [], [], []
    for i in range(geo.m):
        s, t = geo.d.plus[i]
        L = t - s
        if not eps < L / 2:
            return None
        si = integral(params.weight, s + eps, t - eps, "a")
        if si <= 0:
            return None
        dl = eps / (eps + math.exp(2 * c * L) * L)
        et = chi(g, dl * rho, rho, grid_n)
        delta.append(dl); eta.append(et); sh.append(si)
        cand.append(rho * (eps * c + 2 * math.exp(c * L)) / (eps * et * si))
    return delta, eta, sh, cand


def lambda_star(rho, params, eps_grid=None, grid_n=4096, geo=None) -> LambdaStarCert:
    if not 0 < rho < 1:
        raise ValidationError("rho must lie in (0, 1)")
    geo = geo or Geometry(params)
    lmin = min(b - a for a, b in geo.d.plus)
    if eps_grid is None:
        eps_grid = [lmin / 2 ** k for k in range(1, 13)]
    best, table = None, []
    for eps in eps_grid:
        res = lambda_star_at(rho, params, eps, geo, grid_n)
        if res is None:
            table.append((eps, None))
            continue
        ls = max(res[3])
        table.append((eps, ls))
        if best is None or ls < best[1]:
            best = (eps, ls, res)
    if best is None:
        raise NoAdmissibleEpsilon("no epsilon in the grid satisfies the shrink constraints")
    eps, ls, (dl, et, sh, cand) = best
    return LambdaStarCert(rho, eps, dl, et, sh, cand, ls, table)


def _rbar_bound(params, lam, geo):
    c = abs(params.c)
    worst = 0.0
    for i in range(geo.m):
        J = geo.Lp(i) + (geo.Lm(i - 1) or 0.0) + (geo.Lm(i) or 0.0)
        worst = max(worst, math.exp(c * J) * J * geo.Np(i))
    return 1.0 / (2 * lam * worst)


def r_bar(params, lam, geo=None, grid_n=4096) -> float:
    """Largest r with zeta(s) < bound for all s in (0, r], located by bisection."""
    g = params.g
    if not g.has_g0:
        raise G0Required("r_bar needs g(u)/u -> 0 at zero")
    geo = geo or Geometry(params)
    bound = _rbar_bound(params, lam, geo)
    z = lambda r: zeta(g, r, grid_n)
    grid = np.geomspace(1e-14, 1 - 1e-9, 600)
    prev = None
    for r in grid:
        if not z(r) < bound:
            break
        prev = r
    else:
        return float(grid[-1])
    if prev is None:
        raise NumericalError("zeta exceeds the r_bar bound even at r = 1e-14")
    lo, hi = prev, r
    for _ in range(200):
        if hi - lo <= 1e-15 * hi:
            break
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if z(mid) < bound else (lo, mid)
    return float(lo)


def R_eps(eps, c, g=None, J_length=0.0, b_L1=0.0, K=None) -> float:
    """1 - eps * exp(-(K b + (1 + 2|c|) |J|) / 2)."""
    if K is None:
        K = lipschitz_at_one(g)
    return 1.0 - eps * math.exp(-(K * b_L1 + (1 + 2 * abs(c)) * J_length) / 2)


def R_bar(d, params, geo=None, K=None) -> float:
    if not 0 < d < 1:
        raise ValidationError("R_bar needs d in (0, 1)")
    geo = geo or Geometry(params)
    c = abs(params.c)
    K = lipschitz_at_one(params.g) if K is None else K
    mx = max(geo.Lm(i) * math.exp(c * geo.Lm(i)) for i in range(-1, geo.m) if geo.Lm(i) is not None)
    eps = (1 - d) / (1 + mx)
    return max(R_eps(eps, c, J_length=geo.Lp(i), b_L1=params.lam * geo.Np(i), K=K) for i in range(geo.m))


@dataclass
class MuStarLedger:
    lam: float
    r: float
    rho: float
    R: float
    mu_hat_r: list
    mu_hat_l: list
    mu_check_r: list
    mu_tilde_r: list
    mu_tilde_l: list
    mu_star_plus: list
    mu_star_minus: list
    mu_bar: list
    mu_sharp: float
    mu_H1: float
    mu_H3_1: float
    mu_H3_2: float
    mu_H3: float
    mu_star: float
    stats: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _mx(xs):
    xs = [x for x in xs if x is not None]
    return max(xs) if xs else 0.0


def mu_star(lam, r, rho, R, params, geo=None, grid_n=4096, strict=True, checks=None) -> MuStarLedger:
    """The full mu*(lambda, r, R) ledger.

    checks: optional dict with precomputed r_bar, R_bar, lambda_star used for the
    precondition report; strict raises on the first violated inequality.
    """
    if not 0 < r < rho < R < 1:
        raise PreconditionViolated(f"need 0 < r < rho < R < 1 (got r={r}, rho={rho}, R={R})")
    geo = geo or Geometry(params)
    viol = []
    if checks:
        if "r_bar" in checks and not r <= checks["r_bar"]:
            viol.append(f"r <= r_bar ({r:.6g} > {checks['r_bar']:.6g})")
        if "R_bar" in checks and not R >= checks["R_bar"]:
            viol.append(f"R >= R_bar(rho) ({R:.6g} < {checks['R_bar']:.6g})")
        if "lambda_star" in checks and not lam > checks["lambda_star"]:
            viol.append(f"lambda > lambda_star(rho) ({lam:.6g} <= {checks['lambda_star']:.6g})")
    if strict and viol:
        raise PreconditionViolated("; ".join(viol))
    g, c, e = params.g, abs(params.c), math.exp
    zr, gr, GR = zeta(g, r, grid_n), gamma(g, r, grid_n), Gamma(g, R, grid_n)
    chi_rR, chi_pR = chi(g, r, R, grid_n), chi(g, rho, R, grid_n)
    Lp, Np, Lm, Nm, Ar, Al = geo.Lp, geo.Np, geo.Lm, geo.Nm, geo.Ar, geo.Al
    hr, hl, ck, tr, tl, sp_, sm, br = ([] for _ in range(8))
    for i in range(geo.m):
        hr.append(2 * R * e(c * Lm(i)) / (r * gr * Ar(i)) if _ok(Lm(i), Ar(i)) else None)
        hl.append(2 * R * e(c * Lm(i - 1)) / (r * gr * Al(i - 1)) if _ok(Lm(i - 1), Al(i - 1)) else None)
        if _ok(Lm(i), Ar(i)):
            U = Lp(i) + Lm(i)
            ck.append(lam * Np(i) * GR * e(c * U) * U / (Ar(i) * chi_pR * e(-c * Lm(i))))
            br.append(lam * Np(i) * GR * e(2 * c * U) * U / (Ar(i) * chi_rR))
        else:
            ck.append(None); br.append(None)
        if _ok(Lm(i), Nm(i), Lp(i + 1)):
            tr.append(2 * lam * (Np(i) * zr * r * e(c * (Lp(i) + Lm(i) + Lp(i + 1)))
                                 + Np(i + 1) * GR * e(c * Lp(i + 1)))
                      / (gr * r * Nm(i) * e(-c * (Lm(i) + Lp(i + 1)))))
        else:
            tr.append(None)
        if _ok(Lm(i - 1), Nm(i - 1), Lp(i - 1)):
            tl.append(2 * lam * (Np(i) * zr * r * e(c * (Lp(i - 1) + Lm(i - 1) + Lp(i)))
                                 + Np(i - 1) * GR * e(c * Lp(i - 1)))
                      / (gr * r * Nm(i - 1) * e(-c * (Lm(i - 1) + Lp(i - 1)))))
        else:
            tl.append(None)
        sp_.append(lam * Np(i + 2) * GR * e(2 * c * (Lm(i + 1) + Lp(i + 2))) / (Nm(i + 1) * chi_rR)
                   if _ok(Lm(i + 1), Nm(i + 1), Lp(i + 2)) else None)
        sm.append(lam * Np(i - 2) * GR * e(2 * c * (Lp(i - 2) + Lm(i - 2))) / (Nm(i - 2) * chi_rR)
                  if _ok(Lp(i - 2), Lm(i - 2), Nm(i - 2)) else None)
    ms = mu_sharp(geo.d, geo.q, lam)
    H1 = _mx(hr + hl + ck)
    H31 = _mx(hr + hl + tr + tl + sp_ + sm)
    H32 = _mx(br)
    H3 = max(H31, H32, ms)
    stats = dict(zeta_r=zr, gamma_r=gr, Gamma_R=GR, chi_rR=chi_rR, chi_rhoR=chi_pR)
    return MuStarLedger(lam, r, rho, R, hr, hl, ck, tr, tl, sp_, sm, br, ms, H1, H31, H32, H3, max(H1, H3),
                        stats, viol)


@dataclass
class ThresholdSet:
    lam: float
    rho: float
    r: float
    R: float
    mu_sharp: float
    lambda_star: LambdaStarCert
    r_bar: float
    R_bar: float
    K: float
    ledger: MuStarLedger
    overrides: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["lambda_star"] = LambdaStarCert(**d["lambda_star"])
        d["lambda_star"].eps_table = [tuple(t) for t in d["lambda_star"].eps_table]
        d["ledger"] = MuStarLedger(**d["ledger"])
        return cls(**d)

    @property
    def bands(self):
        return self.r, self.rho, self.R


def auto_r_R(rho, rbar, Rbar):
    """Policy: r = min(r_bar, rho/10), R = max(R_bar, (1 + rho)/2) capped at 1 - 1e-4."""
    return min(rbar, rho / 10), min(max(Rbar, (1 + rho) / 2), 1 - 1e-4)


def compute_thresholds(params, rho, r=None, R=None, grid_n=4096) -> ThresholdSet:
    """Pipeline: every constant at (lambda, rho); r/R default to the auto policy."""
    geo = Geometry(params)
    lam = params.lam
    K = lipschitz_at_one(params.g)
    ls = lambda_star(rho, params, grid_n=grid_n, geo=geo)
    rb = r_bar(params, lam, geo, grid_n) if params.g.has_g0 else float("nan")
    Rb = R_bar(rho, params, geo, K)
    ar, aR = auto_r_R(rho, rb if rb == rb else rho / 10, Rb)
    over = {}
    if r is not None:
        over["r"] = r
    if R is not None:
        over["R"] = R
    r = ar if r is None else r
    R = aR if R is None else R
    led = mu_star(lam, r, rho, R, params, geo, grid_n, strict=False,
                  checks=dict(r_bar=rb, R_bar=Rb, lambda_star=ls.lambda_star))
    return ThresholdSet(lam, rho, r, R, led.mu_sharp, ls, rb, Rb, K, led, over)

"""Principal eigenvalue of w'' + c w' + (nu + a_lm(x) g'(u(x))) w = 0 along a solution.

The solution is re-integrated jointly with the linear equation, restarting u at
every multiple-shooting node so the potential matches the certified profile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from numba import njit
from scipy.interpolate import CubicHermiteSpline

from .errors import NumericalError
from .integrator import _g
from .solver import get_system


class NotConverged(NumericalError):
    pass


@dataclass
class StabilityResult:
    nu0: float
    label: str
    method: str
    convention: str
    eigenfunction_positive: bool

    def to_dict(self):
        return asdict(self)


@njit(cache=True)
def _lin_rhs(A, u, v, w0, w1, p0, p1, c, nu, kind, coef):
    g, dg = _g(kind, coef, u)
    q = nu + A * dg
    return v, -c * v - A * g, w1, -c * w1 - q * w0, p1, -c * p1 - q * p0


@njit(cache=True)
def _lin_shoot(xc, xo, Ac0, Acm, Ac1, ao, c, kind, coef, Y, nu, W0):
    """Propagate two solutions of the linear equation; return end matrix, log scale,
    unwrapped Pruefer angle and interior zero count of the first column."""
    w0 = W0[0, 0]; w1 = W0[1, 0]; p0 = W0[0, 1]; p1 = W0[1, 1]
    logs = 0.0
    psi = math.atan2(w1, w0)
    zeros = 0
    for j in range(xo.shape[0] - 1):
        u = Y[j, 0]; v = Y[j, 1]
        x = xc[xo[j]:xo[j + 1]]
        for k in range(x.shape[0] - 1):
            i = ao[j] + k
            h = x[k + 1] - x[k]
            a1, b1, c1, d1, e1, f1 = _lin_rhs(Ac0[i], u, v, w0, w1, p0, p1, c, nu, kind, coef)
            a2, b2, c2, d2, e2, f2 = _lin_rhs(Acm[i], u + .5 * h * a1, v + .5 * h * b1, w0 + .5 * h * c1,
                                              w1 + .5 * h * d1, p0 + .5 * h * e1, p1 + .5 * h * f1, c, nu, kind, coef)
            a3, b3, c3, d3, e3, f3 = _lin_rhs(Acm[i], u + .5 * h * a2, v + .5 * h * b2, w0 + .5 * h * c2,
                                              w1 + .5 * h * d2, p0 + .5 * h * e2, p1 + .5 * h * f2, c, nu, kind, coef)
            a4, b4, c4, d4, e4, f4 = _lin_rhs(Ac1[i], u + h * a3, v + h * b3, w0 + h * c3,
                                              w1 + h * d3, p0 + h * e3, p1 + h * f3, c, nu, kind, coef)
            old = w0
            u += h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
            v += h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
            w0 += h / 6 * (c1 + 2 * c2 + 2 * c3 + c4)
            w1 += h / 6 * (d1 + 2 * d2 + 2 * d3 + d4)
            p0 += h / 6 * (e1 + 2 * e2 + 2 * e3 + e4)
            p1 += h / 6 * (f1 + 2 * f2 + 2 * f3 + f4)
            if old * w0 < 0 or (w0 == 0.0 and old != 0.0):
                zeros += 1
            ang = math.atan2(w1, w0)
            d = ang - (psi - 2 * math.pi * math.floor((psi + math.pi) / (2 * math.pi)))
            if d > math.pi:
                d -= 2 * math.pi
            elif d < -math.pi:
                d += 2 * math.pi
            psi += d
            s = max(abs(w0), abs(w1), abs(p0), abs(p1))
            if s > 1e100:
                w0 /= s; w1 /= s; p0 /= s; p1 /= s
                logs += math.log(s)
    M = np.empty((2, 2))
    M[0, 0] = w0; M[1, 0] = w1; M[0, 1] = p0; M[1, 1] = p1
    return M, logs, psi, zeros


class _Lin:
    def __init__(self, profile, params, h):
        self.sys = get_system(params, profile.bc, h)
        if self.sys.n != len(profile.nodes) or not np.allclose(self.sys.mesh.nodes, profile.nodes):
            self.Y = self.sys.interpolate(profile.x, profile.u, profile.v)
        else:
            self.Y = np.ascontiguousarray(profile.Y)
        self.params, self.bc = params, profile.bc
        m = self.sys.mesh
        self.args = (m.xc, m.xo, m.Ac0, m.Acm, m.Ac1, m.ao, params.c, params.g.kind,
                     np.ascontiguousarray(params.g.coef, float), self.Y)
        x0, x1 = profile.bc.span(params.weight.period)
        self.L = x1 - x0
        q = potential(profile, params)
        self.qmin, self.qmax = float(np.min(q)), float(np.max(q))

    def shoot(self, nu, W0):
        return _lin_shoot(*self.args, float(nu), np.ascontiguousarray(W0, dtype=float))


def potential(profile, params):
    """q(x) = a_lm(x) g'(u(x)) on the profile nodes (one-sided at breakpoints ignored)."""
    return params.a_lm(profile.x) * params.g.deriv(profile.u)


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    for _ in range(200):
        if hi - lo <= tol * max(1.0, abs(lo) + abs(hi)) / 2:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return lo, hi


def principal_eigenvalue(profile, params, h=2e-3, tol=1e-8, nu_max=1e3) -> StabilityResult:
    """Sturm shooting (Neumann/Dirichlet) or Hill discriminant (periodic); nu0 < 0 means unstable."""
    lin = _Lin(profile, params, h)
    c = params.c
    lo = -lin.qmax - 1.0
    hi = -lin.qmin + (np.pi / lin.L) ** 2 + c * c / 4 + 1.0
    if lo < -nu_max or hi > nu_max:
        lo, hi = max(lo, -nu_max), min(hi, nu_max)
    kind = profile.bc.kind
    if kind in ("neumann", "dirichlet"):
        W0 = np.eye(2) if kind == "neumann" else np.array([[0.0, 1.0], [1.0, 0.0]])
        target = 0.0 if kind == "neumann" else -np.pi / 2
        F = lambda nu: lin.shoot(nu, W0)[2] - target
        if not (F(lo) > 0 > F(hi)):
            raise NotConverged(f"principal eigenvalue not bracketed in [{lo:.4g}, {hi:.4g}]")
        a, b = _bisect(F, lo, hi, tol)
        nu0 = 0.5 * (a + b)
        # the end angle can turn exponentially fast near nu0; count zeros on the stable side
        pos = lin.shoot(a, W0)[3] == 0
        method = "sturm_shoot"
    else:
        detM = math.exp(-c * lin.L)

        def D(nu):
            M, logs, _, _ = lin.shoot(nu, np.eye(2))
            if logs > 0:
                return 1.0 if np.trace(M) > 0 else -1.0
            return np.trace(M) - 1.0 - detM

        if not D(lo) > 0:
            raise NotConverged("Hill discriminant not above its periodic level at the lower bracket")
        grid = np.linspace(lo, hi, 401)
        prev = lo
        for nu in grid[1:]:
            if D(nu) <= 0:
                break
            prev = nu
        else:
            raise NotConverged(f"no periodic eigenvalue in [{lo:.4g}, {hi:.4g}]")
        a, b = _bisect(D, prev, nu, tol)
        nu0 = 0.5 * (a + b)
        M = lin.shoot(nu0, np.eye(2))[0]
        wv, vec = np.linalg.eig(M)
        e = np.real(vec[:, int(np.argmin(np.abs(wv - 1.0)))])
        if e[0] < 0:
            e = -e
        W0 = np.column_stack([e, [0.0, 1.0]])
        pos = lin.shoot(nu0, W0)[3] == 0
        method = "hill_discriminant"
    return StabilityResult(float(nu0), "stable" if nu0 >= 0 else "unstable", method,
                           "self_adjoint" if c == 0 else "extended", bool(pos))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def _cell_average(params, spl, xg, hx, x0, x1):
    """Mean of a_lm g'(u) over each FD cell, split at weight breakpoints so jumps keep second order."""
    lo = np.clip(xg - hx / 2, x0, x1)
    hi = np.clip(xg + hx / 2, x0, x1)
    edges = np.unique(np.concatenate([lo, hi, params.breakpoints(x0, x1)]))
    mid, rad = 0.5 * (edges[:-1] + edges[1:]), 0.5 * np.diff(edges)
    pts = (mid[:, None] + rad[:, None] * _GL_X[None, :]).ravel()
    vals = (params.a_lm(pts) * params.g.deriv(spl(pts))).reshape(-1, _GL_X.size)
    piece = (vals * _GL_W).sum(axis=1) * rad
    cell = np.searchsorted(lo, mid, side="right") - 1
    inside = (cell >= 0) & (mid < hi[np.clip(cell, 0, None)])
    out = np.zeros(len(xg))
    np.add.at(out, cell[inside], piece[inside])
    return out / (hi - lo)


def fd_principal_eigenvalue(profile, params, n=2000):
    """Smallest eigenvalue of -w'' - c w' - q w by second-order finite differences (oracle).

    q is averaged over each cell rather than sampled, which keeps the scheme second order
    across the jumps of the weight.
    """
    bc = profile.bc.kind
    x0, x1 = profile.x[0], profile.x[-1]
    L = x1 - x0
    o = np.argsort(profile.x, kind="stable")
    xs, keep = np.unique(profile.x[o], return_index=True)
    spl = CubicHermiteSpline(xs, profile.u[o][keep], profile.v[o][keep])
    if bc == "periodic":
        hx = L / n
        xg = x0 + hx * (np.arange(n) + 0.5)
    elif bc == "neumann":
        hx = L / (n - 1)
        xg = x0 + hx * np.arange(n)
    else:
        hx = L / (n + 1)
        xg = x0 + hx * np.arange(1, n + 1)
    q = _cell_average(params, spl, xg, hx, x0, x1)
    c = params.c
    lo_c = -1 / hx ** 2 + c / (2 * hx)   # coefficient of w_{j-1}
    hi_c = -1 / hx ** 2 - c / (2 * hx)   # coefficient of w_{j+1}
    main = 2 / hx ** 2 - q
    A = sps.lil_matrix((n, n))
    A.setdiag(main)
    A.setdiag(np.full(n - 1, lo_c), -1)
    A.setdiag(np.full(n - 1, hi_c), 1)
    if bc == "periodic":
        A[0, n - 1] = lo_c
        A[n - 1, 0] = hi_c
    elif bc == "neumann":
        A[0, 1] = lo_c + hi_c      # ghost w_{-1} = w_1
        A[n - 1, n - 2] = lo_c + hi_c
    A = A.tocsc()
    sigma = -float(np.max(q)) - 1.0
    vals = spla.eigs(A, k=1, sigma=sigma, which="LM", return_eigenvectors=False)
    return float(np.real(vals[0]))


def convexity_bound(g, n=4001):
    """Largest eps on a grid with g'' > 0 on (0, eps] (0 if g is not convex near 0)."""
    u = np.linspace(0.0, 1.0, n)
    d2 = np.gradient(g.deriv(u), u)
    bad = np.nonzero(d2[1:] <= 0)[0]
    return float(u[bad[0]]) if bad.size else 1.0

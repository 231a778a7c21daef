"""Shooting formulations, damped Newton with variational Jacobians, classification and seeds.

Newton runs on a multiple-shooting system over the Mesh nodes: unknowns are
(u, u') at every node, residuals are the segment defects plus two boundary rows.
With a single segment this is ordinary shooting.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .errors import NumericalError, ValidationError
from .integrator import Mesh, ProblemParams, _batch_end, _path, integrate, max_on_interval, step_grid


class Diverged(NumericalError):
    pass


class StuckAtBoundary(NumericalError):
    pass


class Unclassifiable(NumericalError):
    pass


BC_KINDS = ("periodic", "neumann", "dirichlet")
SATURATION = 1e-9


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str = "periodic"
    k: int = 1

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ValidationError(f"unknown boundary condition {self.kind!r}")
        if self.k < 1 or (self.kind != "periodic" and self.k != 1):
            raise ValidationError("k >= 1, and k = 1 unless periodic")

    def span(self, P):
        return 0.0, self.k * P


@dataclass
class SolutionProfile:
    bc: BoundaryCondition
    params: dict
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    nodes: np.ndarray
    Y: np.ndarray
    residual: float
    band_maxima: list
    band_argmax: list
    string: tuple | None = None
    interior: bool = True
    stability: dict | None = None
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def sup(self):
        return float(np.max(self.u))

    def distance(self, other):
        return profile_distance(self, other)


def params_snapshot(params):
    return dict(c=params.c, lam=params.lam, mu=params.mu, period=params.weight.period,
                pieces=[(p.x_start, p.x_end, p.expr) for p in params.weight.pieces],
                g=params.g.name, g_expr=params.g.expr)


def profile_distance(a, b):
    """Max-norm distance; profiles on identical grids compare node-wise, else by interpolation."""
    if a.x.shape == b.x.shape and np.allclose(a.x, b.x, atol=1e-12, rtol=0):
        return float(np.max(np.abs(a.u - b.u)))
    lo, hi = max(a.x[0], b.x[0]), min(a.x[-1], b.x[-1])
    xs = np.linspace(lo, hi, 20001)
    return float(np.max(np.abs(np.interp(xs, a.x, a.u) - np.interp(xs, b.x, b.u))))


def plus_intervals(params, bc):
    """Positivity intervals over the span, in order (k copies for periodic)."""
    d = params.decomp
    if bc.kind == "periodic":
        return [d.plus_at(i) for i in range(d.m * bc.k)]
    return list(d.plus)


def minus_intervals(params, bc):
    d = params.decomp
    if bc.kind == "periodic":
        return [d.minus_after(i) for i in range(d.m * bc.k)]
    return list(d.minus)


class ShootingSystem:
    """Multiple-shooting residual and sparse Jacobian for one (params, bc, h)."""

    def __init__(self, params: ProblemParams, bc: BoundaryCondition, h: float = 2e-3):
        self.params, self.bc, self.h = params, bc, h
        x0, x1 = bc.span(params.weight.period)
        self.mesh = Mesh(params, x0, x1, h)
        self.n = self.mesh.n
        n = self.n
        # sparsity pattern of the continuity rows
        rows, cols = [], []
        for j in range(n - 1):
            r = 1 + 2 * j if bc.kind != "periodic" else 2 * j
            for a in range(2):
                for b in range(2):
                    rows.append(r + a); cols.append(2 * j + b)
                rows.append(r + a); cols.append(2 * j + 2 + a)
        self._rows, self._cols = np.array(rows), np.array(cols)

    def evaluate(self, Y, jac=True, trunc=True):
        n, kind = self.n, self.bc.kind
        E, J = self.mesh.flows(Y, trunc)
        D = E - Y[1:]
        F = np.empty(2 * n)
        if kind == "periodic":
            F[:2 * (n - 1)] = D.ravel()
            F[-2:] = Y[-1] - Y[0]
        else:
            c = 1 if kind == "neumann" else 0
            F[0] = Y[0, c]
            F[1:2 * n - 1] = D.ravel()
            F[-1] = Y[-1, c]
        if not jac:
            return F, None
        vals = np.empty((n - 1, 2, 3))
        vals[:, :, :2] = J
        vals[:, :, 2] = -1.0
        data = [vals.ravel()]
        rows, cols = [self._rows], [self._cols]
        if kind == "periodic":
            rows.append(np.array([2 * n - 2, 2 * n - 2, 2 * n - 1, 2 * n - 1]))
            cols.append(np.array([2 * n - 2, 0, 2 * n - 1, 1]))
            data.append(np.array([1.0, -1.0, 1.0, -1.0]))
        else:
            c = 1 if kind == "neumann" else 0
            rows.append(np.array([0, 2 * n - 1])); cols.append(np.array([c, 2 * n - 2 + c]))
            data.append(np.array([1.0, 1.0]))
        Jm = sps.csc_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(2 * n, 2 * n))
        return F, Jm

    def propagate(self, y0):
        """Node values of the single trajectory from initial data y0 (truncated flow)."""
        Y = np.zeros((self.n, 2))
        Y[0] = y0
        for j in range(self.n - 1):
            E, _ = self.mesh.flows(np.vstack([Y[j:j + 1], Y[j:j + 1]]))
            Y[j + 1] = E[0]
        return Y

    def interpolate(self, x, u, v):
        """Node values from a dense profile (periodic wrap on the span)."""
        x0, x1 = self.bc.span(self.params.weight.period)
        nodes = self.mesh.nodes
        if self.bc.kind == "periodic":
            L = x1 - x0
            xs = np.mod(np.asarray(x) - x0, L) + x0
            o = np.argsort(xs, kind="stable")
            xs, u, v = xs[o], np.asarray(u)[o], np.asarray(v)[o]
            xs = np.concatenate([xs[-1:] - L, xs, xs[:1] + L])
            u = np.concatenate([u[-1:], u, u[:1]]); v = np.concatenate([v[-1:], v, v[:1]])
        else:
            xs = np.asarray(x)
        return np.column_stack([np.interp(nodes, xs, u), np.interp(nodes, xs, v)])


_SYSTEMS = {}


def get_system(params, bc, h=2e-3):
    key = (id(params), bc, h)
    s = _SYSTEMS.get(key)
    if s is None or s.params is not params:
        if len(_SYSTEMS) > 64:
            _SYSTEMS.clear()
        s = _SYSTEMS[key] = ShootingSystem(params, bc, h)
    return s


def residual(bc: BoundaryCondition, y0, params: ProblemParams, h: float = 2e-3):
    """Single-shooting residual on the span with the truncated right-hand side."""
    x0, x1 = bc.span(params.weight.period)
    if bc.kind == "neumann":
        y = (float(np.ravel(y0)[0]), 0.0)
    elif bc.kind == "dirichlet":
        y = (0.0, float(np.ravel(y0)[-1]))
    else:
        y = tuple(float(t) for t in np.ravel(y0)[:2])
    tr = integrate(params.with_(truncated=True), x0, x1, y[0], y[1], h=h)
    if bc.kind == "neumann":
        return np.array([tr.v[-1]])
    if bc.kind == "dirichlet":
        return np.array([tr.u[-1]])
    return np.array([tr.u[-1] - y[0], tr.v[-1] - y[1]])


def _as_nodes(sys, seed):
    if isinstance(seed, SolutionProfile):
        return sys.interpolate(seed.x, seed.u, seed.v)
    seed = np.asarray(seed, dtype=float)
    if seed.ndim == 2 and seed.shape == (sys.n, 2):
        return seed.copy()
    if seed.ndim == 2 and seed.shape[0] == 3:  # (x, u, v) rows
        return sys.interpolate(*seed)
    flat = np.ravel(seed)
    if sys.bc.kind == "neumann":
        return sys.propagate((flat[0], 0.0))
    if sys.bc.kind == "dirichlet":
        return sys.propagate((0.0, flat[-1]))
    return sys.propagate((flat[0], flat[1] if flat.size > 1 else 0.0))


def newton(bc, seed, params, newton_tol=1e-10, max_iter=50, h=2e-3, halvings=8, system=None,
           bands=None, margin=1e-6):
    """Damped Newton; on success certify in raw mode and measure band maxima."""
    sys = system or get_system(params, bc, h)
    Y = _as_nodes(sys, seed)
    nf = np.inf
    for it in range(max_iter + 1):
        F, Jm = sys.evaluate(Y)
        nf = float(np.max(np.abs(F)))
        if not np.isfinite(nf):
            raise Diverged("non-finite residual")
        if nf < newton_tol:
            break
        if it == max_iter:
            raise Diverged(f"residual {nf:.3e} after {max_iter} iterations")
        try:
            d = spla.splu(Jm).solve(-F).reshape(-1, 2)
        except RuntimeError as exc:
            raise Diverged(f"singular Jacobian: {exc}") from exc
        t = 1.0
        for _ in range(halvings):
            F2, _ = sys.evaluate(Y + t * d, jac=False)
            if np.max(np.abs(F2)) < nf:
                break
            t *= 0.5
        Y = Y + t * d
    return certify(sys, Y, nf, it, bands, margin)


def certify(sys, Y, res, it, bands=None, margin=1e-6):
    params, bc = sys.params, sys.bc
    x, u, v = sys.mesh.paths(Y, trunc=False)
    umin, umax = float(np.min(u)), float(np.max(u))
    if umax < 1e-8 or umin > 1 - 1e-8:
        raise StuckAtBoundary("converged to a constant equilibrium")
    inner = u[1:-1] if bc.kind == "dirichlet" else u
    # 1 - u can fall below double precision when lambda is large; allow round-off above 1
    interior = bool(np.min(inner) > 0 and umax < 1 + SATURATION)
    if not interior:
        raise StuckAtBoundary(f"converged profile leaves (0,1): min {umin:.3e}, max {umax:.6f}")
    Fraw, _ = sys.evaluate(Y, jac=False, trunc=False)
    res = max(res, float(np.max(np.abs(Fraw))))
    bm, ba = [], []
    for I in plus_intervals(params, bc):
        xs, um = max_on_interval(x, u, I)
        bm.append(um); ba.append(xs)
    prof = SolutionProfile(bc, params_snapshot(params), x, u, v, sys.mesh.nodes.copy(), Y.copy(), res, bm, ba,
                           interior=interior, iterations=it)
    if umax >= 1:
        prof.meta["saturated"] = umax - 1
    if bands is not None:
        try:
            prof.string = classify(prof, bands, margin)
        except Unclassifiable:
            prof.string = None
    return prof


def classify(profile, bands, margin=1e-6):
    """Band symbol per positivity interval: 0 below r, 1 in (r, rho), 2 in (rho, R)."""
    r, rho, R = bands
    out = []
    for i, mx in enumerate(profile.band_maxima):
        if min(abs(mx - r), abs(mx - rho), abs(mx - R)) < margin or mx >= R:
            raise Unclassifiable(f"band maximum {mx:.8f} on interval {i} is not separated from r/rho/R")
        out.append(0 if mx < r else 1 if mx < rho else 2)
    return tuple(out)


def _at(params, which, value):
    return params.with_(mu=value) if which == "mu" else params.with_(lam=value, mu=value)


def continuation(prof, params, target, bc, which="mu", h=2e-3, tol=1e-10, step=math.log(2),
                 max_step=math.log(10), max_halvings=6, accept=None):
    """Follow prof (a solution at params) in log p to p = target.

    Each step seeds Newton with the previous profile. Steps grow after easy
    corrections and halve after failures; more than max_halvings consecutive
    halvings raises Diverged. accept(profile) may reject a corrected profile
    (e.g. one that jumped branch).
    """
    t = math.log(params.mu if which == "mu" else params.lam)
    T = math.log(target)
    sgn = 1.0 if T >= t else -1.0
    if not isinstance(prof, SolutionProfile):
        sys = get_system(params, bc, h)
        Y = _as_nodes(sys, prof)
        x, u, v = sys.mesh.paths(Y)
        prof = SolutionProfile(bc, {}, x, u, v, sys.mesh.nodes, Y, np.nan, [], [])
    fails = 0
    while sgn * (T - t) > 1e-14:
        dt = min(step, sgn * (T - t))
        x, u, v = prof.x, prof.u, prof.v
        val = float(target) if dt == sgn * (T - t) else math.exp(t + sgn * dt)
        p = params if val == (params.mu if which == "mu" else params.lam) else _at(params, which, val)
        nsys = get_system(p, bc, h)
        try:
            new = newton(bc, nsys.interpolate(x, u, v), p, newton_tol=tol, h=h, system=nsys)
            if accept is not None and not accept(new):
                raise Diverged("corrected profile rejected")
        except (Diverged, StuckAtBoundary) as exc:
            fails += 1
            if fails > max_halvings:
                raise Diverged(f"continuation lost near log p = {t:.4f}: {exc}") from exc
            step = dt / 2
            continue
        fails = 0
        t = math.log(val)
        prof = new
        if new.iterations <= 6:
            step = min(max_step, 1.5 * dt)
    return prof


def band_guard(string, bands, r_zero):
    """accept() for continuation: nonzero symbols keep their band, zero blocks stay below r_zero."""
    r, rho, R = bands

    def ok(prof):
        for s, mx in zip(string, prof.band_maxima):
            if (s == 0 and not mx < r_zero) or (s == 1 and not r < mx < rho) or (s == 2 and not rho < mx < R):
                return False
        return True
    return ok


# ---------------------------------------------------------------- seeds

def _logistic(t):
    return 1.0 / (1.0 + np.exp(-t))


def adaptive_roots(fun, t0, t1, n0=512, rounds=14, budget=40000):
    """All sign changes of fun on [t0, t1] after adaptive refinement where fun varies fast."""
    t = np.linspace(t0, t1, n0)
    F = fun(t)
    used = n0
    for _ in range(rounds):
        dF = np.abs(np.diff(F))
        ok = np.isfinite(dF)
        thr = 4 * np.median(dF[ok]) + 1e-12 if ok.any() else 0.0
        sel = np.where(~ok | (dF > thr) | (np.sign(F[:-1]) * np.sign(F[1:]) < 0))[0]
        if len(sel) == 0 or used + len(sel) > budget:
            break
        tm = 0.5 * (t[sel] + t[sel + 1])
        t = np.insert(t, sel + 1, tm)
        F = np.insert(F, sel + 1, fun(tm))
        used += len(sel)
    roots = []
    for k in np.where(np.sign(F[:-1]) * np.sign(F[1:]) < 0)[0]:
        try:
            roots.append(brentq(lambda s: fun(np.array([s]))[0], t[k], t[k + 1], xtol=1e-14))
        except ValueError:
            pass
    return roots


@dataclass
class PatchSolution:
    max: float
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray


class SeedFactory:
    """Seeds for coded strings glued from solutions on one-hump patches.

    A patch runs from the midpoint of the preceding negativity interval to the
    midpoint of the following one (or the span ends), with Neumann conditions at
    interior cuts. Its nontrivial solutions are found by an exhaustive adaptive
    scan of the shooting function; symbol 0 seeds zero on the patch.
    """

    def __init__(self, params, bc, h=2e-3, scan_budget=40000):
        self.params, self.bc, self.h, self.budget = params, bc, h, scan_budget
        d = params.decomp
        x0, x1 = bc.span(params.weight.period)
        self.plus = plus_intervals(params, bc)
        M = len(self.plus)
        self.patches = []
        for i in range(M):
            if bc.kind == "periodic":
                lo = sum(d.minus_before(i)) / 2
                hi = sum(d.minus_after(i)) / 2
            else:
                lo = x0 if i == 0 else sum(d.minus_at(i - 1)) / 2
                hi = x1 if i == M - 1 else sum(d.minus_at(i)) / 2
            self.patches.append((lo, hi))
        self._cache = {}

    def _left_kind(self, i):
        return "dirichlet" if self.bc.kind == "dirichlet" and i == 0 else "neumann"

    def _right_kind(self, i):
        return "dirichlet" if self.bc.kind == "dirichlet" and i == len(self.plus) - 1 else "neumann"

    def _scan(self, lo, hi, left, right, I):
        p = self.params.with_(truncated=True)
        x, A0, Am, A1 = step_grid(p, lo, hi, self.h)
        k, cf = p.g.kind, np.ascontiguousarray(p.g.coef, float)
        ri = 1 if right == "neumann" else 0
        if left == "neumann":
            init = lambda t: (_logistic(t), np.zeros_like(t))
            t0, t1 = -16.0, 16.0
        else:
            init = lambda t: (np.zeros_like(t), np.exp(t))
            t0, t1 = -25.0, 5.0

        def fun(t):
            U, V = init(np.asarray(t, float))
            return _batch_end(x, A0, Am, A1, p.c, k, cf, True, U, V)[ri]

        sols = []
        for t in adaptive_roots(fun, t0, t1, budget=self.budget):
            U, V = init(np.array([t]))
            us, vs = _path(x, A0, Am, A1, p.c, k, cf, True, U[0], V[0])
            if np.max(us) < 1e-8 or np.min(us) > 1 - 1e-8 or np.max(us) >= 1:
                continue
            sel = (x >= I[0] - 1e-12) & (x <= I[1] + 1e-12)
            sols.append(PatchSolution(float(np.max(us[sel])), x, us, vs))
        return sols

    def patch_solutions(self, i):
        P = self.params.weight.period
        m = self.params.decomp.m
        key = i % m if self.bc.kind == "periodic" else i
        if key in self._cache:
            shift = (i // m) * P if self.bc.kind == "periodic" else 0.0
            return [PatchSolution(s.max, s.x + shift, s.u, s.v) for s in self._cache[key]]
        lo, hi = self.patches[key]
        I = self.plus[key]
        sols = self._scan(lo, hi, self._left_kind(key), self._right_kind(key), I)
        if not sols:
            # large mu: u is below double precision at the cut, use the limit problem on I+ itself
            x0, x1 = self.bc.span(self.params.weight.period)
            left = self._left_kind(key) if abs(I[0] - x0) < 1e-12 else "dirichlet"
            right = self._right_kind(key) if abs(I[1] - x1) < 1e-12 else "dirichlet"
            sols = self._scan(I[0], I[1], left, right, I)
        sols.sort(key=lambda s: s.max)
        self._cache[key] = sols
        return self.patch_solutions(i)

    def candidates(self, i, symbol, bands):
        r, rho, R = bands
        sols = self.patch_solutions(i)
        if symbol == 0:
            return [None]
        lo, hi = (r, rho) if symbol == 1 else (rho, R)
        inside = [s for s in sols if lo < s.max < hi]
        mid = 0.5 * (lo + hi)
        inside.sort(key=lambda s: abs(s.max - mid))
        if inside:
            return inside
        # band empty on the patch: fall back to the nearest nontrivial solutions on the right side of rho
        side = [s for s in sols if (s.max < rho) == (symbol == 1)]
        side.sort(key=lambda s: abs(s.max - mid))
        return side

    def seeds(self, string, bands, system, limit=24):
        lists = [self.candidates(i, s, bands) for i, s in enumerate(string)]
        if any(len(l) == 0 for l in lists):
            return []
        out = []
        for combo in itertools.islice(itertools.product(*lists), limit):
            Y = np.zeros((system.n, 2))
            nodes = system.mesh.nodes
            L = system.bc.span(self.params.weight.period)[1]
            for i, sol in enumerate(combo):
                if sol is None:
                    continue
                lo, hi = sol.x[0], sol.x[-1]
                if system.bc.kind == "periodic":
                    for sh in (-L, 0.0, L):
                        sel = (nodes >= lo + sh - 1e-12) & (nodes <= hi + sh + 1e-12)
                        Y[sel, 0] = np.interp(nodes[sel] - sh, sol.x, sol.u)
                        Y[sel, 1] = np.interp(nodes[sel] - sh, sol.x, sol.v)
                else:
                    sel = (nodes >= lo - 1e-12) & (nodes <= hi + 1e-12)
                    Y[sel, 0] = np.interp(nodes[sel], sol.x, sol.u)
                    Y[sel, 1] = np.interp(nodes[sel], sol.x, sol.v)
            out.append(Y)
        return out


def multi_start_seeds(string, params, thresholds, bc=None, limit=24, h=2e-3, factory=None, continuation=()):
    """Patch-glued seeds for a string, then continuation seeds (profiles from nearby parameters)."""
    bc = bc or BoundaryCondition(params.weight.bc_profile if params.weight.bc_profile != "periodic" else "periodic")
    bands = thresholds.bands if hasattr(thresholds, "bands") else tuple(thresholds)
    sys = get_system(params, bc, h)
    factory = factory or SeedFactory(params, bc, h)
    seeds = factory.seeds(tuple(string), bands, sys, limit)
    for prof in continuation:
        seeds.append(sys.interpolate(prof.x, prof.u, prof.v))
    return seeds

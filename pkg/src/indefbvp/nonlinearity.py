"""The nonlinearity g on [0,1] and the range statistics ζ, γ, Γ, χ, K."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy.optimize import minimize_scalar

from .errors import ValidationError, NumericalError
from .weight import compile_expr

_U = sp.Symbol("u")
BUILTINS = {
    "logistic_dominant": "u**2*(1-u)",
    "logistic_haploid": "u*(1-u)",
}
TABLE_N = 4097
ROUND = 1e-9  # relative conservative rounding of polished extrema


class DomainError(ValidationError):
    pass


class G0Required(ValidationError):
    pass


class G1Violation(ValidationError):
    pass


@dataclass(frozen=True)
class Nonlinearity:
    name: str
    expr: str
    kind: int                 # 0: polynomial coefficients (ascending), 1: Hermite table
    coef: np.ndarray = field(repr=False)
    has_g0: bool = False
    has_g1: bool = False
    smooth_c1: bool = True
    deriv_expr: str | None = None
    _f: object = field(default=None, repr=False, compare=False)
    _df: object = field(default=None, repr=False, compare=False)

    def __reduce__(self):
        return (_build, (self.name, self.expr, self.deriv_expr))

    def eval(self, u):
        return self._f(np.asarray(u, float))

    def deriv(self, u):
        return self._df(np.asarray(u, float))

    __call__ = eval


def _flags(f):
    u0 = np.array([1e-4, 1e-6, 1e-8])
    r0 = f(u0) / u0
    has_g0 = bool(np.all(np.diff(r0) < 0) and r0[-1] < 1e-2 * max(r0[0], 1e-300))
    r1 = f(1 - u0) / u0
    has_g1 = bool(np.all(np.isfinite(r1)) and r1[-1] <= 10 * r1[0] + 1.0)
    return has_g0, has_g1


def _build(name, expr, deriv_expr=None):
    e = sp.sympify(expr, locals={"u": _U, "max": sp.Max, "min": sp.Min, "abs": sp.Abs})
    if e.free_symbols - {_U}:
        raise ValidationError(f"g expression {expr!r} may only depend on u")
    f, _ = compile_expr(expr, _U)
    if e.is_polynomial(_U):
        coef = np.array(sp.Poly(e, _U).all_coeffs()[::-1], dtype=float)
        df, _ = compile_expr(str(sp.diff(e, _U)), _U)
        kind = 0
    else:
        if deriv_expr is not None:
            df, _ = compile_expr(deriv_expr, _U)
        else:
            df = lambda u: (f(u + 1e-6) - f(u - 1e-6)) / 2e-6
        grid = np.linspace(0.0, 1.0, TABLE_N)
        coef = np.concatenate([f(grid), df(grid)])
        kind = 1
    if abs(float(f(np.array([0.0]))[0])) > 1e-12 or abs(float(f(np.array([1.0]))[0])) > 1e-12:
        raise ValidationError("g must vanish at u = 0 and u = 1")
    if np.any(f(np.linspace(0, 1, 1001)[1:-1]) <= 0):
        raise ValidationError("g must be positive on (0, 1)")
    g0, g1 = _flags(f)
    return Nonlinearity(name, expr, kind, coef, g0, g1, True, deriv_expr, f, df)


def make_builtin(name: str) -> Nonlinearity:
    if name not in BUILTINS:
        raise ValidationError(f"unknown builtin g {name!r}; choose from {sorted(BUILTINS)}")
    return _build(name, BUILTINS[name])


def from_expr(expr: str, deriv_expr: str | None = None) -> Nonlinearity:
    return _build("expr", expr, deriv_expr)


def _extremum(fun, lo, hi, grid_n, sense):
    """Grid extremum on [lo, hi] polished by bounded golden-section search."""
    if hi <= lo:
        return float(fun(np.array([lo]))[0])
    xs = np.linspace(lo, hi, grid_n)
    ys = fun(xs)
    k = int(np.argmax(ys) if sense > 0 else np.argmin(ys))
    best = ys[k]
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, grid_n - 1)]
    res = minimize_scalar(lambda t: -sense * float(fun(np.array([t]))[0]), bounds=(a, b),
                          method="bounded", options={"xatol": 1e-13})
    val = -sense * res.fun
    best = max(best, val) if sense > 0 else min(best, val)
    return float(best)


def _up(v):
    return v + ROUND * abs(v)


def _down(v):
    return v - ROUND * abs(v)


def _check(d, D=None):
    if not 0 < d < 1 or (D is not None and not (d <= D < 1)):
        raise DomainError(f"range statistics need 0 < d <= D < 1 (got d={d}, D={D})")


def zeta(g, d, grid_n=4096):
    _check(d)
    return _up(_extremum(lambda u: g.eval(u) / u, d / 2, d, grid_n, +1))


def gamma(g, d, grid_n=4096):
    _check(d)
    return _down(_extremum(lambda u: g.eval(u) / u, d / 2, d, grid_n, -1))


def Gamma(g, d, grid_n=4096):
    _check(d)
    return _up(_extremum(g.eval, 0.0, d, grid_n, +1))


def chi(g, d, D, grid_n=4096):
    _check(d, D)
    return _down(_extremum(g.eval, d, D, grid_n, -1))


@dataclass(frozen=True)
class RangeStats:
    d: float
    D: float
    zeta: float
    gamma: float
    Gamma: float
    chi: float
    K: float


def range_stats(g: Nonlinearity, d: float, D: float, grid_n: int = 4096) -> RangeStats:
    _check(d, D)
    K = lipschitz_at_one(g) if g.has_g1 else float("nan")
    return RangeStats(d, D, zeta(g, d, grid_n), gamma(g, d, grid_n), Gamma(g, D, grid_n),
                      chi(g, d, D, grid_n), K)


def lipschitz_at_one(g: Nonlinearity, grid_n: int = 20001) -> float:
    """K with g(u) <= K (1 - u), from a dense grid refined toward u = 1, rounded up 1%."""
    if not g.has_g1:
        raise G1Violation("g(u)/(1-u) is unbounded as u -> 1")
    u = np.unique(np.concatenate([np.linspace(0, 1, grid_n)[:-1], 1 - np.geomspace(1e-2, 1e-9, 200)]))
    r = g.eval(u) / (1 - u)
    if not np.all(np.isfinite(r)):
        raise NumericalError("non-finite ratio while estimating K")
    return 1.01 * float(np.max(r))

"""Piecewise sign-changing weight a(x), its nodal decomposition and quadratures."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy import integrate

from .errors import ValidationError, NumericalError

_X = sp.Symbol("x")
_LOCALS = {"max": sp.Max, "min": sp.Min, "abs": sp.Abs, "pi": sp.pi, "x": _X}


class NoSignChange(ValidationError):
    pass


class NonAlternating(ValidationError):
    pass


class ZeroNegativePart(ValidationError):
    pass


class QuadratureFailure(NumericalError):
    pass


def compile_expr(expr: str, var=_X):
    """Parse an expression string into a vectorized numpy callable."""
    try:
        e = sp.sympify(expr, locals={**_LOCALS, str(var): var})
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ValidationError(f"cannot parse expression {expr!r}: {exc}") from exc
    extra = e.free_symbols - {var}
    if extra:
        raise ValidationError(f"expression {expr!r} has unknown symbols {sorted(map(str, extra))}")
    f = sp.lambdify(var, e, "numpy")

    def call(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape).copy()

    return call, e


@dataclass(frozen=True)
class Piece:
    x_start: float
    x_end: float
    expr: str | None = None
    table: tuple | None = None  # ((x...), (a...)) linear interpolation

    def evaluator(self):
        if self.expr is not None:
            return compile_expr(self.expr)[0]
        tx, ta = (np.asarray(t, float) for t in self.table)
        return lambda x: np.interp(x, tx, ta)


@dataclass
class WeightSpec:
    period: float
    pieces: list
    bc_profile: str = "periodic"
    _evals: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.period <= 0:
            raise ValidationError("weight.period must be positive")
        if self.bc_profile not in ("periodic", "neumann", "dirichlet"):
            raise ValidationError(f"unknown bc_profile {self.bc_profile!r}")
        if not self.pieces:
            raise ValidationError("weight needs at least one piece")
        x = 0.0
        for k, p in enumerate(self.pieces):
            if abs(p.x_start - x) > 1e-12 or p.x_end <= p.x_start:
                raise ValidationError(f"weight.pieces[{k}] does not tile [0, P]")
            if (p.expr is None) == (p.table is None):
                raise ValidationError(f"weight.pieces[{k}] needs exactly one of expr/table")
            x = p.x_end
        if abs(x - self.period) > 1e-12:
            raise ValidationError("weight pieces do not end at the period")
        self._evals = [p.evaluator() for p in self.pieces]
        self.edges = np.array([p.x_start for p in self.pieces] + [self.period])

    def __reduce__(self):
        return (WeightSpec, (self.period, list(self.pieces), self.bc_profile))

    def piece_eval(self, k, x):
        return self._evals[k](x)

    def __call__(self, x):
        """a(x) with P-periodic extension; at piece seams the right piece wins."""
        x = np.asarray(x, dtype=float)
        xm = np.mod(x, self.period)
        k = np.clip(np.searchsorted(self.edges, xm, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.empty_like(xm)
        for j in range(len(self.pieces)):
            sel = k == j
            if np.any(sel):
                out[sel] = self._evals[j](xm[sel])
        return out

    def one_sided(self, x, side):
        """a(x±0): evaluate slightly inside the piece on the requested side."""
        x = np.asarray(x, dtype=float)
        xm = np.mod(x, self.period)
        if side > 0:
            k = np.searchsorted(self.edges, xm, side="right") - 1
        else:
            k = np.searchsorted(self.edges, xm, side="left") - 1
            k = np.where(k < 0, len(self.pieces) - 1, k)
            xm = np.where((xm == 0.0), self.period, xm)
        k = np.clip(k, 0, len(self.pieces) - 1)
        out = np.empty_like(xm)
        for j in range(len(self.pieces)):
            sel = k == j
            if np.any(sel):
                out[sel] = self._evals[j](xm[sel])
        return out


@dataclass(frozen=True)
class NodalDecomposition:
    """Signed intervals tiling [0, P]; positivity intervals indexed 0..m-1."""
    period: float
    signs: tuple          # +1/-1 per interval, alternating
    breaks: tuple         # len(signs)+1 points from 0 to P
    bc_profile: str
    zero_assignments: tuple = ()

    @property
    def m(self):
        return sum(1 for s in self.signs if s > 0)

    def intervals(self, sign):
        return [(self.breaks[j], self.breaks[j + 1]) for j, s in enumerate(self.signs) if s == sign]

    @property
    def plus(self):
        return self.intervals(1)

    @property
    def minus(self):
        return self.intervals(-1)

    def _idx_plus(self):
        return [j for j, s in enumerate(self.signs) if s > 0]

    @property
    def cyclic(self):
        return self.bc_profile == "periodic"

    def minus_after(self, i):
        """I_i^- following I_i^+ (None if absent); cyclic wraps with a P-shift."""
        j = self._idx_plus()[i % self.m] + 1
        shift = (i // self.m) * self.period
        if j < len(self.signs):
            a, b = self.breaks[j], self.breaks[j + 1]
            return (a + shift, b + shift)
        return None

    def minus_before(self, i):
        """I_{i-1}^- preceding I_i^+."""
        j = self._idx_plus()[i % self.m] - 1
        shift = (i // self.m) * self.period
        if j >= 0:
            return (self.breaks[j] + shift, self.breaks[j + 1] + shift)
        if self.cyclic:
            a, b = self.breaks[-2], self.breaks[-1]
            return (a - self.period + shift, b - self.period + shift)
        return None

    def plus_at(self, i):
        """I_i^+ for any integer i (cyclic shift) or None outside the span."""
        if not self.cyclic and not 0 <= i < self.m:
            return None
        j = self._idx_plus()[i % self.m]
        shift = (i // self.m) * self.period
        return (self.breaks[j] + shift, self.breaks[j + 1] + shift)

    def minus_at(self, i):
        """I_i^- (the one after I_i^+) for any integer i, None if absent."""
        if not self.cyclic and not 0 <= i < self.m:
            if i == -1:
                return self.minus_before(0)
            return None
        return self.minus_after(i)


def decompose(spec: WeightSpec, sign_tol: float = 1e-10, n_scan: int = 1024) -> NodalDecomposition:
    """Locate sign changes of a by a uniform scan per piece refined by bisection.

    Runs of zero weight are assigned to the interval that precedes them.
    """
    samples = []  # (piece, x, sign)
    for k, p in enumerate(spec.pieces):
        xs = np.linspace(p.x_start, p.x_end, n_scan + 1)
        ys = spec.piece_eval(k, xs)
        scale = max(np.max(np.abs(ys)), 1e-300)
        sg = np.where(np.abs(ys) <= 1e-13 * scale, 0, np.sign(ys)).astype(int)
        samples += [(k, x, s) for x, s in zip(xs, sg)]
    cur, starts, notes, zrun = 0, [], [], []
    for j, (k, x, s) in enumerate(samples):
        if s == 0:
            zrun.append(x)
            continue
        if len(zrun) > 1 and cur != 0:
            notes.append((float(zrun[0]), float(zrun[-1]), int(cur)))
        zrun = []
        if s == cur:
            continue
        if cur == 0:
            starts.append((0.0, int(s)))
        else:
            kp, xp, _ = samples[j - 1]
            if kp != k or xp == x:
                bp = spec.pieces[k].x_start
            else:
                f = lambda y, k=k, s=s: spec.piece_eval(k, np.array([y]))[0] * s > 0
                lo, hi = xp, x
                while hi - lo > sign_tol:
                    mid = 0.5 * (lo + hi)
                    lo, hi = (lo, mid) if f(mid) else (mid, hi)
                bp = 0.5 * (lo + hi)
            starts.append((bp, int(s)))
        cur = s
    if not starts:
        raise NoSignChange("weight vanishes identically")
    signs = tuple(s for _, s in starts)
    breaks = tuple([x for x, _ in starts] + [spec.period])
    if len(signs) < 2:
        raise NoSignChange("weight does not change sign")
    if spec.bc_profile == "periodic":
        if signs[0] < 0:
            raise NonAlternating("periodic profile must start with a positivity interval at x = 0")
        if signs[-1] > 0:
            raise NonAlternating("periodic profile must end with a negativity interval")
    elif -1 not in signs:
        raise NonAlternating("at least one negativity interval is required")
    return NodalDecomposition(period=spec.period, signs=signs, breaks=breaks,
                              bc_profile=spec.bc_profile, zero_assignments=tuple(notes))


@dataclass(frozen=True)
class WeightQuadratures:
    a_plus_L1: float
    a_minus_L1: float
    plus_L1: tuple      # ‖a‖ on I_i^+
    minus_L1: tuple     # ‖a‖ on I_i^- (after I_i^+), nan if absent
    A_r_L1: tuple
    A_l_L1: tuple
    minus_before_L1: float = float("nan")  # leading I_0^- for non-periodic profiles
    A_l_before_L1: float = float("nan")
    A_r_before_L1: float = float("nan")


def _quad_pieces(spec, lo, hi, fun, quad_tol):
    """Integrate fun(a(x), x) over [lo, hi] without straddling piece seams."""
    P = spec.period
    total = 0.0
    # split [lo, hi] at periodic seams
    n0 = np.floor(lo / P)
    cuts = sorted({lo, hi, *[e + n * P for n in range(int(n0) - 1, int(np.ceil(hi / P)) + 1)
                             for e in spec.edges if lo < e + n * P < hi]})
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        k = int(np.clip(np.searchsorted(spec.edges, np.mod(mid, P), side="right") - 1, 0, len(spec.pieces) - 1))
        shift = np.floor(mid / P) * P

        def integrand(x, k=k, shift=shift):
            return fun(float(spec.piece_eval(k, np.array([x - shift]))[0]), x)

        val, err = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=quad_tol, limit=400)
        if not np.isfinite(val) or err > max(1e3 * quad_tol * abs(val), 1e-13):
            raise QuadratureFailure(f"quadrature on [{a}, {b}] did not converge (err {err:g})")
        total += val
    return total


def integral(spec, lo, hi, kind="a", quad_tol=1e-10):
    funs = {"a": lambda a, x: a, "plus": lambda a, x: max(a, 0.0), "minus": lambda a, x: max(-a, 0.0),
            "abs": lambda a, x: abs(a)}
    return _quad_pieces(spec, lo, hi, funs[kind], quad_tol)


def quadratures(spec: WeightSpec, decomp: NodalDecomposition, quad_tol: float = 1e-10) -> WeightQuadratures:
    q = lambda lo, hi, kind: integral(spec, lo, hi, kind, quad_tol)
    ap = q(0.0, spec.period, "plus")
    am = q(0.0, spec.period, "minus")
    plus = tuple(q(a, b, "abs") for a, b in decomp.plus)
    mins, Ar, Al = [], [], []
    for i in range(decomp.m):
        I = decomp.minus_after(i) if decomp.cyclic else decomp.minus_at(i)
        if I is None:
            mins.append(float("nan")); Ar.append(float("nan")); Al.append(float("nan"))
            continue
        t, s = I
        mins.append(q(t, s, "abs"))
        # Fubini: ∫_t^s ∫_t^x a⁻ = ∫_t^s (s - y) a⁻(y) dy
        Ar.append(_quad_pieces(spec, t, s, lambda a, y: (s - y) * max(-a, 0.0), quad_tol))
        Al.append(_quad_pieces(spec, t, s, lambda a, y: (y - t) * max(-a, 0.0), quad_tol))
    extra = {}
    if not decomp.cyclic and decomp.signs[0] < 0:
        t, s = decomp.breaks[0], decomp.breaks[1]
        extra = dict(minus_before_L1=q(t, s, "abs"),
                     A_r_before_L1=_quad_pieces(spec, t, s, lambda a, y: (s - y) * max(-a, 0.0), quad_tol),
                     A_l_before_L1=_quad_pieces(spec, t, s, lambda a, y: (y - t) * max(-a, 0.0), quad_tol))
    return WeightQuadratures(ap, am, plus, tuple(mins), tuple(Ar), tuple(Al), **extra)


def mu_sharp(decomp: NodalDecomposition, quad: WeightQuadratures, lam: float) -> float:
    if quad.a_minus_L1 <= 0:
        raise ZeroNegativePart("∫a⁻ vanishes")
    return lam * quad.a_plus_L1 / quad.a_minus_L1


def A_r(spec, I, x, quad_tol=1e-10):
    """A^r(x) = ∫_τ^x a⁻ on the negativity interval I = [τ, σ]."""
    return integral(spec, I[0], x, "minus", quad_tol) if x > I[0] else 0.0


def A_l(spec, I, x, quad_tol=1e-10):
    return integral(spec, x, I[1], "minus", quad_tol) if x < I[1] else 0.0


def figure1_weight() -> WeightSpec:
    return WeightSpec(8.0, [Piece(0.0, 2 * np.pi, "2*sin(2*x)-max(0,sin(x))"), Piece(2 * np.pi, 8.0, "0.2")],
                      bc_profile="neumann")


def figure2_weight(bc_profile="neumann") -> WeightSpec:
    return WeightSpec(np.pi, [Piece(0.0, np.pi, "2*sin(2*x)-max(0,sin(x))")], bc_profile=bc_profile)

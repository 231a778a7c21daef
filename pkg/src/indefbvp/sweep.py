"""Continuation of the large solution across a parameter list (asymptotic profiles)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .census import run_two_solutions
from .solver import BoundaryCondition, Diverged, _at, continuation, minus_intervals, plus_intervals

SHRINK = 0.05


class ContinuationLost(NumericalError):
    pass


def shrink(I, frac=SHRINK):
    a, b = I
    d = frac * (b - a)
    return a + d, b - d


def _sup_on(x, y, I):
    sel = (x >= I[0]) & (x <= I[1])
    return float(np.max(y[sel])) if sel.any() else float("nan")


@dataclass
class SweepStep:
    value: float
    lam: float
    mu: float
    sup_norm: float
    plus_sups: list
    minus_sups: list
    plus_gap: list          # sup |u - 1| over each shrunk positivity interval
    residual: float
    profile: object = field(default=None, repr=False)

    def to_dict(self):
        d = dict(self.__dict__)
        d.pop("profile")
        return d


@dataclass
class SweepResult:
    mode: str
    values: list
    steps: list

    def column(self, name, i=0):
        out = []
        for s in self.steps:
            v = getattr(s, name)
            out.append(v[i] if isinstance(v, list) else v)
        return np.array(out)

    def to_dict(self):
        return dict(mode=self.mode, values=list(self.values), steps=[s.to_dict() for s in self.steps])


def _summary(prof, params, bc, value):
    x, u = prof.x, prof.u
    ps = [_sup_on(x, u, shrink(I)) for I in plus_intervals(params, bc)]
    ms = [_sup_on(x, u, shrink(I)) for I in minus_intervals(params, bc)]
    gap = [_sup_on(x, np.abs(u - 1), shrink(I)) for I in plus_intervals(params, bc)]
    return SweepStep(value, params.lam, params.mu, prof.sup, ps, ms, gap, prof.residual, prof)


def sweep(params, values, mode="mu", bc=None, rho=0.5, h=2e-3, tol=1e-10, max_bisections=6) -> SweepResult:
    """Track u_l from values[0] by continuation; mode 'mu' varies mu, 'lam=mu' varies both."""
    values = [float(v) for v in values]
    if mode not in ("mu", "lam=mu"):
        raise ValidationError("sweep mode must be 'mu' or 'lam=mu'")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValidationError("sweep values must be strictly increasing")
    bc = bc or BoundaryCondition(params.weight.bc_profile)
    p = _at(params, mode, values[0])
    _, prof = run_two_solutions(p, rho, bc, h=h, tol=tol)
    steps = [_summary(prof, p, bc, values[0])]
    for target in values[1:]:
        try:
            prof = continuation(prof, p, target, bc, mode, h, tol, step=math.log(target / p.mu),
                                max_step=math.log(target / p.mu), max_halvings=max_bisections,
                                accept=lambda q: q.sup > rho)
        except Diverged as exc:
            raise ContinuationLost(f"lost the large branch between {p.mu:g} and {target:g}: {exc}") from exc
        p = _at(params, mode, target)
        steps.append(_summary(prof, p, bc, target))
    return SweepResult(mode, values, steps)


FIG2_MU = [12, 30, 100, 500, 2000, 1e4, 1e5, 1e6, 1e8]
FIG2_LAM_MU = [12, 15, 20, 30, 50, 100, 200, 500, 5000]

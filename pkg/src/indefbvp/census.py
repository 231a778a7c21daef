"""Coded-solution census, two-solution search, subharmonics, finite-window approximants, Witt counts."""
from __future__ import annotations

import itertools
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import NumericalError, ValidationError
from .solver import (BoundaryCondition, Diverged, SeedFactory, StuckAtBoundary, Unclassifiable, classify,
                     band_guard, continuation, get_system, newton,
                     profile_distance)

log = logging.getLogger(__name__)
SAME = 1e-6
LADDER = (2.0, 4.0, 8.0)
LADDER_WIDE = LADDER + (1 / 4, 1 / 16, 1 / 64, 1 / 256, 1 / 1024)


class BoxEmpty(NumericalError):
    pass


# ---------------------------------------------------------------- combinatorics

def moebius(l: int) -> int:
    if l < 1:
        raise ValidationError("moebius needs l >= 1")
    f = sp.factorint(l)
    if any(e > 1 for e in f.values()):
        return 0
    return -1 if len(f) % 2 else 1


@dataclass(frozen=True)
class WittCount:
    m: int
    k: int
    value: int


def witt(m: int, k: int) -> WittCount:
    """Aperiodic necklaces of length k over 3^m colours: (1/k) sum_{l|k} mu(l) 3^(mk/l)."""
    if m < 1 or k < 1:
        raise ValidationError("witt needs m, k >= 1")
    s = sum(moebius(l) * 3 ** (m * k // l) for l in sp.divisors(k))
    q, rem = divmod(s, k)
    assert rem == 0
    return WittCount(m, k, q)


@dataclass(frozen=True)
class SymbolString:
    symbols: tuple
    m: int
    k: int = 1

    def __post_init__(self):
        if len(self.symbols) != self.m * self.k or any(s not in (0, 1, 2) for s in self.symbols):
            raise ValidationError("symbol string must have length m*k over {0,1,2}")

    def rotate(self, l):
        s = self.symbols
        return SymbolString(s[self.m * l:] + s[:self.m * l], self.m, self.k)

    @property
    def minimal_block_period(self):
        """Smallest l (in blocks of m) with the string invariant under rotation by l blocks."""
        for l in range(1, self.k + 1):
            if self.k % l == 0 and self.rotate(l).symbols == self.symbols:
                return l
        return self.k

    def __str__(self):
        return "".join(map(str, self.symbols))


def nonzero_strings(m, k=1):
    return [s for s in itertools.product(range(3), repeat=m * k) if any(s)]


def necklace_representatives(m, k):
    """Lexicographically minimal rotations (by blocks of m) of the strings of minimal period k blocks."""
    reps = set()
    for s in itertools.product(range(3), repeat=m * k):
        S = SymbolString(s, m, k)
        if S.minimal_block_period != k:
            continue
        reps.add(min(S.rotate(l).symbols for l in range(k)))
    return sorted(reps)


# ---------------------------------------------------------------- census

@dataclass
class CensusReport:
    m: int
    k: int
    bc: str
    bands: tuple
    targets: list
    found: dict
    missing: list
    duplicates: list = field(default_factory=list)
    unclassifiable: list = field(default_factory=list)
    attempts: dict = field(default_factory=dict)
    theorem_check: dict = field(default_factory=dict)
    minimality: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def count(self):
        return len(self.found)

    def min_distance(self):
        profs = list(self.found.values())
        if len(profs) < 2:
            return float("inf")
        return min(profile_distance(a, b) for a, b in itertools.combinations(profs, 2))

    def summary(self):
        return dict(m=self.m, k=self.k, bc=self.bc, bands=list(self.bands), found=len(self.found),
                    expected=len(self.targets), missing=["".join(map(str, s)) for s in self.missing],
                    duplicates=self.duplicates, unclassifiable=self.unclassifiable,
                    attempts={"".join(map(str, s)): n for s, n in self.attempts.items()},
                    theorem_check=self.theorem_check, minimality=self.minimality,
                    min_pairwise_distance=self.min_distance(), wall_time=self.wall_time)


class _Searcher:
    """Newton over seeds for one (params, bc); pools every converged solution by its string."""

    def __init__(self, params, bc, bands, h=2e-3, tol=1e-10, margin=1e-6):
        self.params, self.bc, self.bands, self.h, self.tol, self.margin = params, bc, bands, h, tol, margin
        self.sys = get_system(params, bc, h)
        self.factory = SeedFactory(params, bc, h)
        self.pool = {}
        self.unclassifiable = []

    def solve(self, seed, params=None, tol=None):
        p = params or self.params
        sys = self.sys if p is self.params else get_system(p, self.bc, self.h)
        prof = newton(self.bc, seed, p, newton_tol=tol or self.tol, h=self.h, system=sys)
        try:
            prof.string = classify(prof, self.bands, self.margin)
        except Unclassifiable:
            prof2 = newton(self.bc, prof.Y, p, newton_tol=(tol or self.tol) / 100, h=self.h, system=sys)
            try:
                prof2.string = classify(prof2, self.bands, self.margin)
                prof = prof2
            except Unclassifiable as exc:
                prof.string = None
                prof.meta["unclassifiable"] = str(exc)
        return prof

    def offer(self, prof):
        if prof.string is None:
            if not any(profile_distance(prof, q) < SAME for q in self.unclassifiable):
                self.unclassifiable.append(prof)
            return
        if not any(prof.string):
            return
        old = self.pool.get(prof.string)
        if old is None:
            self.pool[prof.string] = prof
        elif profile_distance(old, prof) >= SAME:
            old.meta.setdefault("alternates", 0)
            old.meta["alternates"] += 1

    def try_seeds(self, target, seeds, budget):
        used = 0
        for Y in seeds:
            if used >= budget or target in self.pool:
                break
            used += 1
            try:
                self.offer(self.solve(Y))
            except (Diverged, StuckAtBoundary) as exc:
                log.debug("seed for %s: %s", target, exc)
        return used

    def ladder(self, target, budget, factors=LADDER, steps=8):
        """Solve at a scaled mu (larger: humps decouple; smaller: patch seeds exist), then continue back."""
        used = 0
        for fac in factors:
            if used >= budget or target in self.pool:
                break
            hi = self.params.with_(mu=self.params.mu * fac)
            hsys = get_system(hi, self.bc, self.h)
            fac_seeds = SeedFactory(hi, self.bc, self.h).seeds(target, self.bands, hsys, limit=2)
            prof = None
            for Y in fac_seeds:
                used += 1
                try:
                    prof = newton(self.bc, Y, hi, newton_tol=self.tol, h=self.h, system=hsys)
                    break
                except (Diverged, StuckAtBoundary):
                    prof = None
            if prof is None:
                continue
            mus = list(np.geomspace(hi.mu, self.params.mu, steps + 1)[1:])
            Y, cur, bis = prof, hi.mu, 0
            while mus and used < budget:
                mu = mus[0]
                p = self.params if abs(mu - self.params.mu) <= 1e-12 * mu else self.params.with_(mu=mu)
                used += 1
                try:
                    Y = newton(self.bc, Y, p, newton_tol=self.tol, h=self.h)
                    cur = mu
                    mus.pop(0)
                except (Diverged, StuckAtBoundary):
                    bis += 1
                    if bis > 6:
                        break
                    mus.insert(0, float(np.sqrt(cur * mu)))
            if not mus:
                try:
                    self.offer(self.solve(Y))
                except (Diverged, StuckAtBoundary):
                    pass
        return used


def _hypotheses(params, thresholds):
    if thresholds is None or not hasattr(thresholds, "ledger"):
        return {}
    return {"lambda > lambda_star(rho)": bool(params.lam > thresholds.lambda_star.lambda_star),
            "mu > mu_star": bool(params.mu > thresholds.ledger.mu_star),
            "mu > mu_sharp": bool(params.mu > thresholds.mu_sharp),
            "lambda_star": thresholds.lambda_star.lambda_star, "mu_star": thresholds.ledger.mu_star}


def _bands(thresholds):
    return tuple(thresholds.bands) if hasattr(thresholds, "bands") else tuple(thresholds)


def _census_chunk(args):
    params, bc, bands, targets, budget, h, tol, prior = args
    s = _Searcher(params, bc, bands, h, tol)
    attempts = {}
    for t in targets:
        n = 0
        if t not in s.pool and t in prior:
            n += s.try_seeds(t, [s.sys.interpolate(prior[t].x, prior[t].u, prior[t].v)], budget)
        if t not in s.pool:
            n += s.try_seeds(t, s.factory.seeds(t, bands, s.sys, budget), budget - n)
        if t not in s.pool and n < budget:
            n += s.ladder(t, budget - n)
        attempts[t] = n
    return s.pool, s.unclassifiable, attempts


def run_census(params, bc, thresholds, seed_budget=24, h=2e-3, tol=1e-10, targets=None, prior=None,
               workers=1) -> CensusReport:
    """Search every nonzero string; missing strings are reported, never dropped."""
    t0 = time.time()
    bands = _bands(thresholds)
    m = params.decomp.m
    targets = sorted(targets or nonzero_strings(m, bc.k))
    prior = prior or {}
    if thresholds is not None and hasattr(thresholds, "ledger"):
        hyp = _hypotheses(params, thresholds)
        if not (hyp["lambda > lambda_star(rho)"] and hyp["mu > mu_star"]):
            warnings.warn("census parameters do not satisfy lambda > lambda* and mu > mu*; "
                          "existence is not guaranteed", RuntimeWarning, stacklevel=2)
    if workers > 1:
        chunks = [targets[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as ex:
            outs = list(ex.map(_census_chunk, [(params, bc, bands, c, seed_budget, h, tol, prior) for c in chunks]))
    else:
        outs = [_census_chunk((params, bc, bands, targets, seed_budget, h, tol, prior))]
    pool, unc, attempts = {}, [], {}
    for p, u, a in outs:
        for s, prof in p.items():
            if s not in pool:
                pool[s] = prof
        unc += u
        attempts.update(a)
    found = {s: pool[s] for s in targets if s in pool}
    missing = [s for s in targets if s not in pool]
    dup = []
    for (s1, a), (s2, b) in itertools.combinations(sorted(found.items()), 2):
        if profile_distance(a, b) < SAME:
            dup.append(("".join(map(str, s1)), "".join(map(str, s2))))
    rep = CensusReport(m, bc.k, bc.kind, bands, targets, found, missing, dup,
                       [dict(band_maxima=p.band_maxima, reason=p.meta.get("unclassifiable")) for p in unc],
                       {s: attempts.get(s, 0) for s in targets})
    rep.theorem_check = dict(found=len(found), expected=len(targets), **_hypotheses(params, thresholds))
    rep.wall_time = time.time() - t0
    return rep


def run_two_solutions(params, rho, bc=None, h=2e-3, tol=1e-10, seed_budget=24):
    """One solution with sup-norm in (0, rho) and one in (rho, 1)."""
    if not 0 < rho < 1:
        raise ValidationError("rho must lie in (0, 1)")
    from .weight import mu_sharp
    from .thresholds import Geometry
    geo = Geometry(params)
    if params.mu <= mu_sharp(geo.d, geo.q, params.lam):
        warnings.warn("mu <= mu_sharp: the two-solution theorem does not apply", RuntimeWarning, stacklevel=2)
    bc = bc or BoundaryCondition("periodic" if params.weight.bc_profile == "periodic" else params.weight.bc_profile)
    sys = get_system(params, bc, h)
    fac = SeedFactory(params, bc, h)
    M = len(fac.plus)
    bands = (1e-300, rho, 1 - 1e-12)
    out = {}
    for name, strings in (("small", [(1,) * M] + [s for s in nonzero_strings(M) if 2 not in s]),
                          ("large", [(2,) * M] + [s for s in nonzero_strings(M) if 2 in s])):
        used = 0
        for s in strings:
            for Y in fac.seeds(s, bands, sys, seed_budget):
                if used >= seed_budget or name in out:
                    break
                used += 1
                try:
                    prof = newton(bc, Y, params, newton_tol=tol, h=h, system=sys)
                except (Diverged, StuckAtBoundary):
                    continue
                if (prof.sup < rho) == (name == "small"):
                    out[name] = prof
            if name in out:
                break
        if name not in out:
            raise BoxEmpty(f"no solution found with sup-norm {'below' if name == 'small' else 'above'} rho")
    return out["small"], out["large"]


def minimal_period_label(prof, P, k):
    """Order-k subharmonic iff u(.) and u(. + lP) differ by > 1e-6 for every l = 1..k-1."""
    x, u = prof.x, prof.u
    L = k * P
    dists = []
    for l in range(1, k):
        xs = np.mod(x + l * P, L)
        dists.append(float(np.max(np.abs(np.interp(xs, x, u, period=L) - u))))
    return all(d > SAME for d in dists), dists


def subharmonic_census(params, thresholds, k, seed_budget=24, h=2e-3, tol=1e-10, workers=1,
                       base_mu=None, base_bands=None) -> CensusReport:
    """Census over necklace representatives of length k*m on [0, kP].

    With base_mu the strings are first found at that mu (bands base_bands) and
    continued in mu to params.mu, which then seeds the census proper.
    """
    if k < 2:
        raise ValidationError("subharmonic census needs k >= 2")
    m = params.decomp.m
    bc = BoundaryCondition("periodic", k)
    targets = necklace_representatives(m, k)
    prior = {}
    if base_mu is not None:
        base = params.with_(mu=float(base_mu))
        bb = tuple(base_bands or _bands(thresholds))
        rep0 = run_census(base, bc, bb, seed_budget, h, tol, targets=targets, workers=workers)
        for s, prof in rep0.found.items():
            guard = band_guard(s, _bands(thresholds), bb[0])
            try:
                prior[s] = continuation(prof, base, params.mu, bc, "mu", h, tol, accept=guard)
            except Diverged as exc:
                log.info("continuation of %s failed: %s", s, exc)
    rep = run_census(params, bc, thresholds, seed_budget, h, tol, targets=targets, workers=workers, prior=prior)
    P = params.weight.period
    for s, prof in rep.found.items():
        ok, d = minimal_period_label(prof, P, k)
        rep.minimality["".join(map(str, s))] = dict(minimal=ok, shift_distances=d)
    w = witt(m, k).value
    rep.theorem_check.update(witt_lower_bound=w, base_mu=base_mu,
                             distinct_subharmonics=sum(1 for v in rep.minimality.values() if v["minimal"]))
    return rep


def chaos_approx(params, thresholds, window, n, seed_budget=24, h=2e-3, tol=1e-10):
    """Solve the (2n+1)P-periodic problem coded by the window padded with zero blocks.

    window is a sequence of length (2w+1)*m centred on block 0; returns the profile
    on [-nP, (n+1)P] and the central band maxima.
    """
    m = params.decomp.m
    window = tuple(window)
    if len(window) % m or (len(window) // m) % 2 == 0:
        raise ValidationError("window must hold an odd number of m-blocks")
    if not any(window):
        raise ValidationError("window must be nonzero")
    w = (len(window) // m - 1) // 2
    if n < w:
        raise ValidationError("n must be at least the window half-width")
    string = (0,) * (m * (n - w)) + window + (0,) * (m * (n - w))
    bc = BoundaryCondition("periodic", 2 * n + 1)
    bands = _bands(thresholds)
    s = _Searcher(params, bc, bands, h, tol)
    used = s.try_seeds(string, s.factory.seeds(string, bands, s.sys, seed_budget), seed_budget)
    if string not in s.pool and used < seed_budget:
        s.ladder(string, seed_budget - used, factors=LADDER_WIDE, steps=12)
    if string not in s.pool:
        raise BoxEmpty(f"no solution for window {window} at n = {n}")
    prof = s.pool[string]
    P = params.weight.period
    prof.x = prof.x - n * P
    prof.nodes = prof.nodes - n * P
    prof.meta["window"] = list(window)
    prof.meta["n"] = n
    lo = m * (n - w)
    central = prof.band_maxima[lo:lo + len(window)]
    return prof, central

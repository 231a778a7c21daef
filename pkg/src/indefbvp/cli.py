"""Command-line entry point: indefbvp <subcommand> --config FILE [--out DIR] ..."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
import warnings

import numpy as np

from . import io, plotting
from .census import chaos_approx, run_census, run_two_solutions, subharmonic_census
from .config import ConfigError, RunConfig, load
from .errors import ArtifactError, NumericalError, ValidationError
from .solver import BoundaryCondition, SolutionProfile, multi_start_seeds, newton, plus_intervals
from .solver import Diverged, StuckAtBoundary
from .stability import convexity_bound, fd_principal_eigenvalue, principal_eigenvalue
from .sweep import sweep as run_sweep
from .thresholds import compute_thresholds

log = logging.getLogger("indefbvp")

COMMANDS = ("thresholds", "solve", "census", "subharmonics", "chaos", "stability", "sweep")


class Run:
    """Output directory plus the list of files written, in order."""

    def __init__(self, cfg: RunConfig):
        self.cfg, self.out, self.files = cfg, cfg.out, []

    def path(self, tag, ext=".csv"):
        return os.path.join(self.out, f"{io.slug(self.cfg.run_id)}_{io.slug(tag)}{ext}")

    def profile(self, tag, prof, extra=None):
        self.files.append(io.write_profile(self.path(tag), prof, extra))
        return self.files[-1]

    def json(self, tag, obj):
        self.files.append(io.write_json(self.path(tag, ".json"), obj))
        return self.files[-1]

    def overlay(self, tag, files, labels, title, params, bc):
        plus = plus_intervals(params, bc)
        self.files += plotting.overlay(self.out, f"{io.slug(self.cfg.run_id)}_{tag}", files, labels, title, plus)


def _thresholds(cfg, params):
    return compute_thresholds(params, cfg.rho, cfg.r, cfg.R)


def cmd_thresholds(cfg, run):
    p = cfg.params()
    ts = _thresholds(cfg, p)
    extra = dict(mu_sharp_over_lambda=ts.mu_sharp / p.lam, sign_changes=list(map(float, p.decomp.breaks)))
    run.files.append(io.write_thresholds(run.path("thresholds", ".json"), ts, extra))
    flat = io.flatten(dict(ts.to_dict(), **extra))
    run.files.append(io._write(run.path("thresholds", ".txt"), "".join(f"{k} = {v!r}\n" for k, v in flat.items())))
    return dict(lambda_star=ts.lambda_star.lambda_star, mu_sharp=ts.mu_sharp, mu_star=ts.ledger.mu_star,
                r_bar=ts.r_bar, R_bar=ts.R_bar, r=ts.r, R=ts.R)


def cmd_solve(cfg, run):
    p, bc = cfg.params(), cfg.boundary()
    if cfg.string is None:
        small, large = run_two_solutions(p, cfg.rho, bc, cfg.h, cfg.tol, cfg.seed_budget)
        profs = {"small": small, "large": large}
    else:
        s = tuple(int(ch) for ch in cfg.string)
        ts = _thresholds(cfg, p)
        prof = None
        for Y in multi_start_seeds(s, p, ts, bc, cfg.seed_budget, cfg.h):
            try:
                prof = newton(bc, Y, p, cfg.tol, h=cfg.h, bands=ts.bands)
            except (Diverged, StuckAtBoundary):
                continue
            if prof.string == s:
                break
            prof = None
        if prof is None:
            raise Diverged(f"no seed converged to string {cfg.string}")
        profs = {cfg.string: prof}
    files = [run.profile(k, v) for k, v in profs.items()]
    run.overlay("solve", files, list(profs), "solutions", p, bc)
    return {k: dict(sup=v.sup, residual=v.residual, band_maxima=v.band_maxima) for k, v in profs.items()}


def _report_census(run, rep, p, bc, tag):
    files, labels = [], []
    for s, prof in rep.found.items():
        files.append(run.profile("".join(map(str, s)), prof))
        labels.append("".join(map(str, s)))
    run.json(tag, rep.summary())
    if files:
        run.overlay(tag, files, labels, f"{tag}: {rep.count} of {len(rep.targets)}", p, bc)
    return dict(found=rep.count, expected=len(rep.targets), missing=rep.summary()["missing"])


def cmd_census(cfg, run):
    p, bc = cfg.params(), cfg.boundary()
    ts = _thresholds(cfg, p)
    rep = run_census(p, bc, ts, cfg.seed_budget, cfg.h, cfg.tol, workers=cfg.workers)
    run.files.append(io.write_thresholds(run.path("thresholds", ".json"), ts))
    return _report_census(run, rep, p, bc, "census")


def cmd_subharmonics(cfg, run):
    if cfg.k < 2:
        raise ConfigError("k", "subharmonics need k >= 2")
    p = cfg.params()
    ts = _thresholds(cfg, p)
    bb = None if cfg.base_r is None else (cfg.base_r, ts.rho, ts.R)
    rep = subharmonic_census(p, ts, cfg.k, cfg.seed_budget, cfg.h, cfg.tol, cfg.workers,
                             base_mu=cfg.base_mu, base_bands=bb)
    run.files.append(io.write_thresholds(run.path("thresholds", ".json"), ts))
    out = _report_census(run, rep, p, BoundaryCondition("periodic", cfg.k), "subharmonics")
    out["distinct_subharmonics"] = rep.theorem_check["distinct_subharmonics"]
    return out


def cmd_chaos(cfg, run):
    p = cfg.params()
    ts = _thresholds(cfg, p)
    central, files = {}, []
    for n in cfg.chaos_n:
        prof, c = chaos_approx(p, ts, cfg.chaos_window, n, cfg.seed_budget, cfg.h, cfg.tol)
        central[n] = [float(v) for v in c]
        files.append(run.profile(f"chaos_n{n}", prof))
    ns = sorted(central)
    diffs = {f"{a}-{b}": float(np.max(np.abs(np.subtract(central[a], central[b])))) for a, b in zip(ns, ns[1:])}
    summary = dict(window=cfg.chaos_window, central_maxima={str(k): v for k, v in central.items()}, diffs=diffs)
    run.json("chaos", summary)
    run.overlay("chaos", files, [f"n={n}" for n in ns], "window " + "".join(map(str, cfg.chaos_window)),
                p, BoundaryCondition("periodic", 2 * max(ns) + 1))
    return summary


def _load_profile(path, params):
    x, u, du, meta = io.read_profile(path)
    bc = BoundaryCondition(meta.get("bc", "periodic"), int(meta.get("k", 1)))
    return SolutionProfile(bc, meta.get("params", {}), x, u, du, np.empty(0), None, meta.get("residual", np.nan),
                           meta.get("band_maxima", []))


def cmd_stability(cfg, run):
    p = cfg.params()
    if cfg.profile:
        profs = {os.path.splitext(os.path.basename(cfg.profile))[0]: _load_profile(cfg.profile, p)}
    else:
        bc = cfg.boundary()
        rep = run_census(p, bc, _thresholds(cfg, p), cfg.seed_budget, cfg.h, cfg.tol, workers=cfg.workers)
        profs = {"".join(map(str, s)): prof for s, prof in rep.found.items()}
    table = {}
    for name, prof in profs.items():
        res = principal_eigenvalue(prof, p, h=cfg.h)
        nu_fd = fd_principal_eigenvalue(prof, p)
        table[name] = dict(res.to_dict(), nu0_fd=nu_fd, agree=abs(res.nu0 - nu_fd) <= 1e-4 * (1 + abs(res.nu0)))
        prof.stability = table[name]
        if not cfg.profile:
            run.profile(name, prof)
    eps = cfg.epsilon if cfg.epsilon is not None else convexity_bound(p.g)
    check = None
    if cfg.rho <= eps:
        # strings without symbol 2 must be unstable when rho lies in the convex part of g
        small = [k for k in table if set(k) <= {"0", "1"}]
        check = dict(epsilon=eps, strings=small, all_unstable=all(table[k]["label"] == "unstable" for k in small))
    run.json("stability", dict(results=table, instability_check=check, epsilon=eps))
    return dict(labels={k: (v["label"], v["nu0"]) for k, v in table.items()}, instability_check=check)


def cmd_sweep(cfg, run):
    if not cfg.sweep_values:
        raise ConfigError("sweep.values", "empty sweep list")
    p, bc = cfg.params(), cfg.boundary()
    res = run_sweep(p, cfg.sweep_values, cfg.sweep_mode, bc, cfg.rho, cfg.h, cfg.tol)
    files, labels = [], []
    for st in res.steps:
        lab = f"{cfg.sweep_mode}={st.value:g}"
        files.append(run.profile(lab, st.profile, dict(sweep_value=st.value)))
        labels.append(lab)
    run.json("sweep", res.to_dict())
    run.overlay("sweep", files, labels, f"sweep in {cfg.sweep_mode}", p, bc)
    return dict(minus_sups=[s.minus_sups for s in res.steps], plus_gap=[s.plus_gap for s in res.steps])


HANDLERS = dict(thresholds=cmd_thresholds, solve=cmd_solve, census=cmd_census, subharmonics=cmd_subharmonics,
                chaos=cmd_chaos, stability=cmd_stability, sweep=cmd_sweep)


def run(command, cfg: RunConfig):
    """Dispatch one command; returns (exit status, result summary, manifest path)."""
    os.makedirs(cfg.out, exist_ok=True)
    r = Run(cfg)
    t0 = time.time()
    status, result, err = 0, None, None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            result = HANDLERS[command](cfg, r)
    except ValidationError as exc:
        status, err = 1, exc
    except (NumericalError, ArtifactError) as exc:
        status, err = 2, exc
    extra = {}
    if err is not None:
        extra["error"] = f"{type(err).__module__.split('.')[-1]}.{type(err).__name__}: {err}"
    if result is not None:
        r.json("result", result)
    m = io.manifest(command, cfg, r.files, time.time() - t0, status, extra)
    mpath = io.write_json(os.path.join(cfg.out, f"{io.slug(cfg.run_id)}_manifest.json"), m)
    return status, result, mpath, extra.get("error")


def build_parser():
    ap = argparse.ArgumentParser(prog="indefbvp", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="flat dotted-key config file")
    ap.add_argument("--out", help="output directory (overrides 'out')")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--seed-budget", type=int)
    ap.add_argument("--tol", type=float)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load(args.config)
        over = {k: v for k, v in dict(out=args.out, workers=args.workers, seed_budget=args.seed_budget,
                                      tol=args.tol).items() if v is not None}
        cfg = dataclasses.replace(cfg, **over).validate()
    except ValidationError as exc:
        print(f"error[config.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    status, result, mpath, err = run(args.command, cfg)
    if err:
        print(f"error[{err.split(':')[0]}]: {err.split(':', 1)[1].strip()}", file=sys.stderr)
    else:
        print(io.dumps(result), end="")
    print(f"manifest: {mpath}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())

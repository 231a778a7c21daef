"""Flat dotted-key run configuration.

One assignment per line, values in Python literal syntax:

    c = 1.0
    weight.preset = "figure2"
    weight.pieces[0].expr = "2*sin(2*x)-max(0,sin(x))"
    sweep.values = [12, 30, 100]

Unquoted words are read as strings; '#' starts a comment.
"""
from __future__ import annotations

import ast
import hashlib
import json
import re
from dataclasses import dataclass, field, asdict

import sympy as sp

from .errors import ValidationError
from .integrator import ProblemParams
from .nonlinearity import from_expr, make_builtin
from .solver import BoundaryCondition
from .weight import Piece, WeightSpec, figure1_weight, figure2_weight


class ConfigError(ValidationError):
    def __init__(self, field_name, msg):
        super().__init__(f"config field {field_name!r}: {msg}")
        self.field = field_name


_LINE = re.compile(r"^\s*([A-Za-z_][\w.\[\]]*)\s*=\s*(.+?)\s*$")
_PIECE = re.compile(r"^weight\.pieces\[(\d+)\]\.(x_start|x_end|expr)$")


def _value(raw):
    """Literal value of the text after '='; a '#' outside a literal starts a comment."""
    cuts = [i for i, ch in enumerate(raw) if ch == "#"] + [len(raw)]
    for i in cuts:
        try:
            return ast.literal_eval(raw[:i].strip())
        except (ValueError, SyntaxError):
            continue
    return raw[:cuts[0]].strip()


def parse_text(text: str) -> dict:
    """Dotted keys -> values; later assignments override earlier ones."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        m = _LINE.match(s)
        if not m:
            raise ConfigError(f"line {n}", f"cannot parse {line!r}")
        out[m.group(1)] = _value(m.group(2))
    return out


def _num(key, v):
    if isinstance(v, bool):
        raise ConfigError(key, "expected a number")
    if isinstance(v, (int, float)):
        return float(v)
    try:
        return float(sp.sympify(str(v), locals={"pi": sp.pi}))
    except (sp.SympifyError, TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {v!r}") from None


@dataclass
class RunConfig:
    run_id: str = "run"
    c: float = 1.0
    lam: float = 12.0
    mu: float = 12.0
    rho: float = 0.5
    r: float | None = None
    R: float | None = None
    bc: str = "periodic"
    k: int = 1
    weight_preset: str | None = "figure2"
    weight_period: float | None = None
    weight_bc_profile: str | None = None
    weight_pieces: list = field(default_factory=list)
    g: str = "logistic_dominant"
    g_expr: str | None = None
    g_deriv: str | None = None
    h: float = 2e-3
    tol: float = 1e-10
    graded: bool = False
    seed_budget: int = 24
    workers: int = 1
    out: str = "out"
    sweep_mode: str = "mu"
    sweep_values: list = field(default_factory=list)
    chaos_window: list = field(default_factory=lambda: [0, 2, 0])
    chaos_n: list = field(default_factory=lambda: [1, 2, 3])
    base_mu: float | None = None
    base_r: float | None = None
    profile: str | None = None
    epsilon: float | None = None          # g'' > 0 on (0, epsilon]; None: detect from g
    string: str | None = None

    def validate(self):
        for name in ("h", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        if not 0 < self.rho < 1:
            raise ConfigError("rho", f"must lie in (0, 1), got {self.rho}")
        if self.r is not None and not 0 < self.r < self.rho:
            raise ConfigError("r", "must lie in (0, rho)")
        if self.R is not None and not self.rho < self.R < 1:
            raise ConfigError("R", "must lie in (rho, 1)")
        if not (self.lam > 0 and self.mu > 0):
            raise ConfigError("lam" if not self.lam > 0 else "mu", "must be positive")
        if self.bc not in ("periodic", "neumann", "dirichlet"):
            raise ConfigError("bc", f"unknown boundary condition {self.bc!r}")
        if self.k < 1 or (self.bc != "periodic" and self.k != 1):
            raise ConfigError("k", "k >= 1, and k = 1 unless periodic")
        if self.seed_budget < 1:
            raise ConfigError("seed_budget", "must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers", "must be at least 1")
        if self.sweep_mode not in ("mu", "lam=mu"):
            raise ConfigError("sweep.mode", "must be 'mu' or 'lam=mu'")
        if any(b <= a for a, b in zip(self.sweep_values, self.sweep_values[1:])):
            raise ConfigError("sweep.values", "must be strictly increasing")
        if self.weight_preset is None and not self.weight_pieces:
            raise ConfigError("weight.pieces", "give pieces or a preset")
        if self.weight_preset not in (None, "figure1", "figure2"):
            raise ConfigError("weight.preset", "must be 'figure1' or 'figure2'")
        if self.epsilon is not None and not 0 < self.epsilon < 1:
            raise ConfigError("stability.epsilon", "must lie in (0, 1)")
        if self.string is not None and (not self.string or set(self.string) - set("012")):
            raise ConfigError("string", "must be a nonempty word over 0, 1, 2")
        return self

    # -- builders
    def weight(self) -> WeightSpec:
        if self.weight_pieces:
            try:
                pieces = [Piece(p["x_start"], p["x_end"], p["expr"]) for p in self.weight_pieces]
                return WeightSpec(self.weight_period or pieces[-1].x_end, pieces,
                                  bc_profile=self.weight_bc_profile or self.bc)
            except ValidationError as exc:
                raise ConfigError("weight.pieces", str(exc)) from None
        if self.weight_preset == "figure1":
            return figure1_weight()
        return figure2_weight(self.weight_bc_profile or self.bc)

    def nonlinearity(self):
        try:
            if self.g_expr:
                return from_expr(self.g_expr, self.g_deriv)
            return make_builtin(self.g)
        except ValidationError as exc:
            raise ConfigError("g", str(exc)) from None

    def params(self) -> ProblemParams:
        try:
            return ProblemParams(self.c, self.lam, self.mu, self.weight(), self.nonlinearity(), graded=self.graded)
        except ConfigError:
            raise
        except ValidationError as exc:
            raise ConfigError("weight", str(exc)) from None

    def boundary(self) -> BoundaryCondition:
        return BoundaryCondition(self.bc, self.k)

    def to_dict(self):
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


_SIMPLE = {
    "run_id": str, "c": float, "lam": float, "mu": float, "rho": float, "r": float, "R": float,
    "bc": str, "k": int, "h": float, "tol": float, "graded": bool, "seed_budget": int, "workers": int,
    "out": str, "base_mu": float, "base_r": float,
    "weight.preset": str, "weight.period": float, "weight.bc_profile": str,
    "g.builtin": str, "g.expr": str, "g.deriv_expr": str,
    "sweep.mode": str, "sweep.values": list, "chaos.window": list, "chaos.n": list,
    "stability.profile": str, "stability.epsilon": float, "string": str,
}


def from_dict(d: dict) -> RunConfig:
    kw = {}
    pieces = {}
    for key, v in d.items():
        m = _PIECE.match(key)
        if m:
            i, attr = int(m.group(1)), m.group(2)
            pieces.setdefault(i, {})[attr] = str(v) if attr == "expr" else _num(key, v)
            continue
        if key not in _SIMPLE:
            raise ConfigError(key, "unknown field")
        typ = _SIMPLE[key]
        if key == "string" and not isinstance(v, str):
            raise ConfigError(key, "quote the symbol string, e.g. string = \"012\"")
        if v is None and key not in ("run_id", "bc", "out", "sweep.mode"):
            pass
        elif typ is float:
            v = _num(key, v)
        elif typ is int:
            if isinstance(v, bool) or not float(_num(key, v)).is_integer():
                raise ConfigError(key, "expected an integer")
            v = int(_num(key, v))
        elif typ is bool:
            if not isinstance(v, bool):
                raise ConfigError(key, "expected True or False")
        elif typ is list:
            if not isinstance(v, (list, tuple)):
                raise ConfigError(key, "expected a list")
            v = [int(x) for x in v] if key.startswith("chaos") else [_num(key, x) for x in v]
        else:
            v = None if v is None else str(v)
        name = {"g.builtin": "g", "g.expr": "g_expr", "g.deriv_expr": "g_deriv",
                "stability.profile": "profile", "stability.epsilon": "epsilon"}.get(key, key.replace(".", "_"))
        kw[name] = v
    if pieces:
        idx = sorted(pieces)
        if idx != list(range(len(idx))):
            raise ConfigError("weight.pieces", "indices must run 0..n-1")
        for i in idx:
            missing = {"x_start", "x_end", "expr"} - set(pieces[i])
            if missing:
                raise ConfigError(f"weight.pieces[{i}]", f"missing {sorted(missing)}")
        kw["weight_pieces"] = [pieces[i] for i in idx]
        kw.setdefault("weight_preset", None)
    return RunConfig(**kw).validate()


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None
    return from_dict(parse_text(text))


def dump(cfg: RunConfig) -> str:
    """Inverse of load for the fields that differ from the defaults."""
    base = RunConfig()
    inv = {"g": "g.builtin", "g_expr": "g.expr", "g_deriv": "g.deriv_expr", "profile": "stability.profile",
           "epsilon": "stability.epsilon"}
    lines = []
    for k, v in cfg.to_dict().items():
        if k == "weight_pieces":
            for i, p in enumerate(v):
                for a in ("x_start", "x_end", "expr"):
                    lines.append(f"weight.pieces[{i}].{a} = {p[a]!r}")
            continue
        if v == getattr(base, k) and k != "weight_preset":
            continue
        key = inv.get(k)
        if key is None:
            key = k
            for pre in ("weight_", "sweep_", "chaos_"):
                if k.startswith(pre):
                    key = pre[:-1] + "." + k[len(pre):]
        lines.append(f"{key} = {v!r}")
    return "\n".join(lines) + "\n"

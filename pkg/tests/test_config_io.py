import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from indefbvp import io
from indefbvp.config import ConfigError, RunConfig, dump, from_dict, load, parse_text
from indefbvp.integrator import ProblemParams
from indefbvp.nonlinearity import make_builtin
from indefbvp.solver import BoundaryCondition, SolutionProfile
from indefbvp.thresholds import compute_thresholds
from indefbvp.weight import figure2_weight

TEXT = """
# a comment
run_id = "demo"
c = 0.5
lam = 20          # trailing comment
mu = 2*pi
bc = neumann
weight.pieces[0].x_start = 0
weight.pieces[0].x_end = pi
weight.pieces[0].expr = "2*sin(2*x)-max(0,sin(x))"   # with '#' after a quote
sweep.values = [12, 30, 100]
g.expr = "u**2*(1-u)"
string = "012"
"""


def test_parse_and_build():
    cfg = from_dict(parse_text(TEXT))
    assert cfg.lam == 20.0 and cfg.mu == pytest.approx(2 * math.pi) and cfg.bc == "neumann"
    assert cfg.weight_preset is None and cfg.weight_pieces[0]["x_end"] == pytest.approx(math.pi)
    assert cfg.string == "012" and cfg.sweep_values == [12.0, 30.0, 100.0]
    p = cfg.params()
    assert p.decomp.m == 1 and p.g.expr == "u**2*(1-u)"


def test_dump_round_trip():
    cfg = from_dict(parse_text(TEXT))
    assert from_dict(parse_text(dump(cfg))) == cfg
    assert from_dict(parse_text(dump(RunConfig()))) == RunConfig()


@pytest.mark.parametrize("line,field", [
    ("rho = 1.5", "rho"), ("k = 2.5", "k"), ("bc = robin", "bc"), ("frobnicate = 1", "frobnicate"),
    ("sweep.values = [3, 2]", "sweep.values"), ("string = 102", "string"), ("graded = 1", "graded"),
    ("weight.pieces[1].expr = \"x\"", "weight.pieces"), ("lam = abc", "lam"), ("r = 0.7", "r"),
])
def test_errors_name_the_field(line, field):
    with pytest.raises(ConfigError) as exc:
        from_dict(parse_text(line))
    assert exc.value.field == field
    assert repr(field) in str(exc.value)


def test_bad_line_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_text("this is not an assignment")
    with pytest.raises(ConfigError):
        load(tmp_path / "nope.cfg")


def test_digest_stable():
    assert RunConfig().digest() == RunConfig().digest()
    assert RunConfig().digest() != RunConfig(lam=13.0).digest()


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 1e4), st.floats(0.1, 1e6), st.floats(0.01, 0.99),
       st.sampled_from(["periodic", "neumann", "dirichlet"]), st.booleans())
def test_round_trip_property(c, lam, mu, rho, bc, graded):
    cfg = RunConfig(c=c, lam=lam, mu=mu, rho=rho, bc=bc, graded=graded)
    assert from_dict(parse_text(dump(cfg))) == cfg


def _const_profile(val=0.25):
    x = np.linspace(0, math.pi, 11)
    return SolutionProfile(BoundaryCondition("neumann"), {"lam": 12.0}, x, np.full_like(x, val),
                           np.zeros_like(x), np.empty(0), None, 1e-12, [val], [0.0], string=(1,))


def test_profile_round_trip(tmp_path):
    prof = _const_profile()
    path = io.write_profile(tmp_path / "p.csv", prof, dict(extra=float("inf")))
    x, u, du, meta = io.read_profile(path)
    assert np.array_equal(x, prof.x) and np.all(u == 0.25) and np.all(du == 0)
    assert meta["string"] == "1" and meta["bc"] == "neumann" and meta["extra"] == float("inf")
    lines = open(path).read().splitlines()
    assert lines[[l.startswith("#") for l in lines].index(False)] == "x,u,du"


def test_profile_read_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("# a = 1\n1,2,3\n")
    with pytest.raises(io.IoError):
        io.read_profile(p)


@pytest.mark.parametrize("g", ["logistic_dominant", "logistic_haploid"])
def test_threshold_ledger_round_trip(tmp_path, g):
    p = ProblemParams(1.0, 12.0, 12.0, figure2_weight(), make_builtin(g))
    ts = compute_thresholds(p, 0.5)
    path = io.write_thresholds(tmp_path / "t.json", ts, dict(note="x"))
    back = io.read_thresholds(path)
    assert io.dumps(back.to_dict()) == io.dumps(ts.to_dict())
    if g == "logistic_haploid":
        assert math.isnan(back.r_bar)


def test_flatten_and_slug():
    f = io.flatten(dict(a=dict(b=[1, None]), c=float("nan")))
    assert f == {"a.b.0": 1, "a.b.1": None, "c": "nan"}
    assert io.slug((0, 1, 2)) == "012" and io.slug("a b/c") == "a_b_c"
    assert io.profile_name("fig 1", "x") == "fig_1_x.csv"


def test_manifest_determinism():
    cfg = RunConfig()
    a = io.manifest("thresholds", cfg, ["/x/b.json", "/y/a.csv"], 1.0)
    b = io.manifest("thresholds", cfg, ["/y/a.csv", "/x/b.json"], 2.0)
    assert io.strip_timing(a) == io.strip_timing(b)
    assert a["files"] == ["a.csv", "b.json"] and a["config_hash"] == cfg.digest()

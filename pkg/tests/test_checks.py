
from indefbvp.checks import boundary_max, maximum_principle, profile_checks, trap, weighted_slope


def test_profile_checks_two_solutions(two_neumann, fig2n):
    for prof in two_neumann:
        out = profile_checks(prof, fig2n)
        assert out["ok"], out


def test_profile_checks_periodic(two_periodic, fig2p):
    for prof in two_periodic:
        assert maximum_principle(prof)["ok"]
        assert weighted_slope(prof, fig2p)["ok"]
        assert boundary_max(prof, fig2p)["ok"]


def test_weighted_slope_detects_violation(two_neumann, fig2n):
    prof = two_neumann[1]
    bad = type(prof)(**{**prof.__dict__, "v": -prof.v})
    assert not weighted_slope(bad, fig2n)["ok"]


def test_trap_reports(two_neumann, fig2n):
    t = trap(two_neumann[1], fig2n)
    assert t["ok"] and t["fired"] == 0

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from indefbvp.census import (SymbolString, minimal_period_label, moebius, necklace_representatives,
                             nonzero_strings, run_census, witt)
from indefbvp.errors import ValidationError
from indefbvp.solver import BoundaryCondition, SolutionProfile
from indefbvp.thresholds import compute_thresholds


def _brute_aperiodic_necklaces(m, k):
    """Count by brute force: classes of length-k words over 3^m letters with trivial stabiliser."""
    letters = list(itertools.product(range(3), repeat=m))
    seen, count = set(), 0
    for w in itertools.product(range(len(letters)), repeat=k):
        if w in seen:
            continue
        orbit = {w[i:] + w[:i] for i in range(k)}
        seen |= orbit
        count += len(orbit) == k
    return count


def test_moebius_table():
    assert [moebius(n) for n in range(1, 13)] == [1, -1, -1, 0, -1, 1, -1, 0, 0, 1, -1, 0]
    with pytest.raises(ValidationError):
        moebius(0)


@pytest.mark.parametrize("m,k", [(m, k) for m in range(1, 4) for k in range(1, 7) if m * k <= 9])
def test_witt_against_brute_force(m, k):
    assert witt(m, k).value == _brute_aperiodic_necklaces(m, k)


@pytest.mark.parametrize("m,k", [(1, 2), (1, 3), (2, 2), (3, 2), (2, 3)])
def test_necklace_representatives_count(m, k):
    reps = necklace_representatives(m, k)
    assert len(reps) == witt(m, k).value
    for s in reps:
        S = SymbolString(s, m, k)
        assert S.minimal_block_period == k
        assert s == min(S.rotate(l).symbols for l in range(k))


def test_known_witt_values():
    assert witt(1, 1).value == 3 and witt(3, 1).value == 27
    assert witt(3, 2).value == (729 - 27) // 2
    assert witt(1, 3).value == 8
    with pytest.raises(ValidationError):
        witt(0, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 12))
def test_witt_necklace_identity(m, k):
    # sum over d | k of d W(m, d) = 3^(mk)
    total = sum(d * witt(m, d).value for d in range(1, k + 1) if k % d == 0)
    assert total == 3 ** (m * k)


def test_symbol_string():
    s = SymbolString((1, 2, 0, 1, 2, 0), 3, 2)
    assert s.minimal_block_period == 1
    assert SymbolString((1, 2, 0, 0, 2, 0), 3, 2).minimal_block_period == 2
    assert s.rotate(1).symbols == s.symbols and str(s) == "120120"
    with pytest.raises(ValidationError):
        SymbolString((1, 3), 2)
    with pytest.raises(ValidationError):
        SymbolString((1, 2, 0), 2)


def test_nonzero_strings():
    ss = nonzero_strings(3)
    assert len(ss) == 26 and (0, 0, 0) not in ss and len(set(ss)) == 26


def _periodic_profile(f, L):
    x = np.linspace(0, L, 4001)
    return SolutionProfile(BoundaryCondition("periodic", 2), {}, x, f(x), np.zeros_like(x), np.empty(0), None,
                           0.0, [], [])


def test_minimal_period_label():
    P = math.pi
    ok, d = minimal_period_label(_periodic_profile(lambda x: 0.5 + 0.3 * np.sin(x), 2 * P), P, 2)
    assert ok and d[0] == pytest.approx(0.6, abs=1e-3)
    ok, d = minimal_period_label(_periodic_profile(lambda x: 0.5 + 0.3 * np.sin(2 * x), 2 * P), P, 2)
    assert not ok and d[0] < 1e-6


def test_small_census_neumann(fig2n):
    ts = compute_thresholds(fig2n, 0.5, r=0.05)
    rep = run_census(fig2n, BoundaryCondition("neumann"), ts)
    assert rep.count == 2 and not rep.missing
    assert set(rep.found) == {(1,), (2,)}
    for s, prof in rep.found.items():
        assert prof.string == s and prof.residual < 1e-8
    assert rep.min_distance() > 1e-6
    summ = rep.summary()
    assert summ["found"] == 2 and summ["expected"] == 2

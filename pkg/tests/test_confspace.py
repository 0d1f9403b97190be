import itertools
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from kpsm.confspace import (
    codim1_strata,
    codim1_strata_bruteforce,
    dim_config,
    dim_half_plane,
    dim_quadrant,
    expected_counts,
    stokes_ledger,
)
from kpsm.kgraph import Kind, KGraph, wedge


def _arc_splits(m, c):
    if c <= 1:
        yield None if c == 0 else [m]
        return
    for cut in itertools.combinations_with_replacement(range(m + 1), c - 1):
        bounds = (0,) + cut + (m,)
        yield [bounds[i + 1] - bounds[i] for i in range(c)]


CASES = [(n, m, c, arcs) for n in range(7) for m in range(7) for c in range(4)
         if 1 <= n + m and n + m + c <= 6 for arcs in _arc_splits(m, c)]


@pytest.mark.parametrize("n,m,c,arcs", CASES)
def test_constructive_matches_brute_force(n, m, c, arcs):
    fast = codim1_strata(n, m, c, arcs)
    slow = codim1_strata_bruteforce(n, m, c, arcs)
    keys = [s.key() for s in fast]
    assert len(keys) == len(set(keys))
    assert sorted(keys, key=repr) == sorted((s.key() for s in slow), key=repr)
    counts = Counter(s.location for s in fast)
    want = expected_counts(n, m, c, arcs)
    assert {k: counts.get(k, 0) for k in want} == want


def test_small_counts():
    assert expected_counts(2, 0) == {"bulk": 1, "boundary": 3, "corner": 0}
    # one bulk and one boundary point: the bulk point alone, or both together
    assert expected_counts(1, 1) == {"bulk": 0, "boundary": 2, "corner": 0}
    assert expected_counts(0, 2, 1) == {"bulk": 0, "boundary": 1, "corner": 5}


@given(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5), st.integers(0, 5),
       st.sampled_from(["open", "half-plane", "quadrant"]))
def test_dim_additive(n1, m1, n2, m2, variant):
    shift = dim_config(0, 0, variant=variant)
    lhs = dim_config(n1 + n2, m1 + m2, variant=variant) - shift
    assert lhs == (dim_config(n1, m1, variant=variant) - shift) + (dim_config(n2, m2, variant=variant) - shift)


def test_dimension_values():
    assert dim_half_plane(1, 2) == 2
    assert dim_quadrant(1, 0) == 1
    assert dim_config(2, 1, c=3) == dim_config(2, 1)
    with pytest.raises(ValueError):
        dim_config(-1, 0)
    with pytest.raises(ValueError):
        dim_config(1, 1, variant="sphere")


def test_invalid_arcs():
    with pytest.raises(ValueError):
        codim1_strata(1, 2, 2, arcs=[1])
    with pytest.raises(ValueError):
        codim1_strata(0, 0)


def _ledger_graphs():
    F, P, R = Kind.GROUND_F, Kind.PI, Kind.R
    yield wedge(), None
    yield KGraph((F, F), (P, P), ((0, 3), (0, 1))), None
    yield KGraph((F,), (P, R), ((0, 2), (0,))), {"corners": ["C1"], "arcs": [1]}
    yield KGraph((F, F), (P,), ((0, 1),)), {"corners": ["C2", "C1"], "arcs": [1, 1]}


@pytest.mark.parametrize("g,profile", list(_ledger_graphs()))
def test_ledger_profiles_satisfy_their_equation(g, profile):
    faces = stokes_ledger(g, profile)
    assert faces
    tags = {"bulk", "boundary-operator", "corner", "vanishing-degree", "vanishing-tail", "vanishing-corner"}
    for f in faces:
        assert f.tag in tags
        if f.profile is not None:
            assert f.profile.satisfies()
        f.to_json()


def test_wedge_ledger():
    faces = stokes_ledger(wedge())
    by_block = {tuple(sorted(f.stratum.block)): f.tag for f in faces}
    # the Pi vertex alone at the boundary: its edges leave the block
    assert by_block[("b0",)] == "vanishing-tail"
    # the two ground points meeting: zero-dimensional fiber, no internal edge
    assert by_block[("e0", "e1")] == "boundary-operator"
    # the bulk point landing on one ground point carries its one internal edge
    assert by_block[("b0", "e0")] == "boundary-operator"

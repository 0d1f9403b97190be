import itertools
import random

import pytest
from hypothesis import given, strategies as st

from kpsm.kgraph import (
    BoundExceeded,
    GraphError,
    Kind,
    KGraph,
    canonical_form,
    canonicalize,
    class_representative,
    deserialize,
    enumerate_graphs,
    labeled_graphs,
    serialize,
    wedge,
)

SIZES = [(p, r, g) for p in range(4) for r in range(4 - p) for g in range(4) if p + r]


@pytest.mark.parametrize("n_pi,n_r,n_ground", SIZES)
def test_orbits_cover_labeled_graphs(n_pi, n_r, n_ground):
    classes = enumerate_graphs(n_pi, n_r, n_ground)
    labeled = list(labeled_graphs(n_pi, n_r, n_ground))
    assert sum(c.orbit_size for c in classes) == len(labeled)
    assert len({c.encoding for c in classes}) == len(classes)


@pytest.mark.parametrize("n_pi,n_r,n_ground", SIZES)
def test_valence_and_no_tadpoles(n_pi, n_r, n_ground):
    for g in labeled_graphs(n_pi, n_r, n_ground):
        ng = g.n_ground
        for v, (kind, targets) in enumerate(zip(g.aerial, g.edges)):
            assert len(targets) == kind.out_valence
            assert ng + v not in targets
            assert len(set(targets)) == len(targets)


def _random_graph(rng):
    n_pi, n_r, ng = rng.randint(0, 3), rng.randint(0, 2), rng.randint(0, 3)
    if n_pi + n_r == 0:
        n_pi = 1
    aerial = (Kind.PI,) * n_pi + (Kind.R,) * n_r
    total = ng + len(aerial)
    if total < 3:
        ng += 3 - total
        total = 3
    edges = []
    for v, kind in enumerate(aerial):
        others = [t for t in range(total) if t != ng + v]
        edges.append(tuple(rng.sample(others, kind.out_valence)))
    return KGraph((Kind.GROUND_F,) * ng, aerial, tuple(edges))


def test_canonical_form_invariant_under_relabeling():
    rng = random.Random(0)
    for _ in range(10_000):
        g = _random_graph(rng)
        pi_pos = [v for v, k in enumerate(g.aerial) if k is Kind.PI]
        r_pos = [v for v, k in enumerate(g.aerial) if k is Kind.R]
        perm = [0] * g.n_aerial
        for group in (pi_pos, r_pos):
            shuffled = group[:]
            rng.shuffle(shuffled)
            for a, b in zip(group, shuffled):
                perm[a] = b
        h = g.relabel(perm)
        assert canonical_form(h) == canonical_form(g)
        c, _, _ = canonicalize(g)
        assert canonical_form(c) == canonical_form(g)
        assert canonicalize(c)[0] == c


def test_representative_sign_counts_reversals():
    g = wedge()
    rep, sign = class_representative(g)
    assert sign == 1
    rev, sign = class_representative(g.reverse(0))
    assert rev == rep and sign == -1


@given(st.integers(0, 2**32 - 1))
def test_serialize_roundtrip(seed):
    g = _random_graph(random.Random(seed))
    assert deserialize(serialize(g)) == g


def test_deserialize_rejects_garbage():
    for bad in ["", "2;0", "x;0;P:0,1", "2;1;P:0,1", "2;0;P:0,0", "2;0;P:0,2"]:
        with pytest.raises(GraphError):
            deserialize(bad)


def test_wedge_is_the_only_order_one_class():
    classes = enumerate_graphs(1, 0, 2)
    assert [serialize(c.representative) for c in classes] == [serialize(wedge())]


def test_bounds():
    with pytest.raises(BoundExceeded):
        enumerate_graphs(7, 0, 2)


def test_symmetric_classes_are_flagged():
    # two Pi vertices both pointing at the same pair of ground points swap into each other
    signs = {serialize(c.representative): c.symmetry_sign for c in enumerate_graphs(2, 0, 2)}
    assert all(s in (1, -1) for s in signs.values())
    assert signs["2;0;P:0,1|P:0,1"] == 1

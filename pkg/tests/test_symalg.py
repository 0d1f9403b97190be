import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from kpsm.kgraph import Kind, KGraph, labeled_graphs, wedge
from kpsm.symalg import (
    FormalSeries,
    Multivector,
    MultiDiffOp,
    ParseError,
    TruncPoly,
    apply,
    feynman_operator,
    load_poisson_config,
    parse_poly,
    poisson_from_config,
    schouten_jacobiator,
)

coeffs = st.fractions(min_value=-5, max_value=5, max_denominator=6)


def polys(dim=2, max_deg=3):
    exps = st.tuples(*[st.integers(0, max_deg)] * dim)
    return st.dictionaries(exps, coeffs, max_size=5).map(
        lambda d: TruncPoly(dim, {k + (0,) * dim: v for k, v in d.items()}))


def bivectors(dim):
    return st.lists(polys(dim, 2), min_size=dim * (dim - 1) // 2, max_size=dim * (dim - 1) // 2).map(
        lambda ps: Multivector.bivector(dim, dict(zip([(i, j) for i in range(dim) for j in range(i + 1, dim)], ps))))


def test_parse_and_print_roundtrip():
    p = parse_poly("3/2*x1^2*x2 - x2 + 1/3", 2)
    assert parse_poly(str(p), 2) == p
    assert p.evaluate([2, 3]) == Fraction(3, 2) * 4 * 3 - 3 + Fraction(1, 3)


@pytest.mark.parametrize("text", ["x3", "x1 +", "import os", "x1**-1", "2.5*x1", "x1/x2"])
def test_parse_rejects(text):
    with pytest.raises(ParseError):
        parse_poly(text, 2)


def test_y_cutoff_truncates():
    y = TruncPoly.var(1, "y", 0, 3)
    assert (y ** 4).is_zero()
    assert (y ** 3).y_degree() == 3


@given(polys(), polys(), polys())
def test_ring_axioms(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a * b == b * a


@given(polys(), polys(), st.integers(0, 1))
def test_leibniz(a, b, i):
    assert (a * b).diff(i) == a.diff(i) * b + a * b.diff(i)


@given(bivectors(2))
def test_every_planar_bivector_is_poisson(pi):
    assert schouten_jacobiator(pi).is_zero()


def test_constant_bivector_is_poisson():
    pi = Multivector.bivector(3, {(0, 1): "1", (0, 2): "-2", (1, 2): "5/3"})
    assert schouten_jacobiator(pi).is_zero()


def test_jacobiator_of_the_control():
    pi = Multivector.bivector(3, {(0, 1): "x1", (1, 2): "x2", (0, 2): "-x3"})
    J = schouten_jacobiator(pi)
    assert J.component((0, 1, 2)) == parse_poly("-x1 - x2 - x3", 3)
    assert J.component((1, 0, 2)) == -J.component((0, 1, 2))


def test_so3_is_poisson():
    pi = Multivector.bivector(3, {(0, 1): "x3", (1, 2): "x1", (2, 0): "x2"})
    assert schouten_jacobiator(pi).is_zero()


def test_wedge_operator_is_the_bivector_contraction():
    pi = Multivector.bivector(2, {(0, 1): "x1^2"})
    op = feynman_operator(wedge(), [pi], "x")
    f, g = parse_poly("x1*x2", 2), parse_poly("x2^2", 2)
    want = pi.component((0, 1)) * (f.diff(0) * g.diff(1) - f.diff(1) * g.diff(0))
    assert apply(op, [f, g]) == want


@given(bivectors(2), coeffs)
def test_feynman_operator_is_multilinear(pi, c):
    for g in labeled_graphs(2, 0, 2):
        base = feynman_operator(g, [pi, pi], "x")
        scaled = feynman_operator(g, [pi.scale(c), pi], "x")
        assert scaled == base.scale(c)


def test_feynman_value_invariant_under_relabeling():
    rng = random.Random(1)
    pi = Multivector.bivector(3, {(0, 1): "x3 + x1^2", (1, 2): "x1", (0, 2): "x2*x3"})
    v = Multivector.vector(3, [parse_poly(t, 3) for t in ("x2", "1", "x1*x3")])
    args = [parse_poly("x1^2*x2 + x3", 3), parse_poly("x2*x3^2", 3)]
    graphs = list(labeled_graphs(2, 1, 2))
    for _ in range(1000):
        g = rng.choice(graphs)
        decorations = [pi if k is Kind.PI else v for k in g.aerial]
        pis = [i for i, k in enumerate(g.aerial) if k is Kind.PI]
        perm = list(range(g.n_aerial))
        if rng.random() < 0.5:
            perm[pis[0]], perm[pis[1]] = perm[pis[1]], perm[pis[0]]
        h = g.relabel(perm)
        dec_h = [decorations[perm.index(p)] for p in range(g.n_aerial)]
        assert apply(feynman_operator(g, decorations, "x"), args) == apply(feynman_operator(h, dec_h, "x"), args)


def test_compose_inserts_into_a_slot():
    d = 2
    m = MultiDiffOp.product(d, 2, "x")
    dx = MultiDiffOp.vector_field(Multivector.vector(d, [TruncPoly.const(d, 1), TruncPoly.zero(d)]), "x")
    op = m.compose(dx, 0)
    f, g = parse_poly("x1^2", 2), parse_poly("x2", 2)
    assert op.apply([f, g]) == f.diff(0) * g


def test_series_format():
    zero = TruncPoly.zero(2)
    s = FormalSeries([parse_poly("x1*x2", 2), TruncPoly.const(2, Fraction(1, 2)), zero])
    assert s.format() == "x1*x2 + (1/2) ε"
    assert FormalSeries([zero, zero]).format() == "0"


def test_poisson_config(tmp_path):
    pi = poisson_from_config({"dim": 3, "components": [{"i": 2, "j": 1, "poly": "x3"}]})
    assert pi.component((0, 1)) == parse_poly("-x3", 3)
    for bad in [{"dim": 2, "components": [{"i": 1, "j": 1, "poly": "1"}]},
                {"dim": 2, "components": [{"i": 1, "j": 3, "poly": "1"}]},
                {"dim": 2, "components": [{"i": 1, "j": 2}]},
                {"dim": 2, "components": [{"i": 1, "j": 2, "poly": "1"}, {"i": 2, "j": 1, "poly": "1"}]},
                {"components": []}]:
        with pytest.raises(ParseError):
            poisson_from_config(bad)
    path = tmp_path / "p.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_poisson_config(path)

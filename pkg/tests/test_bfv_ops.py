import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from kpsm.bfv_ops import (
    LOCATIONS,
    CollapseProfile,
    LocalBoundaryOp,
    OrderExceeded,
    Representation,
    RepresentationMismatch,
    assemble_E_rep,
    assemble_X_rep,
    bracket,
    c2_corner_graphs,
    classify_collapses,
    classify_collapses_bruteforce,
    compose,
    corner_term_leading,
    corrupt,
    duality_mismatches,
    nilpotency_residual,
)
from kpsm.corpus import get_entry
from kpsm.formal_geom import FormalExp, r_field
from kpsm.formality import star
from kpsm.symalg import FormalSeries, MultiDiffOp, TruncPoly, parse_poly

D = 2


def random_op(rng, arity, max_order=2):
    terms = {}
    for _ in range(rng.randint(1, 3)):
        slots = tuple(tuple(rng.randint(0, max_order) if rng.random() < 0.6 else 0 for _ in range(D))
                      for _ in range(arity))
        coeff = TruncPoly.monomial(D, (rng.randint(0, 2), rng.randint(0, 1)),
                                   coeff=Fraction(rng.randint(-3, 3) or 1, rng.randint(1, 3)))
        terms[slots] = coeff
    return MultiDiffOp(D, arity, terms, "x")


def random_piece(rng, order=1):
    form = rng.choice([(), (0,), (1,), (0, 1)])
    arity = rng.randint(0 if form else 1, 3)
    series = FormalSeries([random_op(rng, arity) for _ in range(order + 1)], order)
    op = LocalBoundaryOp(Representation.E, D, order, "x")
    op.add_piece(form, arity, series)
    return op, len(form) + arity - 1


def canon(op):
    return {k: v for k, v in op.pieces.items() if not v.is_zero()}


def sub(a, b):
    out = a.copy()
    for k, s in b.pieces.items():
        out.add_piece(*k, s, -1)
    return out


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_partial_insertions_are_associative(seed):
    rng = random.Random(seed)
    a, b, c = random_op(rng, 2), random_op(rng, 2), random_op(rng, rng.randint(1, 2))
    i, j = rng.randint(0, 1), rng.randint(0, 1)
    # sequential: c lands inside b
    assert a.compose(b, i).compose(c, i + j) == a.compose(b.compose(c, j), i)
    # parallel: b and c land in different slots of a
    left = a.compose(b, 0).compose(c, 1 + b.arity - 1)
    right = a.compose(c, 1).compose(b, 0)
    assert left == right


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_composition_is_graded_pre_lie(seed):
    # the associator of the summed composition is graded symmetric in its last two entries
    rng = random.Random(seed)
    (a, _), (b, db), (c, dc) = random_piece(rng), random_piece(rng), random_piece(rng)
    assoc_bc = sub(compose(compose(a, b), c), compose(a, compose(b, c)))
    assoc_cb = sub(compose(compose(a, c), b), compose(a, compose(c, b)))
    sign = -1 if (db * dc) % 2 else 1
    rhs = assoc_cb.copy()
    rhs.pieces = {k: (v if sign > 0 else -v) for k, v in assoc_cb.pieces.items()}
    assert canon(sub(assoc_bc, rhs)) == {}


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_bracket_is_graded_antisymmetric(seed):
    rng = random.Random(seed)
    (a, da), (b, db) = random_piece(rng), random_piece(rng)
    ab, ba = bracket(a, b), bracket(b, a)
    sign = 1 if (da * db) % 2 else -1
    scaled = ba.copy()
    scaled.pieces = {k: (v if sign > 0 else -v) for k, v in ba.pieces.items()}
    assert canon(sub(ab, scaled)) == {}


@pytest.mark.parametrize("name", ["moyal-2d", "so3-linear", "quadratic-2d"])
def test_plain_product_squares_to_zero(name):
    op = assemble_E_rep(star(get_entry(name).poisson, 2))
    assert nilpotency_residual(op).ok


def test_nonpoisson_product_does_not_square_to_zero():
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        op = assemble_E_rep(star(get_entry("nonpoisson-negcontrol").poisson, 2))
    rep = nilpotency_residual(op)
    assert not rep.residuals["deg0"].zero


def test_corrupted_second_order_slot_is_detected():
    op = assemble_E_rep(star(get_entry("moyal-2d").poisson, 2))
    bad = corrupt(op, (), 2, 2, ((2, 0), (0, 1)), Fraction(1, 7))
    rep = nilpotency_residual(bad)
    assert not rep.residuals["deg0"].zero
    assert rep.residuals["deg0"].norm == Fraction(2, 7)


def test_biderivation_corruption_is_a_cocycle():
    # d_a (x) d_b changes the product by a Hochschild cocycle: nothing to detect
    op = assemble_E_rep(star(get_entry("moyal-2d").poisson, 2))
    bad = corrupt(op, (), 2, 2, ((1, 0), (0, 1)), Fraction(1, 7))
    assert nilpotency_residual(bad).ok


def test_evaluated_residual_agrees():
    op = assemble_E_rep(star(get_entry("quadratic-2d").poisson, 2))
    assert nilpotency_residual(op, evaluate_degree=2).ok


@pytest.mark.parametrize("name", ["moyal-2d", "moyal-3d", "so3-linear", "quadratic-2d"])
def test_duality(name):
    pi = get_entry(name).poisson
    assert duality_mismatches(assemble_X_rep(pi), assemble_E_rep(star(pi, 2))) == []


def test_duality_sees_a_different_bivector():
    pi = get_entry("quadratic-2d").poisson
    other = get_entry("moyal-2d").poisson
    assert duality_mismatches(assemble_X_rep(pi), assemble_E_rep(star(other, 2)))


def test_x_rep_limits():
    pi = get_entry("so3-linear").poisson
    x = assemble_X_rep(pi)
    with pytest.raises(OrderExceeded):
        assemble_X_rep(pi, order=2)
    with pytest.raises(RepresentationMismatch):
        compose(x, x)
    # linear Pi: second derivatives vanish, so the order-one X coefficients do too
    assert x.terms() == []
    quad = assemble_X_rep(get_entry("quadratic-2d").poisson)
    assert {t.coefficient[1] for t in quad.terms()} == {TruncPoly.const(2, 1), TruncPoly.const(2, -1)}


def test_terms_carry_taylor_labels():
    op = assemble_E_rep(star(get_entry("moyal-2d").poisson, 1))
    perturbative = op.terms(perturbative_only=True)
    assert perturbative and all(not t.coefficient[0] for t in perturbative)
    assert op.to_json()["representation"] == "E"


def test_collapse_classification():
    for loc in LOCATIONS:
        solved = classify_collapses(loc)
        assert {(p.k, p.r) for p in solved} == classify_collapses_bruteforce(loc)
        for p in solved:
            assert all(p.satisfies(m) for m in range(5))
    with pytest.raises(ValueError):
        classify_collapses("nowhere")


def test_vanishing_flags():
    assert CollapseProfile("corner-C2", 1, 0, m=2).vanishing()
    assert not CollapseProfile("corner-C2", 1, 0, m=0).vanishing()
    assert not CollapseProfile("corner-C1", 1, 0, m=2).vanishing()


def test_corner_graphs_fill_the_fiber():
    for g in c2_corner_graphs().values():
        n, k = g.n_aerial, g.n_ground
        assert sum(len(t) for t in g.edges) == 2 * n + k - 1


def test_corner_terms():
    r = r_field(FormalExp.flat(2, 4))
    gamma = [FormalSeries([TruncPoly.zero(2, 4)] * 3, 2) for _ in range(2)]
    c1 = corner_term_leading(gamma, r, samples=20_000, seed=1)
    # the R profile weight vanishes: each kernel kills one of the two arrows
    assert abs(c1.r_weight.mean) < 1e-12
    assert c1.is_zero
    c2 = corner_term_leading(gamma, r, samples=20_000, seed=1, location="corner-C2")
    assert c2.is_zero and len(c2.c2_weights) == 6
    lead = [FormalSeries([TruncPoly.zero(2, 4), parse_poly("y1^2", 2, 4), TruncPoly.zero(2, 4)], 2)] * 2
    c1 = corner_term_leading(lead, r, samples=20_000, seed=1)
    assert c1.gamma_part[0][0] == 1 and not c1.is_zero

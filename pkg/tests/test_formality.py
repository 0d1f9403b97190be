import itertools
import warnings
from fractions import Fraction

import pytest

from kpsm.corpus import get_entry
from kpsm.formal_geom import FormalExp, r_field, taylor_pullback
from kpsm.formality import (
    ExactWeightUnavailable,
    NonPoissonWarning,
    check_structural,
    connection_A,
    curvature_F,
    graph_weight,
    monomial_basis,
    solve_gamma,
    star,
    twist_residual,
)
from kpsm.kgraph import serialize
from kpsm.symalg import Multivector, TruncPoly, parse_poly

CORPUS = ["moyal-2d", "moyal-3d", "so3-linear", "quadratic-2d"]


@pytest.mark.parametrize("name", CORPUS)
def test_unit(name):
    pi = get_entry(name).poisson
    sp = star(pi, 2)
    one = TruncPoly.const(pi.dim, 1)
    for f in monomial_basis(pi.dim, 2):
        for out in (sp(f, one), sp(one, f)):
            assert out[0] == f and out[1].is_zero() and out[2].is_zero()


@pytest.mark.parametrize("name", CORPUS)
def test_first_order_commutator_is_the_poisson_bracket(name):
    pi = get_entry(name).poisson
    sp = star(pi, 2)
    d = pi.dim
    for f, g in itertools.product(monomial_basis(d, 2), repeat=2):
        bracket = TruncPoly.zero(d)
        for i, j in itertools.permutations(range(d), 2):
            c = pi.component((i, j))
            if c is not None:
                bracket = bracket + c * f.diff(i) * g.diff(j)
        assert sp(f, g)[1] - sp(g, f)[1] == bracket


def test_order_cap():
    pi = get_entry("moyal-2d").poisson
    with pytest.raises(ExactWeightUnavailable, match="beyond order 2"):
        star(pi, 3)


def test_non_poisson_warns():
    with pytest.warns(NonPoissonWarning):
        star(get_entry("nonpoisson-negcontrol").poisson, 1)


def test_wrong_weights_are_caught():
    # a perturbed order-2 table must break associativity, else the check is vacuous
    pi = get_entry("quadratic-2d").poisson

    def skewed(g):
        w = graph_weight(g)
        return w + Fraction(1, 7) if serialize(g) == "2;0;P:0,3|P:0,1" else w

    sp = star(pi, 2, weights=skewed)
    assert not check_structural(sp, basis_degree=2, names=["deg0"]).ok


@pytest.mark.parametrize("name", ["quadratic-2d", "so3-linear"])
def test_gamma_solves_the_twist_equation(name):
    pi = get_entry(name).poisson
    phi = FormalExp.flat(pi.dim)
    r = r_field(phi)
    lifted = taylor_pullback(phi, pi)
    A, F = connection_A(r, lifted, 2), curvature_F(r, lifted, 2)
    sp = star(lifted, 2, wrt="y")
    gamma = solve_gamma(F, A, sp)
    assert all(s.is_zero() for s in twist_residual(F, A, sp, gamma).values())


def test_flat_map_trivializes_even_quadratic_data():
    # with the flat map R is a constant vector field, and every graph with
    # an R vertex receiving no edge vanishes beyond order zero
    pi = get_entry("quadratic-2d").poisson
    phi = FormalExp.flat(2)
    r = r_field(phi)
    lifted = taylor_pullback(phi, pi)
    A, F = connection_A(r, lifted, 2), curvature_F(r, lifted, 2)
    assert all(A.components[i][n].is_zero() for i in range(2) for n in (1, 2))
    assert F.is_zero()


def test_structural_report_serializes():
    pi = get_entry("moyal-2d").poisson
    rep = check_structural(star(pi, 2), basis_degree=1, names=["deg0"])
    js = rep.to_json()
    assert js["ok"] and js["residuals"]["deg0"]["norm"] == "0"

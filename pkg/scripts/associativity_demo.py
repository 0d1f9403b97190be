"""Associator of the graph-sum star product on the bundled bivectors.

For every corpus entry the eps^0..eps^2 associator is evaluated on all
triples of monomials up to a given degree.  For the non-Poisson control the
eps^2 part is compared with one sixth of the Jacobiator contraction.
"""

from __future__ import annotations

import argparse
import itertools
import time
import warnings
from fractions import Fraction

from kpsm.corpus import load_corpus
from kpsm.formality import NonPoissonWarning, check_structural, monomial_basis, star
from kpsm.symalg import TruncPoly, schouten_jacobiator


def jacobiator_term(J, f, g, h):
    acc = TruncPoly.zero(J.dim)
    for i, j, k in itertools.permutations(range(J.dim), 3):
        c = J.component((i, j, k))
        if c is not None:
            acc = acc + c * f.diff(i) * g.diff(j) * h.diff(k)
    return acc.scale(Fraction(1, 6))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degree", type=int, default=2, help="largest monomial degree of the arguments")
    args = ap.parse_args(argv)

    print(f"{'entry':<24}{'triples':>9}{'nonzero':>9}{'seconds':>9}")
    for entry in load_corpus().values():
        pi = entry.poisson
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonPoissonWarning)
            sp = star(pi, 2)
        res = check_structural(sp, basis_degree=args.degree, names=["deg0"]).residuals["deg0"]
        print(f"{entry.name:<24}{res.evaluations:>9}{res.nonzero:>9}{time.perf_counter() - t0:>9.2f}")
        if entry.expect != "pass":
            J = schouten_jacobiator(pi)
            basis = monomial_basis(pi.dim, args.degree)
            agree = sum(
                (sp.mul(sp(f, g), h) - sp.mul(f, sp(g, h)))[2] == jacobiator_term(J, f, g, h)
                for f, g, h in itertools.product(basis, repeat=3))
            print(f"  eps^2 residual equals (1/6) J(df, dg, dh) on {agree} of {len(basis) ** 3} triples")
            print(f"  first nonzero: {res.first_failure}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Produce src/kpsm/data/weights.json: exact weights of the star-product graphs.

Two independent routes are combined for every class with at most two Pi
vertices and two ground points:

1. Monte Carlo integration of the angle forms, followed by rational
   reconstruction (smallest denominator inside 4 standard errors).
2. The order-2 associativity constraint.  The eps^2 associator is affine in
   the unknown order-2 weights; equating all of its operator coefficients to
   zero over several Poisson structures gives a linear system over Q, solved
   by exact elimination.

The reconstructed values must satisfy the linear system exactly; directions
the system leaves free are reported and fixed by the Monte Carlo values.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from kpsm.formality import star
from kpsm.kgraph import KGraph, Kind, enumerate_graphs, serialize, wedge
from kpsm.symalg import Multivector, TruncPoly, parse_poly
from kpsm.weights import mc_weight

OUT = Path(__file__).resolve().parents[1] / "src" / "kpsm" / "data" / "weights.json"


def reconstruct(mean: float, stderr: float, max_den: int = 64, sigmas: float = 4.0):
    for q in range(1, max_den + 1):
        p = round(mean * q)
        if abs(p / q - mean) <= sigmas * stderr:
            return Fraction(p, q)
    return None


def poisson_structures():
    """Bivectors used as constraint generators (all satisfy Jacobi)."""
    out = {
        "so3-linear": Multivector.bivector(3, {(0, 1): "x3", (1, 2): "x1", (2, 0): "x2"}),
        "quadratic-2d": Multivector.bivector(2, {(0, 1): "x1^2"}),
        "cubic-2d": Multivector.bivector(2, {(0, 1): "x1*x2^2 + x1 + 2*x2"}),
    }
    # Pi^{ij} = eps^{ijk} d_k C is Poisson for every C
    for name, casimir in (("casimir-xyz", "x1*x2*x3"), ("casimir-mixed", "x1^2 + x2*x3 + x3^3")):
        c = parse_poly(casimir, 3)
        out[name] = Multivector(3, 2, {(0, 1): c.diff(2), (1, 2): c.diff(0), (2, 0): c.diff(1)})
    return out


def associator_eps2(pi: Multivector, weights) -> dict:
    sp = star(pi, 2, "x", weights=weights, warn=False)
    op = sp.associator_operator()[2]
    rows = {}
    for slots, coeff in op.terms.items():
        for mono, c in coeff.terms.items():
            rows[(slots, mono)] = c
    return rows


def solve_rational(rows, n):
    """Row-reduce the augmented system; returns (particular solution or None, free columns, rank)."""
    mat = [list(r) for r in rows]
    piv_cols = []
    r = 0
    for col in range(n):
        pivot = next((i for i in range(r, len(mat)) if mat[i][col] != 0), None)
        if pivot is None:
            continue
        mat[r], mat[pivot] = mat[pivot], mat[r]
        inv = 1 / mat[r][col]
        mat[r] = [v * inv for v in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][col] != 0:
                f = mat[i][col]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        piv_cols.append(col)
        r += 1
    for row in mat[r:]:
        if row[n] != 0:
            return None, [], r
    sol = [Fraction(0)] * n
    for i, col in enumerate(piv_cols):
        sol[col] = mat[i][n]
    free = [c for c in range(n) if c not in piv_cols]
    return sol, free, r


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=4_000_000)
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args(argv)

    classes = [c for n in (1, 2) for c in enumerate_graphs(n, 0, 2)]
    print(f"{len(classes)} classes with 1 or 2 Pi vertices and two ground points")
    estimates = {}
    for cls in classes:
        t0 = time.perf_counter()
        est = mc_weight(cls.representative, "kontsevich", args.samples, args.seed)
        exact = reconstruct(est.mean, est.stderr)
        if cls.symmetry_sign < 0:
            exact = Fraction(0)
        estimates[serialize(cls.representative)] = (cls, est, exact)
        print(f"  {serialize(cls.representative):<16} aut={cls.automorphism_count} "
              f"mean={est.mean:+.6f} se={est.stderr:.6f} -> {exact}  ({time.perf_counter() - t0:.1f}s)")

    order1 = [k for k, (c, _, _) in estimates.items() if c.representative.n_aerial == 1]
    unknown = [k for k, (c, _, _) in estimates.items()
               if c.representative.n_aerial == 2 and c.symmetry_sign > 0]
    wedge_key = serialize(wedge())
    if estimates[wedge_key][2] != Fraction(1, 2):
        print("wedge weight did not reconstruct to 1/2", file=sys.stderr)
        return 1

    def weights_for(vec):
        table = {wedge_key: Fraction(1, 2)}
        table.update(dict(zip(unknown, vec)))
        return lambda g: table.get(serialize(g), Fraction(0))

    n = len(unknown)
    rows = []
    for name, pi in poisson_structures().items():
        base = associator_eps2(pi, weights_for([Fraction(0)] * n))
        cols = []
        for c in range(n):
            e = [Fraction(0)] * n
            e[c] = Fraction(1)
            r = associator_eps2(pi, weights_for(e))
            cols.append(r)
        keys = set(base)
        for r in cols:
            keys |= set(r)
        for key in sorted(keys):
            b = base.get(key, Fraction(0))
            rows.append([cols[c].get(key, Fraction(0)) - b for c in range(n)] + [-b])
    sol, free, rank = solve_rational(rows, n)
    if sol is None:
        print("the associativity system is inconsistent", file=sys.stderr)
        return 1
    print(f"associativity system: {len(rows)} equations, rank {rank}, free directions {[unknown[f] for f in free]}")

    mc_vec = [estimates[k][2] for k in unknown]
    residual = [sum(row[c] * mc_vec[c] for c in range(n)) - row[n] for row in rows]
    if any(residual):
        print("reconstructed weights violate associativity", file=sys.stderr)
        return 1
    print("reconstructed weights satisfy every associativity equation exactly")

    entries = [{"graph": "2;0;", "order": 0, "exact": "1", "route": "empty integral"},
               {"graph": "1;1;R:0", "order": 0, "exact": "1",
                "route": "single angle integral over a half circle, checked by Monte Carlo"}]
    for key, (cls, est, exact) in estimates.items():
        pinned = key in unknown and unknown.index(key) not in free
        route = "associativity system and Monte Carlo" if pinned else "Monte Carlo"
        if cls.symmetry_sign < 0:
            route = "orientation-reversing automorphism"
        entries.append({
            "graph": key,
            "order": cls.representative.n_aerial,
            "exact": f"{exact.numerator}/{exact.denominator}" if exact.denominator != 1 else str(exact.numerator),
            "automorphisms": cls.automorphism_count,
            "mean": est.mean,
            "stderr": est.stderr,
            "samples": est.samples,
            "seed": est.seed,
            "route": route,
        })
    r_est = mc_weight(KGraph((Kind.GROUND_F,), (Kind.R,), ((0,),)), "kontsevich", 10**5, args.seed)
    if reconstruct(r_est.mean, r_est.stderr) != 1:
        print("single R-arrow weight did not reconstruct to 1", file=sys.stderr)
        return 1
    entries[1].update(mean=r_est.mean, stderr=r_est.stderr, samples=r_est.samples, seed=r_est.seed)
    doc = {
        "description": "Exact weights of half-plane graph class representatives; normalization "
                       "(2 pi)^-|E| times the integral of the wedge of edge angle forms.",
        "sign_rule": "a member of a class differs from the representative by -1 per reversed Pi "
                     "vertex and by the sign of the permutation of R vertices",
        "weights": entries,
    }
    args.out.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

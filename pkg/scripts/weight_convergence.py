"""Monte Carlo error of the order-2 star-product weights against the frozen table."""

from __future__ import annotations

import argparse
from fractions import Fraction

from kpsm.kgraph import deserialize
from kpsm.weights import mc_weight, table_rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, nargs="+", default=[10**4, 10**5, 10**6])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rows = [r for r in table_rows() if r["order"] >= 1]
    print(f"{'graph':<18}{'exact':>7}" + "".join(f"{f'z@{n:.0e}':>11}" for n in args.samples))
    worst = 0.0
    for row in rows:
        g = deserialize(row["graph"])
        exact = float(Fraction(row["exact"]))
        zs = []
        for n in args.samples:
            w = mc_weight(g, "kontsevich", n, args.seed)
            zs.append((w.mean - exact) / w.stderr if w.stderr else 0.0)
        worst = max(worst, max(abs(z) for z in zs))
        print(f"{row['graph']:<18}{row['exact']:>7}" + "".join(f"{z:>11.2f}" for z in zs))
    print(f"largest deviation {worst:.2f} standard errors")
    return 0 if worst <= 4 else 1


if __name__ == "__main__":
    raise SystemExit(main())

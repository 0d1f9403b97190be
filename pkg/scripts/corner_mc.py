"""Quadrant Monte Carlo integrals of the corner collapse graphs.

Equal-condition kernels (both edges see the same brane on both axes) give
integrands that vanish identically; the mixed kernels S1 and S2 are run on
the same graphs as a contrast, so that a sampler returning zeros for every
input would show up.  The last rows are the R-vertex profile at a corner
with different conditions on its two sides.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from kpsm.bfv_ops import c2_corner_graphs
from kpsm.weights import RawGraph, mc_weight


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=10**5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, help="also write the table as JSON")
    args = ap.parse_args(argv)

    rows = []
    for name, g in c2_corner_graphs().items():
        for kind in ("a1", "a2", "s1", "s2"):
            rows.append((name, kind, mc_weight(g, kind, args.samples, args.seed)))
    cycle = RawGraph(1, ((0,),), ground_edges=((0, 1),))
    for kind in ("s1", "s2"):
        rows.append(("r-vertex-two-cycle", kind, mc_weight(cycle, kind, args.samples, args.seed)))

    print(f"{'graph':<22}{'kernel':>7}{'mean':>14}{'stderr':>12}{'|mean|/stderr':>15}")
    for name, kind, w in rows:
        z = abs(w.mean) / w.stderr if w.stderr else 0.0
        print(f"{name:<22}{kind:>7}{w.mean:>14.3e}{w.stderr:>12.2e}{z:>15.2f}")
    if args.out:
        args.out.write_text(json.dumps([{"graph": n, **w.to_json()} for n, _, w in rows], indent=1) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Codimension-one strata of configuration spaces on a surface with boundary and corners.

Points are labeled ``b0, b1, ...`` (bulk) and ``e0, e1, ...`` (boundary).
The boundary is a circle cut by ``c`` corners into ``c`` arcs; arc ``j``
runs from corner ``j`` to corner ``j + 1`` (mod c).  Without corners the
boundary is a single line, the half-plane model.  Boundary points keep their
order along their arc.

A face is the collapse of exactly one block:

* bulk (Type I): at least two bulk points meet in the interior;
* boundary (Type II): some bulk points and a run of consecutive points of
  one arc meet on that arc; a single bulk point reaching the boundary alone
  counts as a face, a lone boundary point does not;
* corner (Type III): some bulk points together with the last points of the
  arc ending at a corner and the first points of the arc starting there
  meet at that corner; at least one point takes part.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

from .bfv_ops import CollapseProfile
from .kgraph import Kind, KGraph

__all__ = [
    "StratumDescriptor",
    "Face",
    "dim_config",
    "dim_half_plane",
    "dim_quadrant",
    "codim1_strata",
    "codim1_strata_bruteforce",
    "expected_counts",
    "stokes_ledger",
]

LOCATIONS = ("bulk", "boundary", "corner")


@dataclass(frozen=True)
class StratumDescriptor:
    ambient: tuple  # (n bulk, m boundary, c corners)
    block: frozenset
    location: str
    codimension: int = 1
    corner: int | None = None
    # for corner collapses: how many points come from the arc before / after the corner
    split: tuple | None = None

    @property
    def kind(self) -> str:
        return {"bulk": "I", "boundary": "II", "corner": "III"}[self.location]

    def bulk_points(self) -> list[str]:
        return sorted(p for p in self.block if p.startswith("b"))

    def boundary_points(self) -> list[str]:
        return sorted(p for p in self.block if p.startswith("e"))

    def key(self) -> tuple:
        return (self.location, tuple(sorted(self.block)), self.corner, self.split)

    def to_json(self) -> dict:
        return {"ambient": list(self.ambient), "type": self.kind, "block": sorted(self.block),
                "corner": self.corner, "split": None if self.split is None else list(self.split)}


def dim_config(n: int, m: int, c: int = 0, surface_dim: int = 2, variant: str = "open") -> int:
    """Dimension of the configuration space of n bulk and m boundary points.

    ``open``: the points on the surface (corners are fixed marks and add no
    dimension).  ``half-plane``: modulo translations along the boundary and
    scalings (minus 2).  ``quadrant``: modulo scalings only (minus 1).
    """
    if min(n, m, c) < 0:
        raise ValueError("counts must be nonnegative")
    base = surface_dim * n + (surface_dim - 1) * m
    shift = {"open": 0, "half-plane": 2, "quadrant": 1}
    if variant not in shift:
        raise ValueError(f"unknown variant {variant!r}")
    return base - shift[variant]


def dim_half_plane(n: int, k: int) -> int:
    return dim_config(n, k, variant="half-plane")


def dim_quadrant(n: int, k: int) -> int:
    return dim_config(n, k, variant="quadrant")


def _arcs(m: int, c: int, arcs: Sequence[int] | None) -> list[list[str]]:
    n_arcs = max(c, 1)
    if arcs is None:
        arcs = [m] + [0] * (n_arcs - 1)
    arcs = list(arcs)
    if len(arcs) != n_arcs or sum(arcs) != m or min(arcs, default=0) < 0:
        raise ValueError(f"arc occupation {arcs} does not distribute {m} points over {n_arcs} arcs")
    out, pos = [], 0
    for size in arcs:
        out.append([f"e{pos + i}" for i in range(size)])
        pos += size
    return out


def _subsets(items):
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def codim1_strata(n: int, m: int, c: int = 0, arcs: Sequence[int] | None = None) -> list[StratumDescriptor]:
    """All single-block collapses, generated constructively."""
    if n + m < 1:
        raise ValueError("at least one point is needed")
    bulk = [f"b{i}" for i in range(n)]
    arc_pts = _arcs(m, c, arcs)
    amb = (n, m, c)
    out = []
    for r in range(2, n + 1):
        for a in itertools.combinations(bulk, r):
            out.append(StratumDescriptor(amb, frozenset(a), "bulk"))
    runs = [()]
    for pts in arc_pts:
        for i in range(len(pts)):
            for j in range(i + 1, len(pts) + 1):
                runs.append(tuple(pts[i:j]))
    for a in _subsets(bulk):
        for run in runs:
            if not a and len(run) <= 1:
                continue
            out.append(StratumDescriptor(amb, frozenset(a + run), "boundary"))
    for corner in range(c):
        before = arc_pts[(corner - 1) % c]
        after = arc_pts[corner]
        same = c == 1
        for p in range(len(after) + 1):
            for s in range(len(before) + 1):
                if same and p + s > len(after):
                    continue
                tail = tuple(before[len(before) - s:]) if s else ()
                head = tuple(after[:p])
                for a in _subsets(bulk):
                    block = a + head + tail
                    if not block:
                        continue
                    out.append(StratumDescriptor(amb, frozenset(block), "corner", corner=corner, split=(s, p)))
    return out


def codim1_strata_bruteforce(n: int, m: int, c: int = 0, arcs: Sequence[int] | None = None) -> list[StratumDescriptor]:
    """Independent enumeration: every subset of points, every side assignment
    at every corner, filtered by the face conditions."""
    bulk = [f"b{i}" for i in range(n)]
    arc_pts = _arcs(m, c, arcs)
    where = {p: (j, i) for j, pts in enumerate(arc_pts) for i, p in enumerate(pts)}
    points = bulk + [p for pts in arc_pts for p in pts]
    amb = (n, m, c)
    out = []
    for size in range(1, len(points) + 1):
        for block in itertools.combinations(points, size):
            bset = frozenset(block)
            bnd = [p for p in block if p.startswith("e")]
            nb = len(block) - len(bnd)
            if not bnd and nb >= 2:
                out.append(StratumDescriptor(amb, bset, "bulk"))
            # boundary face: boundary points on one arc, consecutive
            arcs_hit = {where[p][0] for p in bnd}
            if len(arcs_hit) <= 1 and (nb >= 1 or len(bnd) >= 2):
                idx = sorted(where[p][1] for p in bnd)
                if all(b - a == 1 for a, b in zip(idx, idx[1:])):
                    out.append(StratumDescriptor(amb, bset, "boundary"))
            for corner in range(c):
                for sides in itertools.product((0, 1), repeat=len(bnd)):
                    # side 0: arriving along the arc that ends at the corner
                    tail = [p for p, sd in zip(bnd, sides) if sd == 0]
                    head = [p for p, sd in zip(bnd, sides) if sd == 1]
                    before = arc_pts[(corner - 1) % c]
                    after = arc_pts[corner]
                    if set(tail) != set(before[len(before) - len(tail):]) if tail else False:
                        continue
                    if set(head) != set(after[: len(head)]) if head else False:
                        continue
                    if set(tail) & set(head):
                        continue
                    out.append(StratumDescriptor(amb, bset, "corner", corner=corner,
                                                 split=(len(tail), len(head))))
    return out


def expected_counts(n: int, m: int, c: int = 0, arcs: Sequence[int] | None = None) -> dict[str, int]:
    """Closed-form counts per location."""
    arc_sizes = [len(p) for p in _arcs(m, c, arcs)]
    type1 = 2 ** n - 1 - n
    runs = 1 + sum(s * (s + 1) // 2 for s in arc_sizes)
    type2 = 2 ** n * runs - 1 - m
    type3 = 0
    for corner in range(c):
        if c == 1:
            pairs = sum(1 for p in range(arc_sizes[0] + 1) for s in range(arc_sizes[0] + 1 - p))
        else:
            pairs = (arc_sizes[corner] + 1) * (arc_sizes[(corner - 1) % c] + 1)
        type3 += 2 ** n * pairs - 1
    return {"bulk": type1, "boundary": type2, "corner": type3}


# Stokes bookkeeping ----------------------------------------------------------------------

@dataclass
class Face:
    stratum: StratumDescriptor
    profile: CollapseProfile | None
    tag: str
    internal_edges: int
    fiber_dim: int
    note: str = ""

    def to_json(self) -> dict:
        return {"stratum": self.stratum.to_json(),
                "profile": None if self.profile is None else self.profile.to_json(),
                "tag": self.tag, "internal_edges": self.internal_edges,
                "fiber_dim": self.fiber_dim, "note": self.note}


@dataclass(frozen=True)
class _Profile:
    """Boundary data for :func:`stokes_ledger`."""

    corners: tuple = ()  # corner types, 'C1' or 'C2', one per corner
    arcs: tuple | None = None


def _parse_profile(profile) -> _Profile:
    if profile is None or profile == "E-arc":
        return _Profile()
    if isinstance(profile, _Profile):
        return profile
    if isinstance(profile, dict):
        return _Profile(tuple(profile.get("corners", ())), tuple(profile["arcs"]) if "arcs" in profile else None)
    raise ValueError(f"unknown boundary profile {profile!r}")


def stokes_ledger(g: KGraph, profile=None) -> list[Face]:
    """Codimension-one faces of the configuration space of ``g``, tagged.

    Aerial vertices are bulk points (``b<v>`` for aerial index v), ground
    vertices boundary points.  ``profile`` is ``'E-arc'`` (one boundary arc,
    no corners) or a dict ``{"corners": ["C1", ...], "arcs": [...]}``.

    Tags: ``bulk`` (the Pi-Pi collapse feeding the Jacobi identity),
    ``boundary-operator``, ``corner``, ``vanishing-degree`` (form degree
    differs from the fiber dimension), ``vanishing-tail`` (a lone bulk
    vertex with outgoing edges reaching the boundary), ``vanishing-corner``
    (bulk vertices at an equal-condition corner).
    """
    prof = _parse_profile(profile)
    c = len(prof.corners)
    n, m = g.n_aerial, g.n_ground
    label = {m + v: f"b{v}" for v in range(n)}
    label.update({s: f"e{s}" for s in range(m)})
    edges = [(label[s], label[t]) for s, t in g.edge_list()]
    kinds = {f"b{v}": k for v, k in enumerate(g.aerial)}
    faces = []
    for st in codim1_strata(n, m, c, prof.arcs):
        block = st.block
        bulk = st.bulk_points()
        k = len(st.boundary_points())
        n_pi = sum(1 for p in bulk if kinds[p] is Kind.PI)
        n_r = sum(1 for p in bulk if kinds[p] is Kind.R)
        internal = sum(1 for s, t in edges if s in block and t in block)
        outgoing = sum(1 for s, t in edges if s in block)
        if st.location == "bulk":
            fdim = 2 * len(bulk) - 3
            tag = "bulk" if internal == fdim else "vanishing-degree"
            faces.append(Face(st, None, tag, internal, fdim))
            continue
        if st.location == "boundary":
            fdim = dim_half_plane(len(bulk), k)
            if len(bulk) == 1 and k == 0 and outgoing:
                faces.append(Face(st, None, "vanishing-tail", internal, fdim,
                                  "the propagator vanishes when its tail reaches the boundary"))
                continue
            loc = "bulk-boundary"
        else:
            fdim = dim_quadrant(len(bulk), k)
            loc = "corner-C2" if prof.corners[st.corner] == "C2" else "corner-C1"
        prof_counts = CollapseProfile(loc, k, n_r, n_pi, 0 if loc == "corner-C1" else None)
        candidate = prof_counts if internal == outgoing and prof_counts.satisfies() else None
        if loc == "corner-C2" and bulk:
            tag = "vanishing-corner"
        elif internal != fdim:
            tag = "vanishing-degree"
        else:
            tag = "corner" if st.location == "corner" else "boundary-operator"
        faces.append(Face(st, candidate, tag, internal, fdim))
    return faces

"""Admissible directed graphs with typed vertices.

Vertex numbering is global: ground vertices ``0..l-1`` first, then aerial
vertices ``l..l+n-1``.  Each aerial vertex carries an ordered list of targets;
the order is the index order of the multivector sitting on the vertex.

Line format::

    <n_ground>;<n_r>;<spec>|<spec>|...        spec = P:t1,t2 | R:t1 | W:

An optional fourth field ``ground=<kinds>`` (letters F/G, one per ground
vertex) marks gamma-decorated ground vertices; it is omitted when every
ground vertex carries a function.  ``n_r`` must equal the number of R specs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

__all__ = [
    "Kind",
    "KGraph",
    "GraphClass",
    "GraphError",
    "BoundExceeded",
    "MAX_AERIAL",
    "serialize",
    "deserialize",
    "canonical_form",
    "canonicalize",
    "class_representative",
    "enumerate_graphs",
    "labeled_graphs",
    "wedge",
]

MAX_AERIAL = 6


class GraphError(ValueError):
    """Malformed graph or graph line; ``position`` is the character offset when parsing."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (at position {position})")
        self.position = position


class BoundExceeded(ValueError):
    pass


class Kind(Enum):
    PI = "P"
    R = "R"
    OMEGA = "W"
    GROUND_F = "F"
    GROUND_GAMMA = "G"

    @property
    def out_valence(self) -> int:
        return {"P": 2, "R": 1}.get(self.value, 0)

    @property
    def aerial(self) -> bool:
        return self.value in "PRW"

    @property
    def rank(self) -> int:
        return "PRWFG".index(self.value)


@dataclass(frozen=True)
class KGraph:
    ground: tuple
    aerial: tuple
    edges: tuple

    def __post_init__(self):
        ground = tuple(self.ground)
        aerial = tuple(self.aerial)
        edges = tuple(tuple(t) for t in self.edges)
        object.__setattr__(self, "ground", ground)
        object.__setattr__(self, "aerial", aerial)
        object.__setattr__(self, "edges", edges)
        if any(k.aerial for k in ground):
            raise GraphError("ground vertices must have a ground kind")
        if any(not k.aerial for k in aerial):
            raise GraphError("aerial vertices must have an aerial kind")
        if len(edges) != len(aerial):
            raise GraphError("one target list per aerial vertex is required")
        total = len(ground) + len(aerial)
        for v, (kind, targets) in enumerate(zip(aerial, edges)):
            me = len(ground) + v
            if len(targets) != kind.out_valence:
                raise GraphError(f"aerial vertex {me} of kind {kind.name} needs {kind.out_valence} targets, has {len(targets)}")
            for t in targets:
                if not 0 <= t < total:
                    raise GraphError(f"target {t} of vertex {me} out of range")
                if t == me:
                    raise GraphError(f"tadpole at vertex {me}")
            if len(set(targets)) != len(targets):
                raise GraphError(f"double edge from vertex {me}")

    @property
    def n_ground(self) -> int:
        return len(self.ground)

    @property
    def n_aerial(self) -> int:
        return len(self.aerial)

    def count(self, kind: Kind) -> int:
        return sum(1 for k in self.aerial if k is kind) + sum(1 for k in self.ground if k is kind)

    def edge_list(self) -> list[tuple[int, int]]:
        """(source, target) in global numbering, in edge order."""
        ng = self.n_ground
        return [(ng + v, t) for v, targets in enumerate(self.edges) for t in targets]

    def in_degree(self, vertex: int) -> int:
        return sum(1 for targets in self.edges for t in targets if t == vertex)

    def relabel(self, perm) -> "KGraph":
        """Move aerial vertex v to position perm[v] (0-based aerial indices)."""
        ng = self.n_ground
        n = self.n_aerial
        inv = [0] * n
        for v, p in enumerate(perm):
            inv[p] = v

        def mp(t):
            return t if t < ng else ng + perm[t - ng]

        aerial = tuple(self.aerial[inv[p]] for p in range(n))
        edges = tuple(tuple(mp(t) for t in self.edges[inv[p]]) for p in range(n))
        return KGraph(self.ground, aerial, edges)

    def reverse(self, vertex: int) -> "KGraph":
        """Reverse the edge order of aerial vertex ``vertex`` (0-based aerial index)."""
        edges = list(self.edges)
        edges[vertex] = tuple(reversed(edges[vertex]))
        return KGraph(self.ground, self.aerial, tuple(edges))

    def __str__(self):
        return serialize(self)


def wedge() -> KGraph:
    """The order-1 star product graph."""
    return KGraph((Kind.GROUND_F,) * 2, (Kind.PI,), ((0, 1),))


@dataclass(frozen=True)
class GraphClass:
    """Orbit of edge-ordered graphs under relabeling of like-kind aerial
    vertices and edge-order reversal at Pi vertices.

    ``symmetry_sign`` is -1 when some automorphism reverses the orientation
    of the edge-form product; the class then contributes nothing.
    """

    representative: KGraph
    automorphism_count: int
    symmetry_sign: int
    group_order: int = field(default=1)

    @property
    def orbit_size(self) -> int:
        return self.group_order // self.automorphism_count

    @property
    def encoding(self) -> bytes:
        return canonical_form(self.representative)


# serialization ------------------------------------------------------------------

def serialize(g: KGraph) -> str:
    specs = []
    for kind, targets in zip(g.aerial, g.edges):
        specs.append(f"{kind.value}:" + ",".join(str(t) for t in targets))
    line = f"{g.n_ground};{g.count(Kind.R)};" + "|".join(specs)
    if any(k is Kind.GROUND_GAMMA for k in g.ground):
        line += ";ground=" + "".join(k.value for k in g.ground)
    return line


def deserialize(line: str) -> KGraph:
    text = line.strip()
    fields = text.split(";")
    if len(fields) not in (3, 4):
        raise GraphError("expected '<n_ground>;<n_r>;<specs>' with an optional ground field", 0)
    pos = 0
    try:
        n_ground = int(fields[0])
    except ValueError:
        raise GraphError(f"bad ground count {fields[0]!r}", pos) from None
    pos += len(fields[0]) + 1
    try:
        n_r = int(fields[1])
    except ValueError:
        raise GraphError(f"bad R count {fields[1]!r}", pos) from None
    pos += len(fields[1]) + 1
    ground = [Kind.GROUND_F] * n_ground
    if len(fields) == 4:
        gpos = pos + len(fields[2]) + 1
        if not fields[3].startswith("ground="):
            raise GraphError("fourth field must be ground=<kinds>", gpos)
        letters = fields[3][len("ground="):]
        if len(letters) != n_ground or any(c not in "FG" for c in letters):
            raise GraphError("ground kinds must be one F/G letter per ground vertex", gpos)
        ground = [Kind(c) for c in letters]
    aerial, edges = [], []
    body = fields[2]
    if body:
        for spec in body.split("|"):
            if len(spec) < 2 or spec[1] != ":" or spec[0] not in "PRW":
                raise GraphError(f"bad vertex spec {spec!r}", pos)
            kind = Kind(spec[0])
            tail = spec[2:]
            try:
                targets = tuple(int(t) for t in tail.split(",")) if tail else ()
            except ValueError:
                raise GraphError(f"bad target list {tail!r}", pos + 2) from None
            if len(targets) != kind.out_valence:
                raise GraphError(f"{kind.name} vertex needs {kind.out_valence} targets, got {len(targets)}", pos)
            aerial.append(kind)
            edges.append(targets)
            pos += len(spec) + 1
    if sum(1 for k in aerial if k is Kind.R) != n_r:
        raise GraphError("R count does not match the vertex specs", len(fields[0]) + 1)
    return KGraph(tuple(ground), tuple(aerial), tuple(edges))


# canonical forms ----------------------------------------------------------------

def _refine(g: KGraph, ordered: bool) -> list:
    """Isomorphism-invariant colour of each aerial vertex (1-WL refinement)."""
    ng = g.n_ground
    n = g.n_aerial
    color = []
    for v in range(n):
        kind = g.aerial[v]
        tg = tuple(t if t < ng else -1 for t in g.edges[v])
        if not ordered:
            tg = tuple(sorted(tg))
        color.append((kind.rank, g.in_degree(ng + v), tg))
    for _ in range(n):
        def col(t):
            return ("g", t) if t < ng else ("a", color[t - ng])

        preds: list[list] = [[] for _ in range(n)]
        for u in range(n):
            for s, t in enumerate(g.edges[u]):
                if t >= ng:
                    preds[t - ng].append((color[u], s if ordered else 0))
        new = []
        for v in range(n):
            outs = tuple(col(t) for t in g.edges[v])
            if not ordered:
                outs = tuple(sorted(outs))
            new.append((color[v], outs, tuple(sorted(preds[v]))))
        # compress
        table = {c: i for i, c in enumerate(sorted(set(new)))}
        compressed = [(g.aerial[v].rank, table[new[v]]) for v in range(n)]
        if len(set(compressed)) == len(set(color)):
            color = compressed
            break
        color = compressed
    return color


def _code(g: KGraph, perm, ordered: bool) -> tuple:
    ng = g.n_ground
    n = g.n_aerial
    inv = [0] * n
    for v, p in enumerate(perm):
        inv[p] = v
    out = []
    for p in range(n):
        v = inv[p]
        tg = tuple(t if t < ng else ng + perm[t - ng] for t in g.edges[v])
        if not ordered:
            tg = tuple(sorted(tg))
        out.append((g.aerial[v].rank, tg))
    return tuple(out)


def _labelings(g: KGraph, ordered: bool):
    """Candidate labelings: order vertices by colour, permute within colour cells."""
    color = _refine(g, ordered)
    n = g.n_aerial
    cells: dict = {}
    for v in range(n):
        cells.setdefault(color[v], []).append(v)
    keys = sorted(cells)
    blocks = [cells[k] for k in keys]
    for choice in itertools.product(*(itertools.permutations(b) for b in blocks)):
        perm = [0] * n
        pos = 0
        for block in choice:
            for v in block:
                perm[v] = pos
                pos += 1
        yield perm


def _best(g: KGraph, ordered: bool):
    best, winners = None, []
    for perm in _labelings(g, ordered):
        c = _code(g, perm, ordered)
        if best is None or c < best:
            best, winners = c, [perm]
        elif c == best:
            winners.append(perm)
    return best, winners


def _r_sign(g: KGraph, perm) -> int:
    """Sign of the permutation induced on odd edge blocks (R vertices)."""
    rs = [v for v, k in enumerate(g.aerial) if k is Kind.R]
    images = [perm[v] for v in rs]
    sign = 1
    for i in range(len(images)):
        for j in range(i + 1, len(images)):
            if images[i] > images[j]:
                sign = -sign
    return sign


def canonicalize(g: KGraph) -> tuple[KGraph, list, int]:
    """Canonical relabeling of ``g`` (edge order kept).

    Returns ``(canonical graph, perm, sign)`` where ``perm`` maps aerial
    vertices of ``g`` to the canonical positions and ``sign`` is the sign that
    relabeling induces on the ordered product of edge one-forms.
    """
    _, winners = _best(g, ordered=True)
    perm = winners[0]
    return g.relabel(perm), perm, _r_sign(g, perm)


def canonical_form(g: KGraph) -> bytes:
    """Byte encoding equal for two graphs iff they are isomorphic fixing the ground order."""
    if not isinstance(g, KGraph):
        raise GraphError("canonical_form expects a KGraph")
    KGraph(g.ground, g.aerial, g.edges)  # re-validate
    canon, _, _ = canonicalize(g)
    return serialize(canon).encode("utf-8")


def class_representative(g: KGraph) -> tuple[KGraph, int]:
    """Representative of the class of ``g`` and the orientation sign relating them.

    The representative uses the canonical labeling of the graph with edge
    order forgotten and lists the targets of every Pi vertex in ascending
    order.  The sign is that of the edge-form product of ``g`` relative to
    the representative: -1 per reversed Pi vertex, times the sign of the
    permutation of R vertices.
    """
    _, winners = _best(g, ordered=False)
    perm = winners[0]
    rel = g.relabel(perm)
    flips = sum(1 for k, t in zip(rel.aerial, rel.edges) if k is Kind.PI and t[0] > t[1])
    rep = KGraph(rel.ground, rel.aerial,
                 tuple(tuple(sorted(t)) if k is Kind.PI else t for k, t in zip(rel.aerial, rel.edges)))
    return rep, (-1) ** flips * _r_sign(g, perm)


def _class_of(g: KGraph, group_order: int) -> GraphClass:
    """Reduce an arbitrary edge order to the class representative."""
    rep, _ = class_representative(g)
    # automorphisms of the unordered graph, acting on the representative
    ng = rep.n_ground
    sign = 1
    auts = 0
    _, rep_winners = _best(rep, ordered=False)
    base = rep_winners[0]
    inv_base = [0] * rep.n_aerial
    for v, p in enumerate(base):
        inv_base[p] = v
    for w in rep_winners:
        sigma = [inv_base[w[v]] for v in range(rep.n_aerial)]  # automorphism of rep
        auts += 1
        flips = 0
        for v, (kind, targets) in enumerate(zip(rep.aerial, rep.edges)):
            if kind is Kind.PI:
                a, b = (t if t < ng else ng + sigma[t - ng] for t in targets)
                if a > b:
                    flips += 1
        s = (-1) ** flips * _r_sign(rep, sigma)
        if s < 0:
            sign = -1
    return GraphClass(rep, auts, sign, group_order)


def _group_order(aerial) -> int:
    out = 1
    for kind in (Kind.PI, Kind.R, Kind.OMEGA):
        out *= math.factorial(sum(1 for k in aerial if k is kind))
    return out * 2 ** sum(1 for k in aerial if k is Kind.PI)


def _admissible(g: KGraph, profile: str) -> bool:
    if profile == "all":
        return True
    if profile == "hit":
        hit = {t for targets in g.edges for t in targets}
        return all(s in hit for s in range(g.n_ground))
    raise ValueError(f"unknown profile {profile!r} (expected 'all' or 'hit')")


def _check_bound(n_pi, n_r, n_ground):
    if n_pi < 0 or n_r < 0 or n_ground < 0:
        raise ValueError("counts must be nonnegative")
    if n_pi + n_r > MAX_AERIAL:
        raise BoundExceeded(f"n_pi + n_r = {n_pi + n_r} exceeds the enumeration bound {MAX_AERIAL}")


def _aerial_kinds(n_pi, n_r, n_omega=0):
    return (Kind.PI,) * n_pi + (Kind.R,) * n_r + (Kind.OMEGA,) * n_omega


def labeled_graphs(n_pi: int, n_r: int, n_ground: int, profile: str = "all", n_omega: int = 0):
    """Naive generator of all edge-ordered, vertex-labeled admissible graphs."""
    _check_bound(n_pi, n_r + n_omega, n_ground)
    aerial = _aerial_kinds(n_pi, n_r, n_omega)
    ground = (Kind.GROUND_F,) * n_ground
    total = n_ground + len(aerial)
    choices = []
    for v, kind in enumerate(aerial):
        others = [t for t in range(total) if t != n_ground + v]
        choices.append(list(itertools.permutations(others, kind.out_valence)))
    for combo in itertools.product(*choices):
        g = KGraph(ground, aerial, combo)
        if _admissible(g, profile):
            yield g


def enumerate_graphs(n_pi: int, n_r: int, n_ground: int, profile: str = "all",
                     n_omega: int = 0) -> list[GraphClass]:
    """All admissible graph classes, sorted by canonical encoding.

    ``profile='hit'`` keeps only graphs in which every ground vertex receives
    at least one edge.
    """
    _check_bound(n_pi, n_r + n_omega, n_ground)
    aerial = _aerial_kinds(n_pi, n_r, n_omega)
    ground = (Kind.GROUND_F,) * n_ground
    total = n_ground + len(aerial)
    group = _group_order(aerial)
    choices = []
    for v, kind in enumerate(aerial):
        others = [t for t in range(total) if t != n_ground + v]
        opts = list(itertools.combinations(others, kind.out_valence))
        choices.append(opts)

    def ground_sig(targets):
        return tuple(t for t in targets if t < n_ground)

    seen: dict = {}
    for combo in itertools.product(*choices):
        # like-kind vertices can always be relabeled so that their ground
        # signatures are nondecreasing; skip the other labelings early
        ok = True
        for v in range(1, len(aerial)):
            if aerial[v] is aerial[v - 1] and ground_sig(combo[v]) < ground_sig(combo[v - 1]):
                ok = False
                break
        if not ok:
            continue
        g = KGraph(ground, aerial, combo)
        if not _admissible(g, profile):
            continue
        key, _ = _best(g, ordered=False)
        if key in seen:
            continue
        seen[key] = _class_of(g, group)
    classes = list(seen.values())
    classes.sort(key=lambda c: c.encoding)
    return classes

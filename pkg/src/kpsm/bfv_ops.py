"""Point-local boundary operators, their nilpotency, collapse counting and corner terms.

An operator is a sum of pieces ``dx^alpha (x) D`` where ``alpha`` is an
increasing tuple of base directions and ``D`` an eps-series of
multidifferential operators of a fixed arity.  The piece has Hochschild
degree ``arity - 1`` and total degree ``|alpha| + arity - 1``.  Composition
follows the Gerstenhaber rules

    (a (x) D) o (b (x) E) = (-1)^(|b| (arity(D) - 1)) (a ^ b) (x) (D o E)
    D o E = sum_s (-1)^(s (arity(E) - 1)) D o_s E

so that for an odd operator the square ``O o O`` is half the bracket.  With
pieces m (form degree 0), A_i + [gamma_i, .] (degree 1) and Phi_ij (degree
2), the residual d_x O + O o O has components

    deg0  associator of m
    deg1  d_i m + A_i o m - m o A_i
    deg2  [D_i, D_j] + [Phi_ij, .]
    deg3  cyclic D_i Phi_jk
    deg4  empty (Phi takes no arguments)

and therefore vanishes exactly when Phi = -(F + D gamma + gamma * gamma) and
this is central.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

from .formal_geom import RField
from .formality import (
    ConnectionForm,
    CurvatureForm,
    Residual,
    StarProduct,
    StructuralReport,
    graph_weight,
    monomial_basis,
    twist_residual,
)
from .kgraph import Kind, KGraph, enumerate_graphs
from .symalg import FormalSeries, MultiDiffOp, Multivector, TruncPoly, series_compose_ops
from .weights import PropagatorKind, RawGraph, Weight, mc_weight

__all__ = [
    "Representation",
    "BoundaryTerm",
    "LocalBoundaryOp",
    "CollapseProfile",
    "CornerTerm",
    "InputMismatch",
    "OrderExceeded",
    "RepresentationMismatch",
    "assemble_E_rep",
    "assemble_X_rep",
    "compose",
    "bracket",
    "d_x",
    "nilpotency_residual",
    "corrupt",
    "duality_mismatches",
    "classify_collapses",
    "classify_collapses_bruteforce",
    "corner_term_leading",
    "c2_corner_graphs",
    "c2_corner_weights",
    "LOCATIONS",
]

LOCATIONS = ("bulk-boundary", "corner-C1", "corner-C2")


class InputMismatch(ValueError):
    pass


class OrderExceeded(ValueError):
    pass


class RepresentationMismatch(ValueError):
    pass


class Representation(Enum):
    E = "E"
    X = "X"


@dataclass(frozen=True)
class BoundaryTerm:
    """One coefficient with its composite-field labels.

    ``multiplication`` holds one multi-index per argument slot, ``derivative``
    the labels of the functional derivatives (the Taylor order of the
    coefficient in the fiber for the E representation, the outgoing leaves
    for the X representation).
    """

    form: tuple
    coefficient: FormalSeries
    multiplication: tuple
    derivative: tuple

    @property
    def form_degree(self) -> int:
        return len(self.form)

    def to_json(self) -> dict:
        return {
            "form": [i + 1 for i in self.form],
            "coefficient": self.coefficient.format(),
            "multiplication": [list(m) for m in self.multiplication],
            "derivative": [list(m) for m in self.derivative],
        }


def _wedge(alpha: tuple, beta: tuple):
    """Sign and sorted index tuple of dx^alpha ^ dx^beta, or (0, None)."""
    idx = alpha + beta
    if len(set(idx)) != len(idx):
        return 0, None
    sign = 1
    seq = list(idx)
    for i in range(len(seq)):
        for j in range(len(seq) - 1 - i):
            if seq[j] > seq[j + 1]:
                seq[j], seq[j + 1] = seq[j + 1], seq[j]
                sign = -sign
    return sign, tuple(seq)


@dataclass
class LocalBoundaryOp:
    """Operator at the point of collapse.

    E representation: ``pieces`` maps (form index, arity) to an eps-series of
    MultiDiffOp.  X representation: ``x_terms`` lists the a-coefficients; the
    composition algebra is only implemented for E.
    """

    representation: Representation
    dim: int
    order: int
    wrt: str = "x"
    pieces: dict = field(default_factory=dict)
    x_terms: tuple = ()

    def copy(self) -> "LocalBoundaryOp":
        return LocalBoundaryOp(self.representation, self.dim, self.order, self.wrt,
                               dict(self.pieces), self.x_terms)

    def add_piece(self, form: tuple, arity: int, series: FormalSeries, sign: int = 1) -> None:
        if sign == 0:
            return
        if sign < 0:
            series = -series
        key = (form, arity)
        self.pieces[key] = self.pieces[key] + series if key in self.pieces else series

    def pieces_of_degree(self, p: int) -> dict:
        return {k: v for k, v in self.pieces.items() if len(k[0]) == p}

    def total_degrees(self) -> set:
        return {len(f) + a - 1 for (f, a), s in self.pieces.items() if not s.is_zero()}

    def check_signature(self) -> None:
        """E-rep shape: two slots at form degree 0, one at 1, none at 2."""
        for (form, arity), series in self.pieces.items():
            if series.is_zero():
                continue
            if len(form) > 2 or arity != 2 - len(form):
                raise InputMismatch(f"piece with form degree {len(form)} has {arity} slots")

    def terms(self, perturbative_only: bool = False) -> list[BoundaryTerm]:
        if self.representation is Representation.X:
            out = list(self.x_terms)
            if perturbative_only:
                out = [t for t in out if not t.coefficient[0]]
            return out
        out = []
        for (form, arity), series in sorted(self.pieces.items()):
            table: dict = {}
            for k, op in enumerate(series):
                for slots, coeff in op.terms.items():
                    for key, c in coeff.terms.items():
                        xexp, yexp = key[: self.dim], key[self.dim:]
                        label = (slots, yexp)
                        factor = math.prod(math.factorial(e) for e in yexp)
                        table.setdefault(label, {}).setdefault(k, {})[xexp] = c * factor
            for (slots, yexp), by_power in sorted(table.items()):
                coeffs = []
                for k in range(self.order + 1):
                    terms = {xe + (0,) * self.dim: v for xe, v in by_power.get(k, {}).items()}
                    coeffs.append(TruncPoly(self.dim, terms))
                if perturbative_only and not any(coeffs[1:]):
                    continue
                if perturbative_only:
                    coeffs[0] = TruncPoly.zero(self.dim)
                deriv = (yexp,) if any(yexp) else ()
                out.append(BoundaryTerm(form, FormalSeries(coeffs, self.order), slots, deriv))
        return out

    def to_json(self) -> dict:
        return {
            "representation": self.representation.value,
            "dim": self.dim,
            "order": self.order,
            "terms": [t.to_json() for t in self.terms()],
        }


def _const_ops(series: FormalSeries, wrt: str) -> FormalSeries:
    return series.map(lambda p: MultiDiffOp.constant(p, wrt))


def _check_e(*ops: LocalBoundaryOp):
    for op in ops:
        if op.representation is not Representation.E:
            raise RepresentationMismatch("composition is implemented for the E representation only")
    if len({op.order for op in ops}) > 1 or len({op.dim for op in ops}) > 1:
        raise InputMismatch("operators differ in order or dimension")


def _circ_ops(a: FormalSeries, b: FormalSeries, arity_b: int) -> FormalSeries:
    """D o E summed over the slots of D with the Gerstenhaber signs."""
    arity_a = a[0].arity
    out = None
    for s in range(arity_a):
        term = series_compose_ops(a, b, s)
        if (s * (arity_b - 1)) % 2:
            term = -term
        out = term if out is None else out + term
    return out


def compose(a: LocalBoundaryOp, b: LocalBoundaryOp) -> LocalBoundaryOp:
    """Gerstenhaber composition a o b with Koszul signs for the form parts."""
    _check_e(a, b)
    wrt = a.wrt if a.pieces else b.wrt
    out = LocalBoundaryOp(Representation.E, a.dim, a.order, wrt)
    for (fa, ra), sa in a.pieces.items():
        if ra == 0:
            continue
        for (fb, rb), sb in b.pieces.items():
            sign, form = _wedge(fa, fb)
            if not sign:
                continue
            if (len(fb) * (ra - 1)) % 2:
                sign = -sign
            out.add_piece(form, ra + rb - 1, _circ_ops(sa, sb, rb), sign)
    return out


def _single(op: LocalBoundaryOp, key) -> LocalBoundaryOp:
    return LocalBoundaryOp(op.representation, op.dim, op.order, op.wrt, {key: op.pieces[key]})


def bracket(a: LocalBoundaryOp, b: LocalBoundaryOp) -> LocalBoundaryOp:
    """[a, b] = a o b - (-1)^(|a||b|) b o a, piece by piece in total degree."""
    _check_e(a, b)
    out = LocalBoundaryOp(Representation.E, a.dim, a.order, a.wrt if a.pieces else b.wrt)
    for ka in a.pieces:
        for kb in b.pieces:
            x, y = _single(a, ka), _single(b, kb)
            dx_ = len(ka[0]) + ka[1] - 1
            dy_ = len(kb[0]) + kb[1] - 1
            for key, s in compose(x, y).pieces.items():
                out.add_piece(*key, s)
            for key, s in compose(y, x).pieces.items():
                out.add_piece(*key, s, -1 if (dx_ * dy_) % 2 == 0 else 1)
    return out


def d_x(op: LocalBoundaryOp) -> LocalBoundaryOp:
    """De Rham differential in the base, acting on coefficients."""
    _check_e(op)
    out = LocalBoundaryOp(Representation.E, op.dim, op.order, op.wrt)
    for (form, arity), series in op.pieces.items():
        for i in range(op.dim):
            sign, new = _wedge((i,), form)
            if sign:
                out.add_piece(new, arity, series.map(lambda D, i=i: D.dx(i)), sign)
    return out


def _scale(op: LocalBoundaryOp, c) -> LocalBoundaryOp:
    out = op.copy()
    out.pieces = {k: v.scale(c) for k, v in op.pieces.items()}
    return out


# assembly -------------------------------------------------------------------------------

def assemble_E_rep(starp: StarProduct, A: ConnectionForm | None = None, F: CurvatureForm | None = None,
                   gamma: Sequence[FormalSeries] | None = None, order: int | None = None) -> LocalBoundaryOp:
    """Pieces m, A_i + [gamma_i, .] and -(F + D gamma + gamma * gamma)."""
    N = starp.order if order is None else order
    if N > starp.order:
        raise InputMismatch("order exceeds the star product cutoff")
    d, wrt = starp.dim, starp.wrt
    for obj in (A, F):
        if obj is not None and (obj.dim != d or obj.order < N):
            raise InputMismatch("connection or curvature does not match the star product")
    if gamma is not None:
        if A is None or len(gamma) != d or any(g.order < N for g in gamma):
            raise InputMismatch("gamma needs a connection and one series per base direction")
    if F is not None and A is None:
        raise InputMismatch("a curvature piece needs the connection piece")
    m = starp.terms.truncate(N)
    op = LocalBoundaryOp(Representation.E, d, N, wrt)
    op.add_piece((), 2, m)
    if A is not None:
        for i in range(d):
            piece = A.components[i].truncate(N)
            if gamma is not None:
                piece = piece + _circ_ops(m, _const_ops(gamma[i].truncate(N), wrt), 0)
            op.add_piece((i,), 1, piece)
    if F is not None:
        sp = starp if N == starp.order else StarProduct(d, starp.poisson, N, m, wrt, starp.exact)
        if gamma is None:
            gamma = [FormalSeries([TruncPoly.zero(d, sp.y_cutoff)] * (N + 1), N) for _ in range(d)]
        curv = twist_residual(F, A, sp, [g.truncate(N) for g in gamma])
        for (i, j), series in curv.items():
            op.add_piece((i, j), 0, _const_ops(-series, wrt))
    op.check_signature()
    return op


def _x_tree_weight(k: int) -> Fraction:
    """Weight of one Pi vertex fed by k boundary points (k = 2 at order one).

    Reversing every edge turns the graph into the half-plane graph with a Pi
    vertex pointing at k ground points, whose angle form is the same product.
    """
    classes = [c for c in enumerate_graphs(1, 0, k) if c.representative.n_ground == k]
    hit = [c for c in classes if set(c.representative.edges[0]) == set(range(k))]
    if len(hit) != 1:
        raise OrderExceeded(f"no tree graph with {k} boundary inputs")
    return graph_weight(hit[0].representative)


def assemble_X_rep(pi: Multivector, order: int = 1) -> LocalBoundaryOp:
    """Order-one a-coefficients: one Pi vertex fed by two boundary points.

    a^{ab}_{(i),(j)} = w * d_i d_j Pi^{ab} at eps^1, listed for both slot
    orders and both leaf orders.
    """
    if order != 1:
        raise OrderExceeded("the X representation is implemented at order one only")
    if pi.degree != 2:
        raise InputMismatch("the X representation needs a bivector")
    d = pi.dim
    w = _x_tree_weight(2)
    terms = []
    zero = TruncPoly.zero(d)

    def unit(i):
        return tuple(1 if t == i else 0 for t in range(d))

    for a, b in itertools.permutations(range(d), 2):
        comp = pi.component((a, b))
        if comp is None or not comp:
            continue
        for i, j in itertools.product(range(d), repeat=2):
            c = comp.diff(i).diff(j).scale(w)
            if c:
                terms.append(BoundaryTerm((), FormalSeries([zero, c], 1), (unit(i), unit(j)),
                                          (unit(a), unit(b))))
    return LocalBoundaryOp(Representation.X, d, 1, "x", {}, tuple(terms))


def duality_mismatches(xop: LocalBoundaryOp, eop: LocalBoundaryOp) -> list[str]:
    """Compare a^{ab}_{(i),(j)} with d_i d_j of the eps^1 coefficient of d_a (x) d_b."""
    if xop.representation is not Representation.X or eop.representation is not Representation.E:
        raise RepresentationMismatch("expected an X operator and an E operator")
    d = xop.dim
    m1 = eop.pieces[((), 2)][1]
    expected = {}
    for slots, coeff in m1.terms.items():
        if any(sum(s) != 1 for s in slots):
            continue
        for i, j in itertools.product(range(d), repeat=2):
            c = coeff.diff(i).diff(j)
            if c:
                ui = tuple(1 if t == i else 0 for t in range(d))
                uj = tuple(1 if t == j else 0 for t in range(d))
                expected[((ui, uj), slots)] = c
    got = {(t.multiplication, t.derivative): t.coefficient[1] for t in xop.x_terms}
    bad = []
    for key in sorted(set(expected) | set(got)):
        e = expected.get(key, TruncPoly.zero(d))
        g = got.get(key, TruncPoly.zero(d))
        if e != g:
            bad.append(f"slots {key[0]} leaves {key[1]}: X gives {g}, E gives {e}")
    return bad


def corrupt(op: LocalBoundaryOp, form: tuple, arity: int, power: int, slots: tuple,
            delta: Fraction) -> LocalBoundaryOp:
    """Copy of ``op`` with ``delta`` added to one coefficient (negative controls).

    Adding a constant multiple of d_a (x) d_b changes the product by a
    biderivation, which is a Hochschild cocycle and leaves the square zero;
    a corruption meant to be detected must touch a higher-order slot.
    """
    out = op.copy()
    series = out.pieces[(form, arity)]
    base = series[power]
    bump = MultiDiffOp(op.dim, arity, {tuple(slots): TruncPoly.const(op.dim, delta)}, base.wrt)
    coeffs = list(series.coeffs)
    coeffs[power] = base + bump
    out.pieces[(form, arity)] = FormalSeries(coeffs, series.order)
    return out


def nilpotency_residual(op: LocalBoundaryOp, order: int | None = None,
                        evaluate_degree: int | None = None) -> StructuralReport:
    """d_x(op) + (1/2)[op, op], split by form degree 0..4.

    For an operator on plain functions (``wrt == 'x'``) the d_x term is
    omitted.  The residual is recorded operator-coefficient by operator-coefficient, so
    a zero report means the residual operator vanishes identically.  With
    ``evaluate_degree`` it is also evaluated on monomials of that degree.
    """
    _check_e(op)
    N = op.order if order is None else order
    if N > op.order:
        raise InputMismatch("order exceeds the operator cutoff")
    if N < op.order:
        op = op.copy()
        op.pieces = {k: v.truncate(N) for k, v in op.pieces.items()}
        op.order = N
    if op.total_degrees() - {1}:
        raise InputMismatch("the operator is not homogeneous of total degree one")
    # an operator on plain functions has no base directions apart from its
    # arguments' own coordinates, so only the globalized one carries d_x
    res = d_x(op) if op.wrt == "y" else LocalBoundaryOp(Representation.E, op.dim, N, op.wrt)
    for key, s in _scale(bracket(op, op), Fraction(1, 2)).pieces.items():
        res.add_piece(*key, s)
    report = StructuralReport(N)
    basis = monomial_basis(op.dim, evaluate_degree, op.wrt) if evaluate_degree is not None else None
    for p in range(5):
        r = Residual(f"deg{p}", orders=N, note="operator coefficients")
        for (form, arity), series in sorted(res.pieces_of_degree(p).items()):
            tag = "dx^" + "".join(str(i + 1) for i in form) if form else "1"
            keys = sorted({k for D in series for k in D.terms})
            for slots in keys:
                coeffs = FormalSeries([D.terms.get(slots, TruncPoly.zero(op.dim)) for D in series], N)
                r.record(f"{tag} slots {list(map(list, slots))}", coeffs)
            if basis is not None and arity:
                for args in itertools.product(basis, repeat=arity):
                    vals = FormalSeries([D.apply(list(args)) for D in series], N)
                    r.record(f"{tag} on {tuple(str(a) for a in args)}", vals)
        if p == 4:
            r.note = "form-degree-two pieces take no arguments, so nothing composes into degree four"
        report.residuals[f"deg{p}"] = r
    return report


# collapse counting -----------------------------------------------------------------------

@dataclass(frozen=True)
class CollapseProfile:
    """Vertex counts of a collapsing subgraph.

    ``m`` (Pi vertices) and ``b`` (X-boundary vertices) are None when the
    profile holds for every value; ``n = m + r``.
    """

    location: str
    k: int
    r: int
    m: int | None = None
    b: int | None = None

    @property
    def n(self) -> int | None:
        return None if self.m is None else self.m + self.r

    def satisfies(self, m: int | None = None) -> bool:
        m = self.m if m is None else m
        if m is None:
            m = 0
        n = m + self.r
        shift = 2 if self.location == "bulk-boundary" else 1
        return 2 * n + self.k - shift == 2 * m + self.r

    def vanishing(self, m: int | None = None) -> bool:
        """Corner-lemma vanishing: bulk vertices at a corner with equal conditions."""
        m = self.m if m is None else m
        n = (0 if m is None else m) + self.r
        return self.location == "corner-C2" and n >= 1

    def instantiate(self, m: int, b: int = 0) -> "CollapseProfile":
        return CollapseProfile(self.location, self.k, self.r, m, b if self.location == "corner-C1" else None)

    def to_json(self) -> dict:
        return {"location": self.location, "k": self.k, "r": self.r, "m": self.m, "b": self.b,
                "n": self.n}


def _check_location(location: str) -> None:
    if location not in LOCATIONS:
        raise ValueError(f"unknown location {location!r}; expected one of {LOCATIONS}")


def classify_collapses(location: str) -> list[CollapseProfile]:
    """Nonnegative solutions of 2n + k - s = 2m + r with n = m + r.

    Eliminating n leaves r + k = s (s = 2 on the half-plane, 1 at a corner),
    independent of m; the solutions are the splittings of s.
    """
    _check_location(location)
    s = 2 if location == "bulk-boundary" else 1
    return [CollapseProfile(location, k, s - k) for k in range(s, -1, -1)]


def classify_collapses_bruteforce(location: str, bound: int = 6) -> set[tuple[int, int]]:
    """(k, r) pairs admitting a solution with all counts in 0..bound."""
    _check_location(location)
    s = 2 if location == "bulk-boundary" else 1
    found = set()
    for n, m, r, k in itertools.product(range(bound + 1), repeat=4):
        if n == m + r and 2 * n + k - s == 2 * m + r:
            found.add((k, r))
    return found


# corners ----------------------------------------------------------------------------------

def c2_corner_graphs() -> dict[str, KGraph]:
    """Collapse graphs with at least two bulk vertices whose form degree fills
    the quadrant fiber (2n + k - 1 edges)."""
    F, P, R = Kind.GROUND_F, Kind.PI, Kind.R
    return {
        "two-pi-one-ground": KGraph((F,), (P, P), ((2, 0), (1, 0))),
        "two-pi-one-r": KGraph((), (P, P, R), ((1, 2), (0, 2), (0,))),
        "three-pi-one-ground": KGraph((F,), (P, P, P), ((2, 0), (3, 0), (1, 0))),
    }


def c2_corner_weights(samples: int = 10**5, seed: int = 0,
                      kinds: Sequence = (PropagatorKind.A1, PropagatorKind.A2)) -> dict[str, Weight]:
    """Quadrant Monte Carlo weights of :func:`c2_corner_graphs` with equal-condition kernels."""
    out = {}
    for kind in kinds:
        kind = PropagatorKind(kind) if not isinstance(kind, PropagatorKind) else kind
        for name, g in c2_corner_graphs().items():
            out[f"{name}/{kind.value}"] = mc_weight(g, kind, samples, seed)
    return out


# Monte Carlo means of integrands that vanish identically sit at this level
ROUNDOFF_FLOOR = 1e-12


@dataclass
class CornerTerm:
    """Leading coefficients of the corner multiplication operator, per dx^i.

    ``gamma_part[i]`` is (eps power, fiber function) of the first nonzero
    order of gamma_i; fiber monomials stand for the corner values of the
    boundary field.  ``r_part[i]`` is the R-vertex profile: quadrant weight
    times div R_i.
    """

    location: str
    gamma_part: list
    r_weight: Weight | None
    r_part: list
    c2_weights: dict = field(default_factory=dict)

    @property
    def is_zero(self) -> bool:
        gam = all(p.is_zero() for _, p in self.gamma_part)
        w = self.r_weight
        rr = all(p.is_zero() for p in self.r_part) or (
            w is not None and abs(w.mean) <= 3 * w.stderr + ROUNDOFF_FLOOR)
        return gam and rr

    def to_json(self) -> dict:
        return {
            "location": self.location,
            "gamma_part": [{"eps_power": k, "value": str(p)} for k, p in self.gamma_part],
            "r_weight": None if self.r_weight is None else self.r_weight.to_json(),
            "r_part": [str(p) for p in self.r_part],
            "c2_weights": {k: w.to_json() for k, w in self.c2_weights.items()},
        }


def _r_cycle_graph() -> RawGraph:
    # R vertex (global 1) points at the X-side boundary point 0, which feeds back into it
    return RawGraph(1, ((0,),), ground_edges=((0, 1),))


def corner_term_leading(gamma: Sequence[FormalSeries], r: RField, pi_lifted: Multivector | None = None,
                        samples: int = 10**5, seed: int = 0, location: str = "corner-C1") -> CornerTerm:
    """Leading corner coefficient from the two corner profiles.

    (k=1, r=0, m=0): a single gamma vertex at the corner.  (k=0, r=1, m=0,
    b=1): an R vertex exchanging arrows with one X-side boundary point; its
    quadrant weight uses the two-brane kernel S2 with the X side on the real
    axis, and the tensor contraction is div R_i.  At a C2 corner the bulk
    collapses vanish and the gamma vertex appears on both sides with
    opposite orientation, so the term is zero; the returned weights are the
    Monte Carlo evidence for the bulk part.
    """
    if location not in ("corner-C1", "corner-C2"):
        raise ValueError("location must be corner-C1 or corner-C2")
    d = r.dim
    if len(gamma) != d:
        raise InputMismatch("gamma needs one series per base direction")
    if location == "corner-C2":
        zero = TruncPoly.zero(d, r.y_cutoff)
        return CornerTerm(location, [(0, zero)] * d, None, [zero] * d,
                          c2_weights=c2_corner_weights(samples, seed))
    gamma_part = []
    for g in gamma:
        lead = next(((k, c) for k, c in enumerate(g) if c), (0, TruncPoly.zero(d, r.y_cutoff)))
        gamma_part.append(lead)
    weight = mc_weight(_r_cycle_graph(), PropagatorKind.S2, samples, seed)
    r_part = []
    for i in range(d):
        field_i = r.vector(i)
        div = TruncPoly.zero(d, r.y_cutoff)
        for (k,), comp in field_i.comps.items():
            div = div + comp.diff(k, "y")
        r_part.append(div)
    return CornerTerm(location, gamma_part, weight, r_part)

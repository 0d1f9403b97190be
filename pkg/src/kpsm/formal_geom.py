"""Formal exponential maps, Taylor lifts and the Grothendieck connection.

A formal exponential map is stored through its components
``phi^j(x; y) = x^j + y^j + (terms of y-degree >= 2)`` as polynomials in
(x, y).  Writing ``J = d phi / d y`` and ``Y_i = J^{-1} d phi / d x^i``, every
Taylor lift ``sigma(x; y) = f(phi_x(y))`` satisfies ``d_x sigma = Y_i^k d_{y^k} sigma``.
The flat connection is therefore ``D = d_x + R`` with the derivation

    R_i = -Y_i^k d/dy^k,

whose square vanishes:  d_i R_j - d_j R_i + [R_i, R_j] = 0.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .symalg import Multivector, TruncPoly, parse_poly

__all__ = [
    "FormalExp",
    "RField",
    "CutoffOverflow",
    "taylor_pullback",
    "r_field",
    "grothendieck_flatness_residual",
    "load_formal_exp",
]


class CutoffOverflow(ValueError):
    """A requested fiber degree exceeds what the exponential map stores."""


def _identity(dim, cut):
    one = TruncPoly.const(dim, 1, cut)
    zero = TruncPoly.zero(dim, cut)
    return [[one if a == b else zero for b in range(dim)] for a in range(dim)]


def _matmul(a, b):
    n, m, p = len(a), len(b), len(b[0])
    out = []
    for i in range(n):
        row = []
        for j in range(p):
            acc = a[i][0] * b[0][j]
            for k in range(1, m):
                acc = acc + a[i][k] * b[k][j]
            row.append(acc)
        out.append(row)
    return out


@dataclass(frozen=True)
class FormalExp:
    """Components ``phi^j(x; y)`` of a formal exponential map on R^d.

    ``y_cutoff`` bounds the fiber degree of everything derived from the map
    (Jacobian inverses are infinite series).  ``None`` is allowed only when
    the Jacobian is the identity, as for the flat map.
    """

    dim: int
    jets: tuple
    y_cutoff: int | None = 4

    def __post_init__(self):
        d = self.dim
        if len(self.jets) != d:
            raise ValueError(f"expected {d} components, got {len(self.jets)}")
        jets = tuple(p.with_cutoff(self.y_cutoff) for p in self.jets)
        object.__setattr__(self, "jets", jets)
        for j, p in enumerate(jets):
            at_zero = p.truncate_y(0)
            if at_zero != TruncPoly.var(d, "x", j, self.y_cutoff):
                raise ValueError(f"component {j + 1} does not restrict to x{j + 1} at y = 0")
            for k in range(d):
                lin = p.diff(k, "y").truncate_y(0)
                if lin != (1 if j == k else 0):
                    raise ValueError(f"d phi^{j + 1} / d y^{k + 1} at y = 0 is not the identity")
        if self.y_cutoff is None and not self.is_flat:
            raise ValueError("a non-flat exponential map needs a finite y_cutoff")

    @classmethod
    def flat(cls, dim: int, y_cutoff: int | None = None) -> "FormalExp":
        """phi_x(y) = x + y."""
        jets = tuple(TruncPoly.var(dim, "x", j, y_cutoff) + TruncPoly.var(dim, "y", j, y_cutoff)
                     for j in range(dim))
        return cls(dim, jets, y_cutoff)

    @classmethod
    def from_jets(cls, dim: int, texts, y_cutoff: int | None = 4) -> "FormalExp":
        return cls(dim, tuple(parse_poly(t, dim, y_cutoff) for t in texts), y_cutoff)

    @classmethod
    def from_christoffel(cls, dim: int, christoffel: dict, y_cutoff: int = 4) -> "FormalExp":
        """Geodesic exponential of the connection with constant symbols.

        ``christoffel[(j, k, l)]`` is Gamma^j_{kl} (0-based, symmetric in k, l
        is assumed).  The geodesic through x with velocity y has Taylor
        coefficients c_1 = y, c_{n+1} = (d c_n / d y^m) (-Gamma^m_{kl} y^k y^l).
        """
        d = dim
        y = [TruncPoly.var(d, "y", i, y_cutoff) for i in range(d)]
        accel = []
        for m in range(d):
            acc = TruncPoly.zero(d, y_cutoff)
            for (j, k, l), g in christoffel.items():
                if j == m and g:
                    acc = acc - (y[k] * y[l]).scale(Fraction(g))
            accel.append(acc)
        jets = []
        for j in range(d):
            c = y[j]
            total = TruncPoly.var(d, "x", j, y_cutoff) + c
            fact = 1
            for n in range(2, (y_cutoff or 0) + 1):
                nxt = TruncPoly.zero(d, y_cutoff)
                for m in range(d):
                    nxt = nxt + c.diff(m, "y") * accel[m]
                c = nxt
                fact *= n
                total = total + c.scale(Fraction(1, fact))
            jets.append(total)
        return cls(d, tuple(jets), y_cutoff)

    @classmethod
    def random(cls, dim: int, seed: int = 0, y_cutoff: int = 4, y_degree: int = 3,
               x_degree: int = 1, density: float = 0.5) -> "FormalExp":
        """Random polynomial map x + y + h(x, y) with h of fiber degree 2..y_degree."""
        rng = random.Random(seed)
        d = dim
        jets = []
        for j in range(d):
            p = TruncPoly.var(d, "x", j, y_cutoff) + TruncPoly.var(d, "y", j, y_cutoff)
            for ydeg in range(2, y_degree + 1):
                for yexp in _exponents(d, ydeg):
                    for xdeg in range(x_degree + 1):
                        for xexp in _exponents(d, xdeg):
                            if rng.random() < density:
                                c = Fraction(rng.randint(-3, 3), rng.randint(1, 3))
                                if c:
                                    p = p + TruncPoly.monomial(d, xexp, yexp, c, y_cutoff)
            jets.append(p)
        return cls(d, tuple(jets), y_cutoff)

    @property
    def is_flat(self) -> bool:
        d = self.dim
        return all(p == TruncPoly.var(d, "x", j) + TruncPoly.var(d, "y", j)
                   for j, p in enumerate(p.with_cutoff(None) for p in self.jets))

    def jacobian(self):
        """J[j][k] = d phi^j / d y^k."""
        return [[p.diff(k, "y") for k in range(self.dim)] for p in self.jets]

    def inverse_jacobian(self):
        """J^{-1} as a truncated Neumann series in the fiber degree."""
        d, cut = self.dim, self.y_cutoff
        ident = _identity(d, cut)
        if self.is_flat:
            return ident
        jac = self.jacobian()
        neg_n = [[ident[a][b] - jac[a][b] for b in range(d)] for a in range(d)]
        out = ident
        power = ident
        for _ in range(cut):
            power = _matmul(power, neg_n)
            if all(not p for row in power for p in row):
                break
            out = [[out[a][b] + power[a][b] for b in range(d)] for a in range(d)]
        return out


def _exponents(dim: int, degree: int):
    if dim == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _exponents(dim - 1, degree - first):
            yield (first,) + rest


@dataclass(frozen=True)
class RField:
    """Y[k][i] = Y^k_i(x; y); the connection derivation is R_i = -Y^k_i d/dy^k."""

    dim: int
    Y: tuple
    y_cutoff: int | None

    def vector(self, i: int) -> Multivector:
        """R_i as a vector field in the fiber directions."""
        return Multivector.vector(self.dim, [-self.Y[k][i] for k in range(self.dim)])

    def vectors(self) -> list[Multivector]:
        return [self.vector(i) for i in range(self.dim)]

    def perturbed(self, k: int, i: int, poly: TruncPoly) -> "RField":
        """Copy with ``poly`` added to Y^k_i (a control that breaks flatness)."""
        rows = [list(r) for r in self.Y]
        rows[k][i] = rows[k][i] + poly
        return RField(self.dim, tuple(tuple(r) for r in rows), self.y_cutoff)

    def is_identity(self) -> bool:
        return all(self.Y[k][i] == (1 if k == i else 0) for k in range(self.dim) for i in range(self.dim))


def r_field(phi: FormalExp) -> RField:
    """Y = (d phi/d y)^{-1} d phi/d x, truncated at the map's fiber cutoff."""
    d = phi.dim
    inv = phi.inverse_jacobian()
    dxphi = [[p.diff(i, "x") for i in range(d)] for p in phi.jets]
    Y = _matmul(inv, dxphi)
    if phi.y_cutoff is not None:
        Y = [[p.truncate_y(phi.y_cutoff) for p in row] for row in Y]
    return RField(d, tuple(tuple(r) for r in Y), phi.y_cutoff)


def taylor_pullback(phi: FormalExp, tensor, y_cutoff: int | None = None):
    """Lift a function or multivector field on R^d to the formal fibers.

    Functions are composed with phi.  Contravariant indices are transported
    with J^{-1}: (T phi^* P)^{k l} = (J^{-1})^k_a (J^{-1})^l_b P^{ab}(phi_x(y)).
    """
    cut = phi.y_cutoff if y_cutoff is None else y_cutoff
    if phi.y_cutoff is not None and (cut is None or cut > phi.y_cutoff):
        raise CutoffOverflow(f"fiber degree {cut} exceeds the stored cutoff {phi.y_cutoff}")
    d = phi.dim
    xs = [p.with_cutoff(cut) for p in phi.jets]

    def lift(p: TruncPoly) -> TruncPoly:
        if p.depends_on_y():
            raise ValueError("only base tensors (no y dependence) can be lifted")
        return p.substitute(xs=xs, y_cutoff=cut)

    if isinstance(tensor, TruncPoly):
        return lift(tensor)
    if not isinstance(tensor, Multivector):
        raise TypeError("expected a TruncPoly or a Multivector")
    comps = {idx: lift(p) for idx, p in tensor.comps.items()}
    if phi.is_flat or tensor.degree == 0:
        return Multivector(d, tensor.degree, comps)
    inv = [[p.with_cutoff(cut) for p in row] for row in phi.inverse_jacobian()]
    base = Multivector(d, tensor.degree, comps)
    out = {}
    for idx in _increasing(d, tensor.degree):
        acc = TruncPoly.zero(d, cut)
        for src in _all_indices(d, tensor.degree):
            val = base.component(src)
            if val is None:
                continue
            term = val
            for k, a in zip(idx, src):
                term = term * inv[k][a]
                if not term:
                    break
            acc = acc + term
        if acc:
            out[idx] = acc
    return Multivector(d, tensor.degree, out)


def _increasing(d, k):
    return itertools.combinations(range(d), k)


def _all_indices(d, k):
    return itertools.product(range(d), repeat=k)


def grothendieck_flatness_residual(r: RField, convention: int = -1) -> dict:
    """Curvature of d + R with R_i = convention * Y_i^k d/dy^k.

    Returns {(i, j): [component k]} for i < j, each component being
    d_i R_j^k - d_j R_i^k + R_i^l d_l R_j^k - R_j^l d_l R_i^k.  Products of
    truncated series are exact one degree below the cutoff, so the residual
    is truncated there.  ``convention=+1`` evaluates the same expression with
    R = +Y d/dy, which is flat only when the Y_i commute.
    """
    d = r.dim
    c = Fraction(convention)
    keep = None if r.y_cutoff is None else r.y_cutoff - 1
    R = [[r.Y[k][i].scale(c) for k in range(d)] for i in range(d)]  # R[i][k]
    # fiber degrees above ``keep`` are dropped at the end; cut the undifferentiated factors early
    low = R if keep is None else [[p.truncate_y(keep).with_cutoff(keep) for p in row] for row in R]
    out = {}
    for i in range(d):
        for j in range(i + 1, d):
            comps = []
            for k in range(d):
                val = R[j][k].diff(i, "x") - R[i][k].diff(j, "x")
                for l in range(d):
                    val = val + low[i][l] * R[j][k].diff(l, "y") - low[j][l] * R[i][k].diff(l, "y")
                comps.append(val if keep is None else val.truncate_y(keep))
            out[(i, j)] = comps
    return out


def load_formal_exp(path) -> FormalExp:
    """Read a formal exponential map from JSON.

    Accepted shapes: a list of jets ``["x1 + y1 + ...", ...]`` (one per
    output index, cutoff 4), ``{"dim": d, "jets": [...], "y_cutoff": K}``,
    or ``{"dim": d, "flat": true}`` for the flat map.
    """
    data = json.loads(Path(path).read_text())
    if isinstance(data, list):
        return FormalExp.from_jets(len(data), data, 4)
    d = int(data["dim"])
    cut = data.get("y_cutoff", 4)
    if data.get("flat"):
        return FormalExp.flat(d, data.get("y_cutoff"))
    return FormalExp.from_jets(d, data["jets"], cut)

"""Star product, deformed connection and curvature from graph sums.

Normalization (eps = -i*hbar):

    f * g      = sum_n eps^n / n! U_n(Pi, ..., Pi)(f, g)
    A(xi)      = sum_n eps^n / n! U_{n+1}(xi, Pi, ..., Pi)
    F(xi, eta) = sum_n eps^n / n! U_{n+2}(xi, eta, Pi, ..., Pi)

with U_n = sum over vertex-labeled graphs of prod_v (1/out(v)!) * w * B and
w the normalized angle integral.  For the star product the labeled sum is
folded into classes: eps^n/n! * sum_labeled (1/2^n) w B = eps^n * sum over
classes of w(rep) B(rep) / |Aut|.

Weights come from the frozen table, from two vanishing rules (a graph whose
form degree differs from the dimension of its configuration space, and an R
vertex without incoming edges next to another aerial vertex, which leaves a
one-form on a free two-dimensional position), or from a caller-supplied
function.  Graphs whose operator vanishes never need a weight.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .formal_geom import RField
from .kgraph import Kind, KGraph, enumerate_graphs, labeled_graphs
from .symalg import (
    FormalSeries,
    MultiDiffOp,
    Multivector,
    TruncPoly,
    feynman_operator,
    multi_indices,
    schouten_jacobiator,
)
from .weights import UnknownGraph, exact_weight

__all__ = [
    "StarProduct",
    "ConnectionForm",
    "CurvatureForm",
    "Residual",
    "StructuralReport",
    "ExactWeightUnavailable",
    "NonPoissonWarning",
    "ObstructionError",
    "graph_weight",
    "star",
    "connection_A",
    "curvature_F",
    "check_structural",
    "solve_gamma",
    "monomial_basis",
    "twist_residual",
]

MAX_EXACT_ORDER = 2


class ExactWeightUnavailable(LookupError):
    """A graph with a nonzero operator has no exact weight."""


class NonPoissonWarning(UserWarning):
    pass


class ObstructionError(ArithmeticError):
    """The homotopy equation for the twist has no solution at some order."""


def graph_weight(g: KGraph) -> Fraction:
    """Exact weight of ``g`` from the vanishing rules or the frozen table."""
    n, l = g.n_aerial, g.n_ground
    n_edges = sum(len(t) for t in g.edges)
    if 2 * n + l < 2 or n_edges != 2 * n + l - 2:
        return Fraction(0)
    if n >= 2:
        for v, kind in enumerate(g.aerial):
            if kind is Kind.R and g.in_degree(l + v) == 0:
                return Fraction(0)
    try:
        return exact_weight(g)
    except UnknownGraph as exc:
        raise ExactWeightUnavailable(str(exc)) from None


def _wrt_of(pi: Multivector, wrt: str | None) -> str:
    if wrt is not None:
        return wrt
    return "y" if pi.depends_on_y() else "x"


# star product -------------------------------------------------------------------

@dataclass(frozen=True)
class StarProduct:
    dim: int
    poisson: Multivector
    order: int
    terms: FormalSeries  # of arity-2 MultiDiffOp
    wrt: str = "x"
    exact: bool = True

    @property
    def y_cutoff(self):
        return self.poisson.y_cutoff()

    def __call__(self, f: TruncPoly, g: TruncPoly) -> FormalSeries:
        return FormalSeries([c.apply([f, g]) for c in self.terms], self.order)

    def mul(self, a: FormalSeries, b: FormalSeries) -> FormalSeries:
        """Product of two eps-series of functions, truncated at the order."""
        a, b = self._lift(a), self._lift(b)
        out = []
        for n in range(self.order + 1):
            acc = None
            for k in range(n + 1):
                for i in range(n - k + 1):
                    p, q = a[i], b[n - k - i]
                    if not p or not q:
                        continue
                    term = self.terms[k].apply([p, q])
                    acc = term if acc is None else acc + term
            out.append(acc if acc is not None else self._zero())
        return FormalSeries(out, self.order)

    def commutator(self, a, b) -> FormalSeries:
        return self.mul(a, b) - self.mul(b, a)

    def _zero(self):
        return TruncPoly.zero(self.dim, self.y_cutoff)

    def _lift(self, a) -> FormalSeries:
        if isinstance(a, FormalSeries):
            if a.order != self.order:
                raise ValueError(f"cutoff mismatch: N={a.order} vs N={self.order}")
            return a
        return FormalSeries([a] + [self._zero()] * self.order, self.order)

    def associator_operator(self) -> FormalSeries:
        """(f*g)*h - f*(g*h) as a series of arity-3 operators (composition)."""
        out = []
        for n in range(self.order + 1):
            acc = MultiDiffOp.zero(self.dim, 3, self.wrt)
            for k in range(n + 1):
                outer, inner = self.terms[k], self.terms[n - k]
                acc = acc + outer.compose(inner, 0) - outer.compose(inner, 1)
            out.append(acc)
        return FormalSeries(out, self.order)


def star(pi: Multivector, order: int = 2, wrt: str | None = None,
         weights: Callable[[KGraph], Fraction] | None = None, warn: bool = True) -> StarProduct:
    """Graph-sum star product of the bivector ``pi`` through eps^order."""
    if pi.degree != 2:
        raise ValueError("the star product needs a bivector")
    if order > MAX_EXACT_ORDER and weights is None:
        raise ExactWeightUnavailable(
            f"exact weights unavailable beyond order {MAX_EXACT_ORDER} (asked for {order})")
    if order < 0:
        raise ValueError("order must be nonnegative")
    wrt = _wrt_of(pi, wrt)
    if warn and not schouten_jacobiator(pi, wrt).is_zero():
        warnings.warn("the bivector is not Poisson; the product will not be associative",
                      NonPoissonWarning, stacklevel=2)
    weights = weights or graph_weight
    d, cut = pi.dim, pi.y_cutoff()
    coeffs = [MultiDiffOp.product(d, 2, wrt, cut)]
    for n in range(1, order + 1):
        acc = MultiDiffOp.zero(d, 2, wrt)
        if not pi.is_zero():
            for cls in enumerate_graphs(n, 0, 2):
                if cls.symmetry_sign < 0:
                    continue
                w = Fraction(weights(cls.representative))
                if not w:
                    continue
                op = feynman_operator(cls.representative, [pi] * n, wrt)
                acc = acc + op.scale(w / cls.automorphism_count)
        coeffs.append(acc)
    return StarProduct(d, pi, order, FormalSeries(coeffs, order), wrt, weights is graph_weight)


# connection and curvature ---------------------------------------------------------

@dataclass(frozen=True)
class ConnectionForm:
    """A_i: eps-series of arity-1 operators on fiber functions, one per dx^i."""

    dim: int
    order: int
    components: tuple

    def apply(self, i: int, sigma: FormalSeries) -> FormalSeries:
        """(d/dx^i + A_i) sigma."""
        out = []
        for n in range(self.order + 1):
            acc = sigma[n].diff(i, "x")
            for k in range(n + 1):
                if sigma[n - k]:
                    acc = acc + self.components[i][k].apply([sigma[n - k]])
            out.append(acc)
        return FormalSeries(out, self.order)


@dataclass(frozen=True)
class CurvatureForm:
    """F_ij (i < j): eps-series of fiber functions, coefficient of dx^i ^ dx^j."""

    dim: int
    order: int
    components: dict

    def component(self, i: int, j: int) -> FormalSeries:
        if i == j:
            return _zero_series(self.dim, self.order, None)
        if i < j:
            return self.components[(i, j)]
        return -self.components[(j, i)]

    def is_zero(self) -> bool:
        return all(s.is_zero() for s in self.components.values())


def _zero_series(dim, order, cut):
    return FormalSeries([TruncPoly.zero(dim, cut)] * (order + 1), order)


def _labeled_sum(n_pi: int, n_r: int, n_ground: int, decorations, weights, wrt: str, dim: int):
    """sum over vertex-labeled graphs of w * B / (2^n_pi), operator not yet divided by n_pi!."""
    acc = MultiDiffOp.zero(dim, n_ground, wrt)
    for g in labeled_graphs(n_pi, n_r, n_ground):
        if graph_weight_is_structurally_zero(g):
            continue
        op = feynman_operator(g, decorations, wrt)
        if not op:
            continue
        w = Fraction(weights(g))
        if w:
            acc = acc + op.scale(w)
    return acc.scale(Fraction(1, 2 ** n_pi * math.factorial(n_pi)))


def graph_weight_is_structurally_zero(g: KGraph) -> bool:
    """True when a vanishing rule applies (no table lookup needed)."""
    n, l = g.n_aerial, g.n_ground
    n_edges = sum(len(t) for t in g.edges)
    if 2 * n + l < 2 or n_edges != 2 * n + l - 2:
        return True
    if n >= 2:
        return any(kind is Kind.R and g.in_degree(l + v) == 0 for v, kind in enumerate(g.aerial))
    return False


def connection_A(r: RField, pi_lifted: Multivector, order: int = 2,
                 weights: Callable[[KGraph], Fraction] | None = None) -> ConnectionForm:
    """A_i = sum_n eps^n/n! U_{n+1}(R_i, Pi, ..., Pi) on fiber functions."""
    if order > MAX_EXACT_ORDER and weights is None:
        raise ExactWeightUnavailable(f"exact weights unavailable beyond order {MAX_EXACT_ORDER}")
    weights = weights or graph_weight
    d = r.dim
    comps = []
    for i in range(d):
        ri = r.vector(i)
        series = []
        for n in range(order + 1):
            if n and pi_lifted.is_zero():
                series.append(MultiDiffOp.zero(d, 1, "y"))
                continue
            series.append(_labeled_sum(n, 1, 1, [pi_lifted] * n + [ri], weights, "y", d))
        comps.append(FormalSeries(series, order))
    return ConnectionForm(d, order, tuple(comps))


def curvature_F(r: RField, pi_lifted: Multivector, order: int = 2,
                weights: Callable[[KGraph], Fraction] | None = None) -> CurvatureForm:
    """F_ij = F(R_i, R_j) - F(R_j, R_i) with F(xi, eta) = sum_n eps^n/n! U_{n+2}(xi, eta, Pi, ...)."""
    if order > MAX_EXACT_ORDER and weights is None:
        raise ExactWeightUnavailable(f"exact weights unavailable beyond order {MAX_EXACT_ORDER}")
    weights = weights or graph_weight
    d, cut = r.dim, r.y_cutoff
    vecs = r.vectors()
    comps = {}
    for i in range(d):
        for j in range(i + 1, d):
            series = []
            for n in range(order + 1):
                if n and pi_lifted.is_zero():
                    series.append(TruncPoly.zero(d, cut))
                    continue
                fwd = _labeled_sum(n, 2, 0, [pi_lifted] * n + [vecs[i], vecs[j]], weights, "y", d)
                bwd = _labeled_sum(n, 2, 0, [pi_lifted] * n + [vecs[j], vecs[i]], weights, "y", d)
                val = (fwd - bwd).terms.get((), TruncPoly.zero(d, cut))
                series.append(val)
            comps[(i, j)] = FormalSeries(series, order)
    return CurvatureForm(d, order, comps)


# structural checks ------------------------------------------------------------------

def monomial_basis(dim: int, max_degree: int, wrt: str = "x", y_cutoff=None) -> list[TruncPoly]:
    """Monomials of total degree <= max_degree in the coordinates ``wrt``."""
    out = []
    for alpha in multi_indices(dim, max_degree):
        if wrt == "x":
            out.append(TruncPoly.monomial(dim, alpha, None, 1, y_cutoff))
        else:
            out.append(TruncPoly.monomial(dim, (0,) * dim, alpha, 1, y_cutoff))
    return out


@dataclass
class Residual:
    """Residual of one identity over a finite set of evaluations.

    ``norm`` is the sum of absolute values of all residual coefficients,
    so it is exactly 0 when the identity holds on every evaluation.
    """

    name: str
    evaluations: int = 0
    norm: Fraction = Fraction(0)
    nonzero: int = 0
    first_failure: str | None = None
    orders: int = 0
    note: str = ""

    @property
    def zero(self) -> bool:
        return self.nonzero == 0

    def record(self, label: str, series) -> None:
        self.evaluations += 1
        coeffs = series.coeffs if isinstance(series, FormalSeries) else (series,)
        for k, c in enumerate(coeffs):
            if c:
                self.nonzero += 1
                self.norm += sum(abs(v) for v in c.terms.values())
                if self.first_failure is None:
                    self.first_failure = f"{label}: eps^{k} coefficient {c}"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "zero": self.zero,
            "norm": str(self.norm),
            "evaluations": self.evaluations,
            "nonzero_coefficients": self.nonzero,
            "orders_checked": self.orders,
            "first_failure": self.first_failure,
            "note": self.note,
        }


@dataclass
class StructuralReport:
    order: int
    residuals: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(r.zero for r in self.residuals.values())

    def to_json(self) -> dict:
        return {"order": self.order, "ok": self.ok,
                "residuals": {k: v.to_json() for k, v in self.residuals.items()}}


def _series_of(p: TruncPoly, order: int) -> FormalSeries:
    return FormalSeries([p] + [TruncPoly.zero(p.dim, p.y_cutoff)] * order, order)


def _as_series(v, order: int) -> FormalSeries:
    if not isinstance(v, FormalSeries):
        return _series_of(v, order)
    if v.order < order:
        raise ValueError(f"series known to eps^{v.order}, needed eps^{order}")
    return v.truncate(order) if v.order > order else v


def check_structural(starp: StarProduct, A: ConnectionForm | None = None,
                     F: CurvatureForm | None = None, order: int | None = None,
                     basis_degree: int = 2, names: Sequence[str] | None = None) -> StructuralReport:
    """Evaluate the structural identities on monomial arguments.

    deg0        (f*g)*h - f*(g*h)
    derivation  D_i(f*g) - (D_i f)*g - f*(D_i g),   D_i = d/dx^i + A_i
    deg1        d_i(star) + A_i o star - star o A_i, by operator composition
    deg2        [D_i, D_j] sigma - [F_ij, sigma]_*
    deg3        D_i F_jk + D_j F_ki + D_k F_ij
    deg4        [F, F] in the Gerstenhaber sense; zero because F has no arguments

    Without A and F only deg0 is evaluated.
    """
    N = starp.order if order is None else order
    if N > starp.order:
        raise ValueError("order exceeds the star product cutoff")
    if A is not None and (A.order < N or A.dim != starp.dim):
        raise ValueError("connection does not match the star product")
    if F is not None and (F.order < N or F.dim != starp.dim):
        raise ValueError("curvature does not match the star product")
    sp = starp if N == starp.order else _truncated(starp, N)
    d = sp.dim
    cut = sp.y_cutoff
    basis = monomial_basis(d, basis_degree, sp.wrt, cut)
    wanted = set(names or ["deg0", "derivation", "deg1", "deg2", "deg3", "deg4"])
    report = StructuralReport(N)

    products = {}

    def prod(a, b):
        key = (a, b)
        if key not in products:
            products[key] = sp(basis[a], basis[b])
        return products[key]

    if "deg0" in wanted:
        res = Residual("deg0", orders=N)
        for a, b, c in itertools.product(range(len(basis)), repeat=3):
            left = sp.mul(prod(a, b), basis[c])
            right = sp.mul(basis[a], prod(b, c))
            res.record(f"({basis[a]}, {basis[b]}, {basis[c]})", left - right)
        report.residuals["deg0"] = res
    if A is None or F is None:
        return report
    A = _truncate_connection(A, N)
    F = _truncate_curvature(F, N)

    if "derivation" in wanted:
        res = Residual("derivation", orders=N)
        for i in range(d):
            for a, b in itertools.product(range(len(basis)), repeat=2):
                fa, fb = _series_of(basis[a], N), _series_of(basis[b], N)
                lhs = A.apply(i, prod(a, b))
                rhs = sp.mul(A.apply(i, fa), fb) + sp.mul(fa, A.apply(i, fb))
                res.record(f"i={i + 1}, ({basis[a]}, {basis[b]})", lhs - rhs)
        report.residuals["derivation"] = res

    if "deg1" in wanted:
        res = Residual("deg1", orders=N, note="operator composition, evaluated on the basis")
        for i in range(d):
            ops = []
            for n in range(N + 1):
                acc = sp.terms[n].dx(i)
                for k in range(n + 1):
                    a_op, m_op = A.components[i][k], sp.terms[n - k]
                    acc = acc + a_op.compose(m_op, 0) - m_op.compose(a_op, 0) - m_op.compose(a_op, 1)
                ops.append(acc)
            for a, b in itertools.product(range(len(basis)), repeat=2):
                vals = FormalSeries([op.apply([basis[a], basis[b]]) for op in ops], N)
                res.record(f"i={i + 1}, ({basis[a]}, {basis[b]})", vals)
        report.residuals["deg1"] = res

    if "deg2" in wanted:
        res = Residual("deg2", orders=N)
        for i, j in itertools.combinations(range(d), 2):
            fij = F.component(i, j)
            for a in range(len(basis)):
                s = _series_of(basis[a], N)
                lhs = A.apply(i, A.apply(j, s)) - A.apply(j, A.apply(i, s))
                rhs = sp.commutator(fij, s)
                res.record(f"(i,j)=({i + 1},{j + 1}), {basis[a]}", lhs - rhs)
        report.residuals["deg2"] = res

    if "deg3" in wanted:
        res = Residual("deg3", orders=N)
        for i, j, k in itertools.combinations(range(d), 3):
            total = (A.apply(i, F.component(j, k)) + A.apply(j, F.component(k, i))
                     + A.apply(k, F.component(i, j)))
            res.record(f"(i,j,k)=({i + 1},{j + 1},{k + 1})", total)
        report.residuals["deg3"] = res

    if "deg4" in wanted:
        report.residuals["deg4"] = Residual("deg4", orders=N,
                                            note="curvature terms take no arguments, so their bracket is empty")
    return report


def _truncated(sp: StarProduct, N: int) -> StarProduct:
    return StarProduct(sp.dim, sp.poisson, N, sp.terms.truncate(N), sp.wrt, sp.exact)


def _truncate_connection(A: ConnectionForm, N: int) -> ConnectionForm:
    if A.order == N:
        return A
    return ConnectionForm(A.dim, N, tuple(c.truncate(N) for c in A.components))


def _truncate_curvature(F: CurvatureForm, N: int) -> CurvatureForm:
    if F.order == N:
        return F
    return CurvatureForm(F.dim, N, {k: v.truncate(N) for k, v in F.components.items()})


# twist -------------------------------------------------------------------------------

def _koszul_homotopy(two_form: dict, dim: int, cut) -> list[TruncPoly]:
    """kappa on a 2-form {(i, j): poly}: y^k iota_k, divided by (form + fiber degree) per monomial."""
    out = [TruncPoly.zero(dim, cut) for _ in range(dim)]
    for (i, j), p in two_form.items():
        if not p:
            continue
        # iota_{d/dx^k} (dx^i ^ dx^j) = delta_ki dx^j - delta_kj dx^i
        for key, c in p.terms.items():
            q = sum(key[dim:]) + 2
            mono_j = TruncPoly.monomial(dim, key[:dim], key[dim:], c / q, cut)
            out[j] = out[j] + mono_j * TruncPoly.var(dim, "y", i, cut)
            out[i] = out[i] - mono_j * TruncPoly.var(dim, "y", j, cut)
    return out


def _dg_one_form(A: ConnectionForm, gamma: list) -> dict:
    """(d + R) applied to a 1-form of fiber functions (order-0 part of the connection)."""
    d = A.dim
    out = {}
    for i, j in itertools.combinations(range(d), 2):
        out[(i, j)] = (gamma[j].diff(i, "x") - gamma[i].diff(j, "x")
                       + A.components[i][0].apply([gamma[j]]) - A.components[j][0].apply([gamma[i]]))
    return out


def _twist_residual(starp, A, F, omega, gamma, N) -> dict:
    """F + eps*omega + D gamma + gamma*gamma, componentwise (i < j)."""
    d = starp.dim
    out = {}
    for i, j in itertools.combinations(range(d), 2):
        total = F.component(i, j)
        if omega is not None:
            total = total + omega[(i, j)].shift(1)
        total = total + A.apply(i, gamma[j]) - A.apply(j, gamma[i])
        total = total + starp.mul(gamma[i], gamma[j]) - starp.mul(gamma[j], gamma[i])
        out[(i, j)] = total
    return out


def solve_gamma(F: CurvatureForm, A: ConnectionForm, starp: StarProduct,
                omega: dict | None = None, order: int | None = None,
                max_sweeps: int = 64) -> list[FormalSeries]:
    """Solve F + eps*omega + D gamma + gamma*gamma = 0 order by order in eps.

    At each order the new coefficient solves (d + R) gamma_n = -Phi_n, with
    Phi_n the current residual.  Writing d + R = -delta + nabla, where delta
    = dx^i d/dy^i and nabla keeps or raises fiber degree, the solution is the
    fixed point of gamma_n = kappa(Phi_n + nabla gamma_n) with kappa the Euler
    contraction for delta.  ``omega`` maps (i, j) to an eps-series of fiber
    functions and must be closed and central.
    """
    N = starp.order if order is None else order
    d = starp.dim
    cut = starp.y_cutoff
    if A.order < N or F.order < N:
        raise ValueError("connection or curvature computed to a lower order than requested")
    A = _truncate_connection(A, N)
    F = _truncate_curvature(F, N)
    sp = starp if N == starp.order else _truncated(starp, N)
    if omega is not None:
        omega = {k: _as_series(v, N) for k, v in omega.items()}
        _check_omega(omega, A, sp, N)
    zero = TruncPoly.zero(d, cut)
    coeffs = [[zero] * (N + 1) for _ in range(d)]
    for n in range(N + 1):
        gamma = [FormalSeries(coeffs[i], N) for i in range(d)]
        phi = {k: v[n] for k, v in _twist_residual(sp, A, F, omega, gamma, N).items()}
        new = [zero] * d
        for _ in range(max_sweeps):
            dg = _dg_one_form(A, new)
            delta_part = _minus_delta(new, d, cut)
            nabla = {k: dg[k] - delta_part[k] for k in dg}
            nxt = _koszul_homotopy({k: phi[k] + nabla[k] for k in phi}, d, cut)
            if nxt == new:
                break
            new = nxt
        else:
            raise ObstructionError(f"homotopy iteration did not settle at order {n}")
        for i in range(d):
            coeffs[i][n] = new[i]
        gamma = [FormalSeries(coeffs[i], N) for i in range(d)]
        check = _twist_residual(sp, A, F, omega, gamma, N)
        bad = [k for k, v in check.items() if v[n]]
        if bad:
            i, j = bad[0]
            raise ObstructionError(
                f"no solution at order eps^{n}: component ({i + 1},{j + 1}) keeps {check[bad[0]][n]}")
    return [FormalSeries(coeffs[i], N) for i in range(d)]


def _minus_delta(gamma: list, d: int, cut) -> dict:
    """-delta gamma for a 1-form: components (i, j) of -(d_{y^i} gamma_j - d_{y^j} gamma_i)."""
    out = {}
    for i, j in itertools.combinations(range(d), 2):
        out[(i, j)] = gamma[i].diff(j, "y") - gamma[j].diff(i, "y")
    return out


def _check_omega(omega: dict, A: ConnectionForm, sp: StarProduct, N: int) -> None:
    d = sp.dim
    for i, j in itertools.combinations(range(d), 2):
        if (i, j) not in omega:
            raise ValueError(f"omega lacks component ({i + 1},{j + 1})")
    for i, j, k in itertools.combinations(range(d), 3):
        closed = A.apply(i, omega[(j, k)]) + A.apply(j, omega[(i, k)].map(lambda p: -p)) + A.apply(k, omega[(i, j)])
        if not closed.is_zero():
            raise ValueError("omega is not closed under the deformed connection")
    basis = monomial_basis(d, 1, "y", sp.y_cutoff)
    for w in omega.values():
        for b in basis:
            if not sp.commutator(w, b).is_zero():
                raise ValueError("omega is not central for the star product")


def twist_residual(F: CurvatureForm, A: ConnectionForm, starp: StarProduct, gamma: list,
                   omega: dict | None = None) -> dict:
    """Public form of the residual F + eps*omega + D gamma + gamma*gamma."""
    N = starp.order
    if omega is not None:
        omega = {k: _as_series(v, N) for k, v in omega.items()}
    return _twist_residual(starp, _truncate_connection(A, N), _truncate_curvature(F, N), omega, gamma, N)

"""Angle kernels, their analytic one-forms and Monte Carlo graph weights.

Every kernel is the argument of a ratio of linear factors in (u, conj u, v,
conj v); the derivative of ``arg L`` is ``Im(dL / L)``, which gives exact
closed-form partials.  For an edge ``source -> target`` the form is
``d psi(target, source)``: the first argument is the head.

The weight of a graph is the normalized integral

    w = (2 pi)^(-|E|) * integral of  d psi_e1 ^ ... ^ d psi_eE

over the configuration space modulo its symmetry group.  Gauge fixings:

* half-plane, >= 2 ground points: first ground at 0, last at 1, the rest
  ordered in between; coordinates (x1, y1, ..., xn, yn, t_1, ..., t_{l-2}).
* half-plane, 1 ground point: ground at 0, first aerial point on the upper
  unit semicircle at angle theta; coordinates (theta, x2, y2, ...).
* half-plane, no ground point: first aerial point at i; coordinates (x2, y2, ...).
* quadrant (scaling only): with ground points on the positive real axis the
  last one sits at 1; otherwise the first aerial point is on the unit circle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from enum import Enum

import numpy as np

from .kgraph import KGraph, canonical_form, class_representative, serialize, deserialize

__all__ = [
    "PropagatorKind",
    "Weight",
    "SingularConfiguration",
    "NonIntegrable",
    "UnknownGraph",
    "angle",
    "propagator_form",
    "mc_weight",
    "weight_table",
    "exact_weight",
    "class_weight",
    "TWO_PI",
    "RawGraph",
    "propagator_identity_residuals",
]

TWO_PI = 2 * math.pi
SINGULAR_TOL = 1e-12


class SingularConfiguration(ValueError):
    pass


class NonIntegrable(RuntimeError):
    pass


class UnknownGraph(KeyError):
    pass


class PropagatorKind(Enum):
    KONTSEVICH = "kontsevich"
    S1 = "s1"
    S2 = "s2"
    A1 = "a1"
    A2 = "a2"

    @property
    def quadrant(self) -> bool:
        return self is not PropagatorKind.KONTSEVICH


# each factor: (power, a, b, c, e) meaning (a u + b conj(u) + c v + e conj(v))^power
_FACTORS = {
    PropagatorKind.KONTSEVICH: ((1, 1, 0, -1, 0), (-1, 1, 0, 0, -1)),
    PropagatorKind.S1: ((1, 1, 0, -1, 0), (1, 0, 1, -1, 0), (-1, 0, 1, 1, 0), (-1, 1, 0, 1, 0)),
    PropagatorKind.S2: ((1, 1, 0, -1, 0), (1, 0, 1, 1, 0), (-1, 0, 1, -1, 0), (-1, 1, 0, 1, 0)),
    PropagatorKind.A1: ((1, 1, 0, -1, 0), (1, 1, 0, 1, 0), (-1, 1, 0, 0, 1), (-1, 1, 0, 0, -1)),
    PropagatorKind.A2: ((1, 1, 0, -1, 0), (1, 1, 0, 1, 0), (-1, 0, 1, -1, 0), (-1, 0, 1, 1, 0)),
}


def _kind(kind) -> PropagatorKind:
    return kind if isinstance(kind, PropagatorKind) else PropagatorKind(str(kind).lower())


def _in_domain(kind: PropagatorKind, z: complex) -> bool:
    if kind.quadrant:
        return z.real >= 0 and z.imag >= 0
    return z.imag >= 0


def _factor_values(kind, u, v):
    uc, vc = np.conj(u), np.conj(v)
    return [(p, a * u + b * uc + c * v + e * vc, (a, b, c, e)) for p, a, b, c, e in _FACTORS[kind]]


def _check_point(kind: PropagatorKind, u: complex, v: complex, domain: bool = True):
    if domain and not (_in_domain(kind, u) and _in_domain(kind, v)):
        raise SingularConfiguration(f"points {u}, {v} are outside the {kind.value} domain")
    if abs(u - v) < SINGULAR_TOL:
        raise SingularConfiguration("coincident points")
    for _, val, _ in _factor_values(kind, complex(u), complex(v)):
        if abs(val) < SINGULAR_TOL:
            raise SingularConfiguration("a mirror image coincides with the other point")


def angle(kind, u: complex, v: complex, extend: bool = False) -> float:
    """Principal-branch angle psi_kind(u, v) in radians.

    ``extend`` evaluates the closed formula outside the kernel's domain, as
    needed for the reflection identities.
    """
    kind = _kind(kind)
    u, v = complex(u), complex(v)
    _check_point(kind, u, v, domain=not extend)
    ratio = complex(1)
    for p, val, _ in _factor_values(kind, u, v):
        ratio = ratio * val if p > 0 else ratio / val
    out = math.atan2(ratio.imag, ratio.real)
    # atan2 reports -pi for a signed-zero imaginary part; the branch is (-pi, pi]
    return math.pi if out == -math.pi else out


def _partials(kind: PropagatorKind, u, v):
    """(d/dRe u, d/dIm u, d/dRe v, d/dIm v) of psi; works on numpy arrays."""
    du_re = du_im = dv_re = dv_im = 0.0
    for p, val, (a, b, c, e) in _factor_values(kind, u, v):
        inv = p / val
        du_re = du_re + np.imag((a + b) * inv)
        du_im = du_im + np.real((a - b) * inv)
        dv_re = dv_re + np.imag((c + e) * inv)
        dv_im = dv_im + np.real((c - e) * inv)
    return du_re, du_im, dv_re, dv_im


def propagator_form(kind, u: complex, v: complex) -> tuple[float, float, float, float]:
    """Exact partial derivatives of psi_kind at (u, v)."""
    kind = _kind(kind)
    u, v = complex(u), complex(v)
    _check_point(kind, u, v)
    return tuple(float(x) for x in _partials(kind, u, v))


def _mod_2pi(x: float) -> float:
    """Distance of x from the nearest multiple of 2 pi."""
    r = math.remainder(x, TWO_PI)
    return abs(r)


def propagator_identity_residuals(points: int = 1000, seed: int = 0) -> dict[str, float]:
    """Largest deviation of each kernel identity over random quadrant points.

    s1-head-imaginary   psi_S1(i t, v)
    s2-head-real        psi_S2(t, v)
    s1-mirror           psi_S1(u, v) - psi_S1(conj u, v)           (mod 2 pi)
    s2-mirror           psi_S2(u, v) - psi_S2(-conj u, v)          (mod 2 pi)
    s1-s2-swap          psi_S1(u, v) - psi_S2(v, u)                (mod 2 pi)
    a1-chain-rule       d psi_A1 at (sqrt z, sqrt w) minus the pullback of
                        the half-plane form at (z, w) under z -> z^2
    """
    rng = np.random.Generator(np.random.Philox(seed))

    def quad(size):
        r = rng.uniform(0.05, 3.0, size)
        th = rng.uniform(0.02, math.pi / 2 - 0.02, size)
        return r * np.exp(1j * th)

    us, vs = quad(points), quad(points)
    ts = rng.uniform(0.05, 3.0, points)
    out = {k: 0.0 for k in ("s1-head-imaginary", "s2-head-real", "s1-mirror", "s2-mirror",
                            "s1-s2-swap", "a1-chain-rule")}
    for u, v, t in zip(us, vs, ts):
        u, v, t = complex(u), complex(v), float(t)
        if abs(u - v) < 1e-3:
            continue
        out["s1-head-imaginary"] = max(out["s1-head-imaginary"], abs(angle("s1", 1j * t, v)))
        out["s2-head-real"] = max(out["s2-head-real"], abs(angle("s2", t, v)))
        out["s1-mirror"] = max(out["s1-mirror"],
                               _mod_2pi(angle("s1", u, v) - angle("s1", u.conjugate(), v, extend=True)))
        out["s2-mirror"] = max(out["s2-mirror"],
                               _mod_2pi(angle("s2", u, v) - angle("s2", -u.conjugate(), v, extend=True)))
        out["s1-s2-swap"] = max(out["s1-s2-swap"], _mod_2pi(angle("s1", u, v) - angle("s2", v, u)))
        z, w = u * u, v * v
        fz = propagator_form("kontsevich", z, w)
        fa = propagator_form("a1", u, v)
        a, b = u.real, u.imag
        c, e = v.real, v.imag
        pulled = (2 * a * fz[0] + 2 * b * fz[1], -2 * b * fz[0] + 2 * a * fz[1],
                  2 * c * fz[2] + 2 * e * fz[3], -2 * e * fz[2] + 2 * c * fz[3])
        scale = max(1.0, max(abs(x) for x in pulled))
        dev = max(abs(p - q) for p, q in zip(fa, pulled)) / scale
        out["a1-chain-rule"] = max(out["a1-chain-rule"], dev)
    return out


# weights ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Weight:
    graph: str
    exact: Fraction | None = None
    mean: float | None = None
    stderr: float | None = None
    samples: int | None = None
    seed: int | None = None
    kind: str = "kontsevich"

    def __post_init__(self):
        if self.exact is None and self.mean is None:
            raise ValueError("a weight needs an exact value or an estimate")

    def consistent(self, sigmas: float = 4.0) -> bool:
        if self.exact is None or self.mean is None:
            return True
        return abs(float(self.exact) - self.mean) <= sigmas * self.stderr

    @property
    def value(self) -> float:
        return float(self.exact) if self.exact is not None else self.mean

    def to_json(self) -> dict:
        return {
            "graph": self.graph,
            "exact": None if self.exact is None else f"{self.exact.numerator}/{self.exact.denominator}",
            "mean": self.mean,
            "stderr": self.stderr,
            "samples": self.samples,
            "seed": self.seed,
            "kind": self.kind,
        }

    @classmethod
    def from_json(cls, row: dict) -> "Weight":
        ex = row.get("exact")
        return cls(row["graph"], Fraction(ex) if ex is not None else None, row.get("mean"),
                   row.get("stderr"), row.get("samples"), row.get("seed"), row.get("kind", "kontsevich"))


class _Sampler:
    """Draws gauge-fixed configurations with an importance density.

    Each free aerial point picks uniformly one of the available centres
    (ground points, the corner, earlier aerial points) and is placed at
    distance rho = s/(1-s) with s uniform, at a uniform angle.  The density
    of that component is 1/(Theta rho (1+rho)^2) with Theta the opening angle.
    """

    def __init__(self, g, kind: PropagatorKind):
        self.g = g
        self.kind = kind
        self.n = g.n_aerial
        self.l = g.n_ground

    def _domain(self, z):
        if self.kind.quadrant:
            return (z.real > 0) & (z.imag > 0)
        return z.imag > 0

    def draw(self, rng: np.random.Generator, size: int):
        n, l = self.n, self.l
        quad = self.kind.quadrant
        logw = np.zeros(size)
        valid = np.ones(size, dtype=bool)
        ground = np.zeros((size, l))
        coords = []  # (vertex, dRe, dIm) per free coordinate, vertex in global numbering
        ground_coords = []
        first_free = 0
        pts = np.zeros((size, n), dtype=complex)
        if not quad:
            if l >= 2:
                ground[:, l - 1] = 1.0
                if l > 2:
                    mid = np.sort(rng.random((size, l - 2)), axis=1)
                    ground[:, 1:l - 1] = mid
                    logw += math.lgamma(l - 1)  # 1/density of ordered uniforms
                    ground_coords = list(range(1, l - 1))
            elif l == 1:
                if n == 0:
                    raise ValueError("empty configuration space")
                theta = rng.random(size) * math.pi
                pts[:, 0] = np.exp(1j * theta)
                logw += math.log(math.pi)
                coords.append((l + 0, -np.sin(theta), np.cos(theta)))
                first_free = 1
            else:
                if n == 0:
                    raise ValueError("empty configuration space")
                pts[:, 0] = 1j
                first_free = 1
        else:
            if l >= 1:
                ground[:, l - 1] = 1.0
                if l > 1:
                    ground[:, : l - 1] = np.sort(rng.random((size, l - 1)), axis=1)
                    logw += math.lgamma(l)
                    ground_coords = list(range(0, l - 1))
            else:
                if n == 0:
                    raise ValueError("empty configuration space")
                theta = rng.random(size) * (math.pi / 2)
                pts[:, 0] = np.exp(1j * theta)
                logw += math.log(math.pi / 2)
                coords.append((l + 0, -np.sin(theta), np.cos(theta)))
                first_free = 1
        ones = np.ones(size)
        zeros = np.zeros(size)
        for j in range(first_free, n):
            # centres: ground points, the corner (quadrant), earlier aerial points
            centres = [(ground[:, s].astype(complex), "real") for s in range(l)]
            if quad:
                centres.append((np.zeros(size, dtype=complex), "corner"))
            centres += [(pts[:, a], "free") for a in range(j)]
            if not centres:
                centres = [(np.zeros(size, dtype=complex), "real")]
            m = len(centres)
            pick = rng.integers(0, m, size)
            s = rng.random(size)
            rho = s / (1.0 - s)
            phase = rng.random(size)
            z = np.zeros(size, dtype=complex)
            for ci, (c, typ) in enumerate(centres):
                sel = pick == ci
                if not sel.any():
                    continue
                span = {"real": math.pi, "corner": math.pi / 2, "free": 2 * math.pi}[typ]
                z[sel] = c[sel] + rho[sel] * np.exp(1j * span * phase[sel])
            dens = np.zeros(size)
            for c, typ in centres:
                span = {"real": math.pi, "corner": math.pi / 2, "free": 2 * math.pi}[typ]
                r = np.abs(z - c)
                with np.errstate(divide="ignore", invalid="ignore"):
                    comp = 1.0 / (span * r * (1.0 + r) ** 2)
                if typ == "real":
                    comp = np.where(z.imag >= c.imag, comp, 0.0)
                elif typ == "corner":
                    comp = np.where((z.real >= 0) & (z.imag >= 0), comp, 0.0)
                dens += comp
            dens /= m
            valid &= self._domain(z) & np.isfinite(dens) & (dens > 0)
            with np.errstate(divide="ignore"):
                logw -= np.log(np.where(dens > 0, dens, 1.0))
            pts[:, j] = z
            coords.append((l + j, ones, zeros))
            coords.append((l + j, zeros, ones))
        for s in ground_coords:
            coords.append((s, ones, zeros))
        positions = np.concatenate([ground.astype(complex), pts], axis=1)
        return positions, coords, logw, valid


def _integrand(g, kind: PropagatorKind, positions, coords):
    """det of d psi_e / d coord_c for every sample."""
    edges = _edge_pairs(g)
    E, D = len(edges), len(coords)
    size = positions.shape[0]
    if E != D:
        raise ValueError(f"form degree {E} differs from the configuration-space dimension {D}")
    if E == 0:
        return np.ones(size)
    J = np.zeros((size, E, D))
    for ei, (src, tgt) in enumerate(edges):
        u, v = positions[:, tgt], positions[:, src]
        with np.errstate(divide="ignore", invalid="ignore"):
            du_re, du_im, dv_re, dv_im = _partials(kind, u, v)
        for ci, (vert, dre, dim_) in enumerate(coords):
            if vert == tgt:
                J[:, ei, ci] += du_re * dre + du_im * dim_
            if vert == src:
                J[:, ei, ci] += dv_re * dre + dv_im * dim_
    J = np.nan_to_num(J, nan=0.0, posinf=0.0, neginf=0.0)
    return np.linalg.det(J)


def _edge_pairs(g):
    ng = g.n_ground
    pairs = [(ng + v, t) for v, targets in enumerate(g.edges) for t in targets]
    return pairs + list(getattr(g, "ground_edges", ()))


def _as_graph(g):
    if isinstance(g, KGraph):
        return g
    if isinstance(g, str):
        return deserialize(g)
    return g  # duck-typed raw graph (e.g. with a double edge)


class RawGraph:
    """Unvalidated graph data, for integrals of graphs the enumerator excludes.

    ``ground_edges`` lists (ground vertex, target) pairs for edges leaving a
    boundary point, as in the X polarization.
    """

    def __init__(self, n_ground: int, edges, ground_edges=()):
        self.n_ground = n_ground
        self.edges = tuple(tuple(t) for t in edges)
        self.n_aerial = len(self.edges)
        self.ground_edges = tuple((int(s), int(t)) for s, t in ground_edges)
        for s, t in self.ground_edges:
            if not (0 <= s < n_ground and n_ground <= t < n_ground + self.n_aerial):
                raise ValueError(f"ground edge {s}->{t} must run from a ground to an aerial vertex")

    def __str__(self):
        text = f"{self.n_ground};raw;" + "|".join(",".join(map(str, t)) for t in self.edges)
        if self.ground_edges:
            text += ";from-ground=" + ",".join(f"{s}>{t}" for s, t in self.ground_edges)
        return text


def mc_weight(g, kind=PropagatorKind.KONTSEVICH, samples: int = 10**5, seed: int = 0,
              block: int = 1 << 16) -> Weight:
    """Monte Carlo estimate of the normalized weight of ``g``.

    Blocks of ``block`` samples use independent Philox streams spawned from
    ``seed``; the estimate is reproducible for a fixed (samples, seed, block).
    """
    kind = _kind(kind)
    g = _as_graph(g)
    if samples < 10**4:
        raise ValueError("at least 10^4 samples are required")
    sampler = _Sampler(g, kind)
    n_edges = len(_edge_pairs(g))
    norm = TWO_PI ** (-n_edges)
    children = np.random.SeedSequence(seed).spawn((samples + block - 1) // block)
    total = 0.0
    total_sq = 0.0
    rejected = 0
    done = 0
    for child in children:
        size = min(block, samples - done)
        rng = np.random.Generator(np.random.Philox(child))
        positions, coords, logw, valid = sampler.draw(rng, size)
        vals = np.zeros(size)
        if valid.any():
            f = _integrand(g, kind, positions[valid], coords_subset(coords, valid))
            vals[valid] = f * np.exp(logw[valid]) * norm
        vals = np.nan_to_num(vals, nan=0.0, posinf=0.0, neginf=0.0)
        rejected += int(size - valid.sum())
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += size
    if rejected > 0.99 * samples:
        raise NonIntegrable(f"sampler rejected {rejected} of {samples} draws")
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    stderr = math.sqrt(var / (samples - 1))
    enc = canonical_form(g).decode() if isinstance(g, KGraph) else str(g)
    return Weight(enc, None, mean, stderr, samples, seed, kind.value)


def coords_subset(coords, mask):
    return [(v, dre[mask], dim_[mask]) for v, dre, dim_ in coords]


# exact table ---------------------------------------------------------------------

_TABLE_CACHE: dict = {}


def _load_table() -> dict:
    if "table" not in _TABLE_CACHE:
        text = resources.files("kpsm.data").joinpath("weights.json").read_text()
        raw = json.loads(text)
        _TABLE_CACHE["table"] = {row["graph"]: row for row in raw["weights"]}
    return _TABLE_CACHE["table"]


def weight_table(order: int = 2) -> dict[bytes, Fraction]:
    """Frozen exact weights of half-plane graphs with at most ``order`` Pi
    vertices, keyed by the canonical encoding of each class representative."""
    if order > 2:
        raise UnknownGraph(f"no exact weights beyond order 2 (asked for {order})")
    out = {}
    for enc, row in _load_table().items():
        if row["order"] <= order:
            out[canonical_form(deserialize(enc))] = Fraction(row["exact"])
    return out


def table_rows() -> list[dict]:
    return list(_load_table().values())


def exact_weight(g: KGraph) -> Fraction:
    """Exact weight of an edge-ordered graph from the frozen table.

    Entries are stored for class representatives; any other member of the
    class differs by the orientation sign of :func:`class_representative`.
    """
    rep, sign = class_representative(g)
    row = _load_table().get(serialize(rep))
    if row is None:
        raise UnknownGraph(f"graph {serialize(g)} is not in the exact table")
    return sign * Fraction(row["exact"])


def class_weight(rep: KGraph) -> Fraction:
    return exact_weight(rep)

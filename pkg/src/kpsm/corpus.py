"""Bundled Poisson structures and the verification suite run on them."""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources

from .bfv_ops import assemble_E_rep, assemble_X_rep, classify_collapses, classify_collapses_bruteforce, \
    duality_mismatches, nilpotency_residual, LOCATIONS
from .formal_geom import FormalExp, r_field, taylor_pullback
from .formality import (
    ExactWeightUnavailable,
    NonPoissonWarning,
    ObstructionError,
    check_structural,
    connection_A,
    curvature_F,
    solve_gamma,
    star,
)
from .symalg import Multivector, poisson_from_config
from .weights import propagator_identity_residuals

__all__ = ["CorpusEntry", "load_corpus", "get_entry", "Check", "VerifyReport", "verify_structure",
           "verify_global_checks"]


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    description: str
    expect: str
    config: dict

    @property
    def poisson(self) -> Multivector:
        return poisson_from_config(self.config)


def load_corpus() -> dict[str, CorpusEntry]:
    out = {}
    for item in sorted(resources.files("kpsm").joinpath("corpus").iterdir(), key=lambda p: p.name):
        if not item.name.endswith(".json"):
            continue
        data = json.loads(item.read_text())
        out[data["name"]] = CorpusEntry(data["name"], data.get("description", ""),
                                        data.get("expect", "pass"), data)
    return out


def get_entry(name: str) -> CorpusEntry:
    corpus = load_corpus()
    if name not in corpus:
        raise KeyError(f"unknown corpus entry {name!r}; available: {', '.join(corpus)}")
    return corpus[name]


@dataclass
class Check:
    name: str
    identity: str
    ok: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_json(self) -> dict:
        return {"name": self.name, "identity": self.identity, "ok": self.ok,
                "seconds": round(self.seconds, 3), **self.detail}


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def first_failure(self) -> Check | None:
        return next((c for c in self.checks if not c.ok), None)

    def to_json(self) -> dict:
        fail = self.first_failure
        return {"ok": self.ok, "first_failure": None if fail is None else fail.name,
                "checks": [c.to_json() for c in self.checks]}


_IDENTITIES = {
    "deg0": "(f*g)*h - f*(g*h) = 0",
    "derivation": "D_i(f*g) = (D_i f)*g + f*(D_i g)",
    "deg1": "d_i m + A_i o m - m o A_i = 0",
    "deg2": "[D_i, D_j] = [F_ij, .]_*",
    "deg3": "D_i F_jk + D_j F_ki + D_k F_ij = 0",
    "deg4": "[F, F] = 0",
}


def _residual_check(name, res, seconds, prefix=""):
    return Check(prefix + name, _IDENTITIES.get(name, name), res.zero, res.to_json(), seconds)


def verify_structure(pi: Multivector, phi: FormalExp | None = None, order: int = 2,
                     basis_degree: int = 2) -> VerifyReport:
    """Structural suite for one bivector.

    1. associativity of the star product on plain functions;
    2. globalized data (lift along ``phi``, flat when omitted): the structural
       degrees, the twist and the nilpotency of the assembled operator;
    3. order-one duality between the two boundary representations.
    """
    report = VerifyReport()
    d = pi.dim
    phi = phi or FormalExp.flat(d)

    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonPoissonWarning)
        sp = star(pi, order)
    res = check_structural(sp, order=order, basis_degree=basis_degree, names=["deg0"]).residuals["deg0"]
    report.checks.append(_residual_check("deg0", res, time.perf_counter() - t0))

    t0 = time.perf_counter()
    try:
        r = r_field(phi)
        lifted = taylor_pullback(phi, pi)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonPoissonWarning)
            spy = star(lifted, order, wrt="y")
        A = connection_A(r, lifted, order)
        F = curvature_F(r, lifted, order)
    except ExactWeightUnavailable as exc:
        report.checks.append(Check("globalization", "A and F from graph sums", False, {"error": str(exc)}))
        return report
    structural = check_structural(spy, A, F, order=order, basis_degree=basis_degree)
    elapsed = time.perf_counter() - t0
    for name, res in structural.residuals.items():
        report.checks.append(_residual_check(name, res, elapsed, "global-"))

    t0 = time.perf_counter()
    try:
        gamma = solve_gamma(F, A, spy)
        gamma_detail = {"gamma_zero": all(g.is_zero() for g in gamma)}
        ok = True
    except ObstructionError as exc:
        gamma, gamma_detail, ok = None, {"error": str(exc)}, False
    report.checks.append(Check("twist", "F + D gamma + gamma*gamma = 0", ok, gamma_detail,
                               time.perf_counter() - t0))

    t0 = time.perf_counter()
    op = assemble_E_rep(spy, A, F, gamma)
    nil = nilpotency_residual(op)
    for name, res in nil.residuals.items():
        report.checks.append(Check(f"nilpotency-{name}", "d_x O + (1/2)[O, O] = 0, form degree "
                                   + name[-1], res.zero, res.to_json(), time.perf_counter() - t0))

    t0 = time.perf_counter()
    bad = duality_mismatches(assemble_X_rep(pi), assemble_E_rep(sp))
    report.checks.append(Check("x-e-duality", "a^{ab}_{i,j} = d_i d_j B_1^{ab}", not bad,
                               {"mismatches": bad[:5]}, time.perf_counter() - t0))
    return report


def verify_global_checks(points: int = 1000, seed: int = 0) -> VerifyReport:
    """Checks independent of the Poisson structure: kernel identities and collapse counting."""
    report = VerifyReport()
    t0 = time.perf_counter()
    res = propagator_identity_residuals(points, seed)
    tol = {"a1-chain-rule": 1e-9}
    ok = all(v <= tol.get(k, 1e-12) for k, v in res.items())
    report.checks.append(Check("propagator-identities", "kernel boundary conditions and reflections", ok,
                               {"max_deviation": res}, time.perf_counter() - t0))
    t0 = time.perf_counter()
    detail, ok = {}, True
    for loc in LOCATIONS:
        solved = {(p.k, p.r) for p in classify_collapses(loc)}
        brute = classify_collapses_bruteforce(loc)
        ok &= solved == brute
        detail[loc] = sorted(solved)
    report.checks.append(Check("collapse-classification", "2n + k - s = 2m + r with n = m + r", ok,
                               {"solutions": {k: [list(x) for x in v] for k, v in detail.items()}},
                               time.perf_counter() - t0))
    return report

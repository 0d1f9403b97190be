"""Command-line front end: ``kpsm star``, ``kpsm verify``, ``kpsm weights``.

Exit codes: 0 success, 1 a verification or consistency check failed,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .corpus import VerifyReport, get_entry, load_corpus, verify_global_checks, verify_structure
from .formal_geom import CutoffOverflow, FormalExp, load_formal_exp, taylor_pullback
from .formality import MAX_EXACT_ORDER, ExactWeightUnavailable, NonPoissonWarning, star
from .kgraph import enumerate_graphs, serialize
from .symalg import ParseError, load_poisson_config, parse_poly
from .weights import PropagatorKind, exact_weight, mc_weight, UnknownGraph

DEFAULT_CACHE = "kpsm-weights.jsonl"
MAX_SAMPLES = 10**8


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    poisson: str | None = None
    exp: str | None = None
    order: int = 2
    cutoff: int | None = None
    samples: int = 10**6
    seed: int = 0
    out: str | None = None

    def validate(self) -> None:
        if not 0 <= self.order <= MAX_EXACT_ORDER:
            raise UsageError(f"exact weights unavailable beyond order {MAX_EXACT_ORDER} (asked for {self.order})")
        if self.cutoff is not None and not 1 <= self.cutoff <= 12:
            raise UsageError("--cutoff must lie in 1..12")
        if not 10**4 <= self.samples <= MAX_SAMPLES:
            raise UsageError(f"--samples must lie in 10^4..{MAX_SAMPLES}")
        if not 0 <= self.seed < 2**64:
            raise UsageError("--seed must be a 64-bit unsigned integer")


def conventions(cfg: RunConfig) -> dict:
    return {
        "eps": "eps = -i*hbar",
        "star_product": "f*g = fg + (eps/2) Pi^{ij} d_i f d_j g + O(eps^2)",
        "grothendieck": "R_i = -(J^{-1} d_x phi)_i^k d/dy^k, D_G = d + R",
        "curvature_piece": "Omega_2 = -(F + D gamma + gamma*gamma)",
        "order": cfg.order,
        "y_cutoff": cfg.cutoff,
    }


def _envelope(cfg: RunConfig, body: dict) -> dict:
    return {"version": __version__, "command": cfg.command, "seed": cfg.seed,
            "conventions": conventions(cfg), **body}


def _emit(cfg: RunConfig, doc: dict) -> None:
    text = json.dumps(doc, indent=1, sort_keys=False) + "\n"
    if cfg.out:
        _atomic_write(Path(cfg.out), text)
    else:
        sys.stdout.write(text)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_pi(path: str):
    try:
        return load_poisson_config(path)
    except FileNotFoundError:
        raise UsageError(f"no such Poisson config: {path}") from None
    except (ParseError, KeyError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _load_exp(cfg: RunConfig, dim: int) -> FormalExp | None:
    if cfg.exp is None:
        return None
    try:
        phi = load_formal_exp(cfg.exp)
    except FileNotFoundError:
        raise UsageError(f"no such exp config: {cfg.exp}") from None
    except (ParseError, KeyError, ValueError) as exc:
        raise UsageError(f"{cfg.exp}: {exc}") from None
    if phi.dim != dim:
        raise UsageError(f"exp config has dimension {phi.dim}, Poisson config {dim}")
    if cfg.cutoff is not None:
        if not phi.is_flat and phi.y_cutoff is not None and cfg.cutoff > phi.y_cutoff:
            raise UsageError(f"--cutoff {cfg.cutoff} exceeds the stored fiber cutoff {phi.y_cutoff}")
        phi = FormalExp(phi.dim, phi.jets, cfg.cutoff)
    return phi


# star ------------------------------------------------------------------------------------

def cmd_star(cfg: RunConfig, f_text: str, g_text: str, as_json: bool) -> int:
    cfg.validate()
    if cfg.poisson is None:
        raise UsageError("star needs --poisson")
    pi = _load_pi(cfg.poisson)
    d = pi.dim
    phi = _load_exp(cfg, d)
    try:
        f, g = parse_poly(f_text, d), parse_poly(g_text, d)
    except ParseError as exc:
        raise UsageError(str(exc)) from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonPoissonWarning)
        if phi is None:
            value = star(pi, cfg.order)(f, g)
        else:
            try:
                lifted = taylor_pullback(phi, pi)
                value = star(lifted, cfg.order, wrt="y")(taylor_pullback(phi, f), taylor_pullback(phi, g))
            except CutoffOverflow as exc:
                raise UsageError(str(exc)) from None
    notes = [str(w.message) for w in caught]
    text = value.format()
    if as_json or cfg.out:
        _emit(cfg, _envelope(cfg, {"f": f_text, "g": g_text, "result": text,
                                   "coefficients": [str(c) for c in value], "warnings": notes}))
    else:
        for n in notes:
            print(f"warning: {n}", file=sys.stderr)
        print(text)
    return 0


# verify ----------------------------------------------------------------------------------

def cmd_verify(cfg: RunConfig, entry: str | None, basis_degree: int, points: int) -> int:
    cfg.validate()
    targets = []
    if cfg.poisson is not None:
        if entry is not None:
            raise UsageError("give either a corpus entry or --poisson, not both")
        pi = _load_pi(cfg.poisson)
        targets.append((cfg.poisson, pi, _load_exp(cfg, pi.dim), "pass"))
    else:
        names = list(load_corpus()) if entry in (None, "all") else [entry]
        for name in names:
            try:
                e = get_entry(name)
            except KeyError as exc:
                raise UsageError(str(exc.args[0])) from None
            targets.append((name, e.poisson, _load_exp(cfg, e.poisson.dim), e.expect))
    results = {}
    ok = True
    first = None
    for name, pi, phi, expect in targets:
        rep = verify_structure(pi, phi, cfg.order, basis_degree)
        results[name] = {"expect": expect, **rep.to_json()}
        if not rep.ok:
            ok = False
            fail = rep.first_failure
            first = first or f"{name}: {fail.name} ({fail.detail.get('first_failure') or fail.detail.get('error')})"
    global_rep: VerifyReport = verify_global_checks(points, cfg.seed)
    if not global_rep.ok:
        ok = False
        first = first or f"global: {global_rep.first_failure.name}"
    _emit(cfg, _envelope(cfg, {"ok": ok, "first_failure": first, "entries": results,
                               "global": global_rep.to_json()}))
    if not ok:
        print(f"FAIL {first}", file=sys.stderr)
    return 0 if ok else 1


# weights ---------------------------------------------------------------------------------

def cache_path(cfg: RunConfig) -> Path:
    return Path(cfg.out or os.environ.get("KPSM_CACHE") or DEFAULT_CACHE)


def _read_cache(path: Path) -> dict:
    rows = {}
    if not path.exists():
        return rows
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            key = (row["graph"], row["kind"], row["seed"], row["samples"])
        except (json.JSONDecodeError, KeyError) as exc:
            raise UsageError(f"{path}:{lineno}: malformed cache line ({exc})") from None
        rows[key] = row
    return rows


def cmd_weights(cfg: RunConfig, kind: str, sigmas: float) -> int:
    cfg.validate()
    if cfg.order < 1:
        raise UsageError("--order must be at least 1 for a weight enumeration")
    path = cache_path(cfg)
    rows = _read_cache(path)
    failures = []
    for n in range(1, cfg.order + 1):
        for cls in enumerate_graphs(n, 0, 2):
            g = cls.representative
            est = mc_weight(g, kind, cfg.samples, cfg.seed)
            try:
                exact = exact_weight(g)
            except UnknownGraph:
                exact = None
            row = {"graph": serialize(g), "exact": None if exact is None else str(exact),
                   "mean": est.mean, "stderr": est.stderr, "samples": est.samples, "seed": est.seed,
                   "kind": PropagatorKind(kind).value}
            if exact is not None and abs(float(exact) - est.mean) > sigmas * est.stderr:
                failures.append(f"{row['graph']}: exact {exact}, estimate {est.mean:.6f} +- {est.stderr:.6f}")
            rows[(row["graph"], row["kind"], row["seed"], row["samples"])] = row
    text = "".join(json.dumps(rows[k], sort_keys=True) + "\n" for k in sorted(rows, key=str))
    _atomic_write(path, text)
    print(f"wrote {len(rows)} entries to {path}")
    for f in failures:
        print(f"consistency gate: {f}", file=sys.stderr)
    return 1 if failures else 0


# entry point -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--poisson", metavar="PATH", help="Poisson config (JSON)")
    common.add_argument("--exp", metavar="PATH", help="formal exponential map config (JSON); flat when omitted")
    common.add_argument("--order", type=int, default=2, metavar="N", help="eps order (at most 2)")
    common.add_argument("--cutoff", type=int, metavar="K", help="fiber degree cutoff")
    common.add_argument("--samples", type=int, default=10**6, metavar="S")
    common.add_argument("--seed", type=int, default=0, metavar="Z")
    common.add_argument("--out", metavar="PATH", help="write the report (or the cache) here")

    ap = argparse.ArgumentParser(prog="kpsm", description="Graph expansions for the globalized Poisson sigma model.")
    ap.add_argument("--version", action="version", version=f"kpsm {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("star", parents=[common], help="print the eps-series of f * g")
    p.add_argument("f")
    p.add_argument("g")
    p.add_argument("--json", action="store_true", help="JSON report instead of the bare series")

    p = sub.add_parser("verify", parents=[common], help="run the structural suite")
    p.add_argument("entry", nargs="?", help="corpus entry name or 'all' (default: all)")
    p.add_argument("--basis-degree", type=int, default=2)
    p.add_argument("--points", type=int, default=1000, help="random points for the kernel identities")

    p = sub.add_parser("weights", parents=[common], help="Monte Carlo weights merged into a JSON-lines cache")
    p.add_argument("--kind", default="kontsevich", choices=[k.value for k in PropagatorKind])
    p.add_argument("--sigmas", type=float, default=4.0, help="consistency gate width")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else 2
    cfg = RunConfig(args.command, args.poisson, args.exp, args.order, args.cutoff, args.samples,
                    args.seed, args.out)
    try:
        if args.command == "star":
            return cmd_star(cfg, args.f, args.g, args.json)
        if args.command == "verify":
            return cmd_verify(cfg, args.entry, args.basis_degree, args.points)
        return cmd_weights(cfg, args.kind, args.sigmas)
    except (UsageError, ExactWeightUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

"""Exact polynomial algebra, multivector fields and multidifferential operators.

Polynomials live in base coordinates x^1..x^d and fiber coordinates y^1..y^d.
A monomial is stored as one exponent tuple of length 2d (x exponents first),
coefficients are :class:`fractions.Fraction`.  Fiber degree can be truncated.

Graph operators follow the usual Feynman rules: an edge from an aerial vertex
to a target differentiates the target (a decoration or an argument slot) in
the direction of the index carried by the edge.  Indices are summed over
``0..d-1`` in a fixed loop order so that results are reproducible.

Formal parameter: ``eps`` stands for ``-i*hbar``.  In this convention the
first-order star product coefficient is ``(eps/2) Pi^{ij} d_i f d_j g``.
"""

from __future__ import annotations

import ast
import itertools
import json
import math
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .kgraph import KGraph, Kind

Rational = Fraction | int

__all__ = [
    "TruncPoly",
    "Multivector",
    "MultiDiffOp",
    "FormalSeries",
    "ParseError",
    "parse_poly",
    "feynman_operator",
    "apply",
    "schouten_jacobiator",
    "series_mul",
    "series_compose_ops",
    "modified_action_parameter",
    "multi_indices",
    "poisson_from_config",
    "load_poisson_config",
]


class ParseError(ValueError):
    """Malformed polynomial text."""


def _add_keys(a: tuple, b: tuple) -> tuple:
    return tuple(p + q for p, q in zip(a, b))


def _falling(n: int, k: int) -> int:
    out = 1
    for j in range(k):
        out *= n - j
    return out


class TruncPoly:
    """Sparse exact polynomial in (x; y), truncated above ``y_cutoff``.

    ``y_cutoff=None`` keeps every fiber degree (exact polynomial arithmetic).
    """

    __slots__ = ("dim", "terms", "y_cutoff")

    def __init__(self, dim: int, terms: Mapping[tuple, Rational] | None = None,
                 y_cutoff: int | None = None):
        self.dim = dim
        self.y_cutoff = y_cutoff
        clean = {}
        if terms:
            for key, c in terms.items():
                key = tuple(key)
                if len(key) != 2 * dim:
                    raise ValueError(f"monomial {key} has wrong length for dim {dim}")
                if c and (y_cutoff is None or sum(key[dim:]) <= y_cutoff):
                    clean[key] = Fraction(c)
        self.terms = clean

    @classmethod
    def _raw(cls, dim, terms, y_cutoff):
        obj = cls.__new__(cls)
        obj.dim = dim
        obj.terms = terms
        obj.y_cutoff = y_cutoff
        return obj

    # constructors
    @classmethod
    def zero(cls, dim: int, y_cutoff: int | None = None) -> "TruncPoly":
        return cls._raw(dim, {}, y_cutoff)

    @classmethod
    def const(cls, dim: int, c: Rational, y_cutoff: int | None = None) -> "TruncPoly":
        return cls(dim, {(0,) * (2 * dim): c}, y_cutoff)

    @classmethod
    def var(cls, dim: int, name: str, index: int, y_cutoff: int | None = None) -> "TruncPoly":
        """Coordinate function; ``name`` is 'x' or 'y', ``index`` is 0-based."""
        key = [0] * (2 * dim)
        key[index + (dim if name == "y" else 0)] = 1
        return cls(dim, {tuple(key): 1}, y_cutoff)

    @classmethod
    def monomial(cls, dim: int, xexp: Sequence[int], yexp: Sequence[int] | None = None,
                 coeff: Rational = 1, y_cutoff: int | None = None) -> "TruncPoly":
        yexp = tuple(yexp) if yexp is not None else (0,) * dim
        return cls(dim, {tuple(xexp) + yexp: coeff}, y_cutoff)

    @classmethod
    def parse(cls, text: str, dim: int, y_cutoff: int | None = None) -> "TruncPoly":
        return parse_poly(text, dim, y_cutoff)

    # basic queries
    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def constant_term(self) -> Fraction:
        return self.terms.get((0,) * (2 * self.dim), Fraction(0))

    def is_constant(self) -> bool:
        zero = (0,) * (2 * self.dim)
        return all(k == zero for k in self.terms)

    def y_degree(self) -> int:
        d = self.dim
        return max((sum(k[d:]) for k in self.terms), default=-1)

    def x_degree(self) -> int:
        d = self.dim
        return max((sum(k[:d]) for k in self.terms), default=-1)

    def depends_on_y(self) -> bool:
        d = self.dim
        return any(any(k[d:]) for k in self.terms)

    def _cut(self, other: "TruncPoly") -> int | None:
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        a, b = self.y_cutoff, other.y_cutoff
        if a is None:
            return b
        if b is None:
            return a
        return min(a, b)

    def with_cutoff(self, y_cutoff: int | None) -> "TruncPoly":
        return TruncPoly(self.dim, self.terms, y_cutoff)

    def truncate_y(self, degree: int) -> "TruncPoly":
        """Drop fiber degrees above ``degree`` without changing the stored cutoff."""
        d = self.dim
        return TruncPoly._raw(d, {k: c for k, c in self.terms.items() if sum(k[d:]) <= degree},
                              self.y_cutoff)

    # arithmetic
    def _coerce(self, other) -> "TruncPoly":
        if isinstance(other, TruncPoly):
            return other
        if isinstance(other, (int, Fraction)):
            return TruncPoly.const(self.dim, other, self.y_cutoff)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        cut = self._cut(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            v = out.get(k, 0) + c
            if v:
                out[k] = v
            else:
                out.pop(k, None)
        if cut is not None and (self.y_cutoff != cut or other.y_cutoff != cut):
            d = self.dim
            out = {k: c for k, c in out.items() if sum(k[d:]) <= cut}
        return TruncPoly._raw(self.dim, out, cut)

    __radd__ = __add__

    def __neg__(self):
        return TruncPoly._raw(self.dim, {k: -c for k, c in self.terms.items()}, self.y_cutoff)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c: Rational) -> "TruncPoly":
        if not c:
            return TruncPoly._raw(self.dim, {}, self.y_cutoff)
        c = Fraction(c)
        return TruncPoly._raw(self.dim, {k: v * c for k, v in self.terms.items()}, self.y_cutoff)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, TruncPoly):
            return NotImplemented
        cut = self._cut(other)
        d = self.dim
        out: dict = {}
        if not self.terms or not other.terms:
            return TruncPoly._raw(d, out, cut)
        for ka, ca in self.terms.items():
            ya = sum(ka[d:])
            for kb, cb in other.terms.items():
                if cut is not None and ya + sum(kb[d:]) > cut:
                    continue
                k = tuple(p + q for p, q in zip(ka, kb))
                v = out.get(k, 0) + ca * cb
                if v:
                    out[k] = v
                else:
                    del out[k]
        return TruncPoly._raw(d, out, cut)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power")
        out = TruncPoly.const(self.dim, 1, self.y_cutoff)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = TruncPoly.const(self.dim, other)
        if not isinstance(other, TruncPoly):
            return NotImplemented
        return self.dim == other.dim and self.terms == other.terms

    def __hash__(self):
        return hash((self.dim, frozenset(self.terms.items())))

    # calculus
    def diff(self, index: int, wrt: str = "x", times: int = 1) -> "TruncPoly":
        """Partial derivative ``times`` times in x^index or y^index (0-based)."""
        if times == 0:
            return self
        pos = index + (self.dim if wrt == "y" else 0)
        out = {}
        for k, c in self.terms.items():
            e = k[pos]
            if e >= times:
                nk = k[:pos] + (e - times,) + k[pos + 1:]
                out[nk] = c * _falling(e, times)
        return TruncPoly._raw(self.dim, out, self.y_cutoff)

    def diff_multi(self, alpha: Sequence[int], wrt: str = "x") -> "TruncPoly":
        """Apply the multi-index derivative d^alpha (alpha has length d)."""
        off = self.dim if wrt == "y" else 0
        out = {}
        for k, c in self.terms.items():
            f = 1
            nk = list(k)
            for i, a in enumerate(alpha):
                if a:
                    e = k[off + i]
                    if e < a:
                        f = 0
                        break
                    f *= _falling(e, a)
                    nk[off + i] = e - a
            if f:
                nk = tuple(nk)
                out[nk] = out.get(nk, 0) + c * f
        return TruncPoly._raw(self.dim, {k: v for k, v in out.items() if v}, self.y_cutoff)

    def substitute(self, xs: Sequence["TruncPoly"] | None = None,
                   ys: Sequence["TruncPoly"] | None = None,
                   y_cutoff: int | None = None) -> "TruncPoly":
        """Compose: replace x^i by ``xs[i]`` and y^i by ``ys[i]`` (None keeps the variable)."""
        d = self.dim
        cut = y_cutoff if y_cutoff is not None else self.y_cutoff
        images = []
        for i in range(d):
            images.append(xs[i] if xs is not None else TruncPoly.var(d, "x", i, cut))
        for i in range(d):
            images.append(ys[i] if ys is not None else TruncPoly.var(d, "y", i, cut))
        images = [p.with_cutoff(cut) for p in images]
        powers: dict = {}

        def pw(slot, e):
            key = (slot, e)
            if key not in powers:
                powers[key] = images[slot] ** e
            return powers[key]

        out = TruncPoly.zero(d, cut)
        for k, c in self.terms.items():
            term = TruncPoly.const(d, c, cut)
            for slot, e in enumerate(k):
                if e:
                    term = term * pw(slot, e)
            out = out + term
        return out

    def evaluate(self, x: Sequence[Rational], y: Sequence[Rational] | None = None) -> Fraction:
        d = self.dim
        pt = [Fraction(v) for v in x] + [Fraction(v) for v in (y if y is not None else [0] * d)]
        total = Fraction(0)
        for k, c in self.terms.items():
            term = c
            for v, e in zip(pt, k):
                if e:
                    term *= v ** e
            total += term
        return total

    def y_coefficients(self) -> dict:
        """Split into {y-exponent: x-polynomial}."""
        d = self.dim
        out: dict = {}
        for k, c in self.terms.items():
            yk = k[d:]
            out.setdefault(yk, {})[k[:d] + (0,) * d] = c
        return {yk: TruncPoly._raw(d, t, None) for yk, t in out.items()}

    # display
    def sort_key(self, key):
        return (-sum(key), tuple(-e for e in key))

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        d = self.dim
        names = [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)]
        parts = []
        for k in sorted(self.terms, key=self.sort_key):
            c = self.terms[k]
            factors = []
            for name, e in zip(names, k):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            mono = "*".join(factors)
            mag = abs(c)
            if not mono:
                body = str(mag)
            elif mag == 1:
                body = mono
            else:
                body = f"{mag}*{mono}"
            parts.append(("-" if c < 0 else "+", body))
        text = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def __repr__(self) -> str:
        return f"TruncPoly({self}, dim={self.dim}, y_cutoff={self.y_cutoff})"


# polynomial grammar -------------------------------------------------------

def parse_poly(text: str, dim: int, y_cutoff: int | None = None) -> TruncPoly:
    """Parse ``text`` such as ``"3/2*x1^2*y3 - x2 + 1"``.

    Grammar: sums, differences and products of rational constants and the
    variables ``x1..xd``, ``y1..yd``; ``^`` or ``**`` with a nonnegative
    integer exponent; division only by nonzero constants; parentheses.
    """
    src = text.replace("^", "**").strip()
    if not src:
        raise ParseError("empty polynomial")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"cannot parse {text!r} at column {exc.offset}") from None

    def const(v):
        return TruncPoly.const(dim, v, y_cutoff)

    def walk(node) -> TruncPoly:
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
            return const(node.value)
        if isinstance(node, ast.Name):
            name = node.id
            if len(name) >= 2 and name[0] in "xy" and name[1:].isdigit():
                i = int(name[1:])
                if 1 <= i <= dim:
                    return TruncPoly.var(dim, name[0], i - 1, y_cutoff)
            raise ParseError(f"unknown variable {name!r} at column {node.col_offset} (dim={dim})")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = walk(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                exp = walk(node.right)
                if not exp.is_constant() or exp.constant_term().denominator != 1 or exp.constant_term() < 0:
                    raise ParseError(f"exponent must be a nonnegative integer (column {node.col_offset})")
                return walk(node.left) ** int(exp.constant_term())
            left, right = walk(node.left), walk(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if isinstance(node.op, ast.Div):
                if not right.is_constant() or right.is_zero():
                    raise ParseError(f"division by a non-constant or zero (column {node.col_offset})")
                return left.scale(1 / right.constant_term())
        raise ParseError(f"unsupported syntax {ast.dump(node)[:40]!r} at column {getattr(node, 'col_offset', 0)}")

    return walk(tree)


# multivector fields ---------------------------------------------------------

class Multivector:
    """Antisymmetric k-vector field; components stored for strictly increasing indices."""

    __slots__ = ("dim", "degree", "comps")

    def __init__(self, dim: int, degree: int, comps: Mapping[tuple, TruncPoly] | None = None):
        self.dim = dim
        self.degree = degree
        store: dict = {}
        for idx, p in (comps or {}).items():
            idx = tuple(idx)
            if len(idx) != degree:
                raise ValueError(f"index {idx} has wrong length for degree {degree}")
            if len(set(idx)) < degree:
                if p:
                    raise ValueError(f"diagonal component {idx} must vanish")
                continue
            sign, srt = _sort_sign(idx)
            val = p if sign > 0 else -p
            if srt in store:
                val = store[srt] + val
            if val:
                store[srt] = val
            else:
                store.pop(srt, None)
        self.comps = store

    def component(self, idx: Sequence[int]) -> TruncPoly | None:
        """Signed component for any index order, or None when it vanishes."""
        idx = tuple(idx)
        if len(set(idx)) < len(idx):
            return None
        sign, srt = _sort_sign(idx)
        p = self.comps.get(srt)
        if p is None:
            return None
        return p if sign > 0 else -p

    def is_zero(self) -> bool:
        return not self.comps

    def map(self, fn: Callable[[TruncPoly], TruncPoly]) -> "Multivector":
        return Multivector(self.dim, self.degree, {k: fn(v) for k, v in self.comps.items()})

    def scale(self, c: Rational) -> "Multivector":
        return self.map(lambda p: p.scale(c))

    def __add__(self, other: "Multivector") -> "Multivector":
        comps = dict(self.comps)
        for k, v in other.comps.items():
            comps[k] = comps[k] + v if k in comps else v
        return Multivector(self.dim, self.degree, comps)

    def __eq__(self, other):
        return (isinstance(other, Multivector) and self.dim == other.dim
                and self.degree == other.degree and self.comps == other.comps)

    def y_cutoff(self) -> int | None:
        for p in self.comps.values():
            return p.y_cutoff
        return None

    def depends_on_y(self) -> bool:
        return any(p.depends_on_y() for p in self.comps.values())

    @classmethod
    def bivector(cls, dim: int, entries: Mapping[tuple[int, int], TruncPoly | str | Rational],
                 y_cutoff: int | None = None) -> "Multivector":
        """Build a bivector from 0-based (i, j) entries; strings are parsed."""
        comps = {}
        for (i, j), v in entries.items():
            if isinstance(v, str):
                v = parse_poly(v, dim, y_cutoff)
            elif not isinstance(v, TruncPoly):
                v = TruncPoly.const(dim, v, y_cutoff)
            comps[(i, j)] = v
        return cls(dim, 2, comps)

    @classmethod
    def vector(cls, dim: int, entries: Sequence[TruncPoly]) -> "Multivector":
        return cls(dim, 1, {(i,): p for i, p in enumerate(entries)})

    def __repr__(self):
        inner = ", ".join(f"{tuple(i + 1 for i in k)}: {v}" for k, v in sorted(self.comps.items()))
        return f"Multivector(deg={self.degree}, {{{inner}}})"


def _sort_sign(idx: tuple) -> tuple[int, tuple]:
    arr = list(idx)
    sign = 1
    for i in range(len(arr)):
        for j in range(len(arr) - 1 - i):
            if arr[j] > arr[j + 1]:
                arr[j], arr[j + 1] = arr[j + 1], arr[j]
                sign = -sign
    return sign, tuple(arr)


# multidifferential operators -------------------------------------------------

def multi_indices(dim: int, max_order: int) -> list[tuple]:
    """All multi-indices of length ``dim`` and total order <= ``max_order``."""
    out = []
    for total in range(max_order + 1):
        for combo in itertools.combinations_with_replacement(range(dim), total):
            alpha = [0] * dim
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    return out


@lru_cache(maxsize=None)
def _splits(alpha: tuple, parts: int) -> tuple:
    """Leibniz distributions of d^alpha over ``parts`` factors with multinomial weights."""
    per_coord = []
    for a in alpha:
        opts = []
        for comp in _compositions(a, parts):
            w = math.factorial(a)
            for c in comp:
                w //= math.factorial(c)
            opts.append((comp, w))
        per_coord.append(opts)
    out = []
    for choice in itertools.product(*per_coord):
        weight = 1
        for _, w in choice:
            weight *= w
        split = tuple(tuple(choice[i][0][p] for i in range(len(alpha))) for p in range(parts))
        out.append((split, weight))
    return tuple(out)


def _compositions(n: int, parts: int):
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


class MultiDiffOp:
    """Finite sum of ``coeff * d^{I_1} f_1 ... d^{I_l} f_l``.

    ``wrt`` selects which coordinates the slot derivatives act on ('x' for
    plain functions on R^d, 'y' for fiberwise functions in formal geometry).
    """

    __slots__ = ("dim", "arity", "wrt", "terms")

    def __init__(self, dim: int, arity: int, terms: Mapping[tuple, TruncPoly] | None = None,
                 wrt: str = "x"):
        self.dim = dim
        self.arity = arity
        self.wrt = wrt
        clean = {}
        for slots, c in (terms or {}).items():
            slots = tuple(tuple(s) for s in slots)
            if len(slots) != arity:
                raise ValueError(f"term has {len(slots)} slots, operator arity is {arity}")
            if c:
                clean[slots] = clean[slots] + c if slots in clean else c
                if not clean[slots]:
                    del clean[slots]
        self.terms = clean

    @classmethod
    def _raw(cls, dim, arity, terms, wrt):
        obj = cls.__new__(cls)
        obj.dim, obj.arity, obj.terms, obj.wrt = dim, arity, terms, wrt
        return obj

    @classmethod
    def zero(cls, dim: int, arity: int, wrt: str = "x") -> "MultiDiffOp":
        return cls._raw(dim, arity, {}, wrt)

    @classmethod
    def product(cls, dim: int, arity: int = 2, wrt: str = "x", y_cutoff: int | None = None) -> "MultiDiffOp":
        """Pointwise multiplication of ``arity`` arguments."""
        z = (0,) * dim
        return cls(dim, arity, {(z,) * arity: TruncPoly.const(dim, 1, y_cutoff)}, wrt)

    @classmethod
    def identity(cls, dim: int, wrt: str = "x", y_cutoff: int | None = None) -> "MultiDiffOp":
        return cls.product(dim, 1, wrt, y_cutoff)

    @classmethod
    def constant(cls, poly: TruncPoly, wrt: str = "x") -> "MultiDiffOp":
        """Arity-0 operator (a function)."""
        return cls(poly.dim, 0, {(): poly}, wrt)

    @classmethod
    def vector_field(cls, field: Multivector, wrt: str = "x") -> "MultiDiffOp":
        """First-order operator xi^k d_k."""
        terms = {}
        for (k,), p in field.comps.items():
            alpha = [0] * field.dim
            alpha[k] = 1
            terms[(tuple(alpha),)] = p
        return cls(field.dim, 1, terms, wrt)

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def _check(self, other: "MultiDiffOp"):
        if self.arity != other.arity or self.dim != other.dim:
            raise ValueError("operator shape mismatch")
        if self.wrt != other.wrt and self.terms and other.terms:
            raise ValueError("operators differentiate different coordinates")

    def __add__(self, other: "MultiDiffOp") -> "MultiDiffOp":
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            if k in out:
                v = out[k] + c
                if v:
                    out[k] = v
                else:
                    del out[k]
            else:
                out[k] = c
        wrt = self.wrt if self.terms else other.wrt
        return MultiDiffOp._raw(self.dim, self.arity, out, wrt)

    def __neg__(self):
        return MultiDiffOp._raw(self.dim, self.arity, {k: -c for k, c in self.terms.items()}, self.wrt)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "MultiDiffOp":
        """Multiply by a rational or (on the left) by a coefficient polynomial."""
        if isinstance(c, TruncPoly):
            out = {}
            for k, v in self.terms.items():
                p = c * v
                if p:
                    out[k] = p
            return MultiDiffOp._raw(self.dim, self.arity, out, self.wrt)
        if not c:
            return MultiDiffOp._raw(self.dim, self.arity, {}, self.wrt)
        return MultiDiffOp._raw(self.dim, self.arity, {k: v.scale(c) for k, v in self.terms.items()}, self.wrt)

    def __eq__(self, other):
        if not isinstance(other, MultiDiffOp):
            return NotImplemented
        return self.dim == other.dim and self.arity == other.arity and self.terms == other.terms

    def map_coefficients(self, fn: Callable[[TruncPoly], TruncPoly]) -> "MultiDiffOp":
        out = {}
        for k, v in self.terms.items():
            p = fn(v)
            if p:
                out[k] = p
        return MultiDiffOp._raw(self.dim, self.arity, out, self.wrt)

    def dx(self, index: int) -> "MultiDiffOp":
        """Differentiate every coefficient in the base direction x^index."""
        return self.map_coefficients(lambda p: p.diff(index, "x"))

    def max_order(self) -> int:
        return max((sum(sum(s) for s in k) for k in self.terms), default=0)

    def apply(self, args: Sequence[TruncPoly]) -> TruncPoly:
        return apply(self, args)

    def compose(self, other: "MultiDiffOp", slot: int) -> "MultiDiffOp":
        """Insert ``other`` into argument ``slot`` (0-based) of ``self``."""
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        if self.terms and other.terms and self.wrt != other.wrt:
            raise ValueError("operators differentiate different coordinates")
        if not 0 <= slot < self.arity:
            raise ValueError(f"slot {slot} out of range for arity {self.arity}")
        r = other.arity
        arity = self.arity + r - 1
        wrt = self.wrt if self.terms else other.wrt
        out: dict = {}
        deriv_cache: dict = {}
        for slots, c in self.terms.items():
            head, alpha, tail = slots[:slot], slots[slot], slots[slot + 1:]
            for split, weight in _splits(alpha, r + 1):
                on_coeff, on_args = split[0], split[1:]
                for oslots, oc in other.terms.items():
                    key = (oslots, on_coeff)
                    if key not in deriv_cache:
                        deriv_cache[key] = oc.diff_multi(on_coeff, wrt)
                    dc = deriv_cache[key]
                    if not dc:
                        continue
                    coeff = (c * dc).scale(weight)
                    if not coeff:
                        continue
                    mid = tuple(_add_keys(a, b) for a, b in zip(on_args, oslots))
                    k = head + mid + tail
                    if k in out:
                        v = out[k] + coeff
                        if v:
                            out[k] = v
                        else:
                            del out[k]
                    else:
                        out[k] = coeff
        return MultiDiffOp._raw(self.dim, arity, out, wrt)

    def permute_slots(self, perm: Sequence[int]) -> "MultiDiffOp":
        """New operator G with G(f_0, ..., f_{l-1}) = self(f_{perm[0]}, ..., f_{perm[l-1]})."""
        out = {}
        inv = [0] * self.arity
        for pos, src in enumerate(perm):
            inv[src] = pos
        for slots, c in self.terms.items():
            k = tuple(slots[inv[j]] for j in range(self.arity))
            out[k] = out[k] + c if k in out else c
        return MultiDiffOp(self.dim, self.arity, out, self.wrt)

    def __repr__(self):
        return f"MultiDiffOp(arity={self.arity}, wrt={self.wrt}, terms={len(self.terms)})"


def apply(op: MultiDiffOp, args: Sequence[TruncPoly]) -> TruncPoly:
    """Evaluate ``op`` on polynomial arguments."""
    if len(args) != op.arity:
        raise ValueError(f"arity mismatch: operator takes {op.arity}, got {len(args)}")
    cut = None
    for p in args:
        if p.y_cutoff is not None:
            cut = p.y_cutoff if cut is None else min(cut, p.y_cutoff)
    dim = op.dim
    total = TruncPoly.zero(dim, cut)
    if any(p.is_zero() for p in args):
        return total
    cache: list[dict] = [dict() for _ in args]
    for slots, c in op.terms.items():
        term = c
        for j, alpha in enumerate(slots):
            if alpha not in cache[j]:
                cache[j][alpha] = args[j].diff_multi(alpha, op.wrt)
            term = term * cache[j][alpha]
            if not term:
                break
        if term:
            total = total + term
    return total


# Feynman rules ----------------------------------------------------------------

def feynman_operator(g: KGraph, decorations: Sequence, wrt: str = "y") -> MultiDiffOp:
    """Multidifferential operator of the graph ``g``.

    ``decorations[v]`` belongs to aerial vertex v: a bivector for a Pi vertex,
    a vector field for an R vertex, a polynomial for an omega vertex.  Every
    ground vertex becomes an argument slot.  The edge (v, slot s) carries a
    summation index a; it selects the s-th tensor index of v's decoration and
    differentiates its target by d/d(wrt)^a.
    """
    if len(decorations) != len(g.aerial):
        raise ValueError("one decoration per aerial vertex is required")
    dim = None
    for kind, dec in zip(g.aerial, decorations):
        want = kind.out_valence
        if kind is Kind.OMEGA:
            if not isinstance(dec, TruncPoly):
                raise ValueError("omega vertices are decorated by polynomials")
            d = dec.dim
        else:
            if not isinstance(dec, Multivector) or dec.degree != want:
                got = getattr(dec, "degree", type(dec).__name__)
                raise ValueError(f"decoration degree {got} does not match out-valence {want} of {kind.name}")
            d = dec.dim
        if dim is None:
            dim = d
        elif d != dim:
            raise ValueError("decorations disagree on dimension")
    if dim is None:
        raise ValueError("a graph without aerial vertices needs an explicit dimension; use MultiDiffOp.product")
    ng = g.n_ground
    edges = [(v, t) for v, targets in enumerate(g.edges) for t in targets]
    # incoming edge positions per vertex (global numbering: ground first)
    incoming: list[list[int]] = [[] for _ in range(ng + len(g.aerial))]
    for e, (_, t) in enumerate(edges):
        incoming[t].append(e)
    out_pos: list[list[int]] = []
    e = 0
    for targets in g.edges:
        out_pos.append(list(range(e, e + len(targets))))
        e += len(targets)
    cut = None
    for dec in decorations:
        c = dec.y_cutoff if isinstance(dec, TruncPoly) else dec.y_cutoff()
        if c is not None:
            cut = c if cut is None else min(cut, c)
    deriv_cache: dict = {}
    terms: dict = {}
    for assign in itertools.product(range(dim), repeat=len(edges)):
        factors = []
        for v, dec in enumerate(decorations):
            idx = tuple(assign[p] for p in out_pos[v])
            alpha = [0] * dim
            for p in incoming[ng + v]:
                alpha[assign[p]] += 1
            key = (v, idx, tuple(alpha))
            factor = deriv_cache.get(key, False)
            if factor is False:
                base = dec if isinstance(dec, TruncPoly) else dec.component(idx)
                factor = None if base is None else base.diff_multi(key[2], wrt)
                deriv_cache[key] = factor = factor if factor else None
            if factor is None:
                break
            factors.append(factor)
        if len(factors) != len(decorations):
            continue
        coeff = factors[0].with_cutoff(cut) if factors[0].y_cutoff != cut else factors[0]
        for factor in factors[1:]:
            coeff = coeff * factor
            if not coeff:
                break
        if not coeff:
            continue
        slots = []
        for s in range(ng):
            alpha = [0] * dim
            for p in incoming[s]:
                alpha[assign[p]] += 1
            slots.append(tuple(alpha))
        slots = tuple(slots) if ng else ()
        if slots in terms:
            val = terms[slots] + coeff
            if val:
                terms[slots] = val
            else:
                del terms[slots]
        else:
            terms[slots] = coeff
    return MultiDiffOp._raw(dim, ng, terms, wrt)


def schouten_jacobiator(pi: Multivector, wrt: str = "x") -> Multivector:
    """J^{ijk} = Pi^{li} d_l Pi^{jk} + cyclic(i, j, k)."""
    d = pi.dim
    comps = {}
    cut = pi.y_cutoff()
    for i, j, k in itertools.combinations(range(d), 3):
        total = TruncPoly.zero(d, cut)
        for a, b, c in ((i, j, k), (j, k, i), (k, i, j)):
            for l in range(d):
                p = pi.component((l, a))
                q = pi.component((b, c))
                if p is None or q is None:
                    continue
                total = total + p * q.diff(l, wrt)
        if total:
            comps[(i, j, k)] = total
    return Multivector(d, 3, comps)


# formal series ------------------------------------------------------------------

class FormalSeries:
    """c_0 + c_1 eps + ... + c_N eps^N with a uniform payload type."""

    __slots__ = ("order", "coeffs")

    def __init__(self, coeffs: Iterable, order: int | None = None):
        coeffs = list(coeffs)
        if order is None:
            order = len(coeffs) - 1
        if len(coeffs) != order + 1:
            raise ValueError(f"expected {order + 1} coefficients, got {len(coeffs)}")
        self.order = order
        self.coeffs = tuple(coeffs)

    def __getitem__(self, k: int):
        return self.coeffs[k]

    def __iter__(self):
        return iter(self.coeffs)

    def __len__(self):
        return len(self.coeffs)

    def _check(self, other: "FormalSeries"):
        if self.order != other.order:
            raise ValueError(f"cutoff mismatch: N={self.order} vs N={other.order}")

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        self._check(other)
        return FormalSeries([a + b for a, b in zip(self.coeffs, other.coeffs)], self.order)

    def __sub__(self, other: "FormalSeries") -> "FormalSeries":
        self._check(other)
        return FormalSeries([a - b for a, b in zip(self.coeffs, other.coeffs)], self.order)

    def __neg__(self):
        return FormalSeries([-a for a in self.coeffs], self.order)

    def map(self, fn) -> "FormalSeries":
        return FormalSeries([fn(c) for c in self.coeffs], self.order)

    def scale(self, c) -> "FormalSeries":
        return self.map(lambda p: p.scale(c))

    def shift(self, k: int = 1) -> "FormalSeries":
        """Multiply by eps^k (dropping what exceeds the cutoff)."""
        zero = _zero_like(self.coeffs[0])
        return FormalSeries([zero] * k + list(self.coeffs[: self.order + 1 - k]), self.order)

    def is_zero(self) -> bool:
        return all(_is_zero(c) for c in self.coeffs)

    def truncate(self, order: int) -> "FormalSeries":
        if order > self.order:
            raise ValueError("cannot extend a series beyond its cutoff")
        return FormalSeries(self.coeffs[: order + 1], order)

    def __eq__(self, other):
        return isinstance(other, FormalSeries) and self.order == other.order and all(
            a == b for a, b in zip(self.coeffs, other.coeffs))

    def __repr__(self):
        return f"FormalSeries(N={self.order}, {list(self.coeffs)!r})"

    def format(self, symbol: str = "ε") -> str:
        """Readable eps-series of polynomials, e.g. ``x1*x2 + (1/2) ε``."""
        pieces = []
        for k, c in enumerate(self.coeffs):
            if _is_zero(c):
                continue
            power = "" if k == 0 else (symbol if k == 1 else f"{symbol}^{k}")
            text = str(c)
            neg = False
            if k > 0 and isinstance(c, TruncPoly) and c.is_constant():
                val = c.constant_term()
                neg = val < 0
                mag = abs(val)
                body = power if mag == 1 else f"({mag}) {power}"
            elif k > 0:
                body = f"({text}) {power}"
            else:
                body = text
                if body.startswith("-"):
                    neg, body = True, body[1:]
            pieces.append((neg, body))
        if not pieces:
            return "0"
        out = ("-" if pieces[0][0] else "") + pieces[0][1]
        for neg, body in pieces[1:]:
            out += (" - " if neg else " + ") + body
        return out


def _is_zero(c) -> bool:
    if hasattr(c, "is_zero"):
        return c.is_zero()
    return not c


def _zero_like(c):
    if isinstance(c, TruncPoly):
        return TruncPoly.zero(c.dim, c.y_cutoff)
    if isinstance(c, MultiDiffOp):
        return MultiDiffOp.zero(c.dim, c.arity, c.wrt)
    if isinstance(c, Multivector):
        return Multivector(c.dim, c.degree, {})
    return type(c)(0)


def series_mul(a: FormalSeries, b: FormalSeries, mul=None) -> FormalSeries:
    """Cauchy product truncated at the common cutoff."""
    a._check(b)
    mul = mul or (lambda p, q: p * q)
    out = []
    for k in range(a.order + 1):
        acc = None
        for j in range(k + 1):
            term = mul(a.coeffs[j], b.coeffs[k - j])
            acc = term if acc is None else acc + term
        out.append(acc)
    return FormalSeries(out, a.order)


def series_compose_ops(a: FormalSeries, b: FormalSeries, slot: int) -> FormalSeries:
    """Series of operators: insert ``b`` into ``slot`` of ``a`` order by order."""
    return series_mul(a, b, mul=lambda p, q: p.compose(q, slot))


def modified_action_parameter(eps_value=Fraction(1)):
    """Rescaling between the library parameter eps = -i*hbar and the
    modified-action parameter (-i*hbar)/2: returns the latter for a given eps."""
    return Fraction(eps_value) / 2


# configuration files ------------------------------------------------------------

def poisson_from_config(data: Mapping) -> Multivector:
    """Bivector from ``{"dim": d, "components": [{"i": 1, "j": 2, "poly": "x3"}, ...]}``.

    Indices are 1-based; each listed (i, j) sets Pi^{ij} and Pi^{ji} = -Pi^{ij}.
    An empty component list is the zero bivector.
    """
    try:
        dim = int(data["dim"])
        comps = data.get("components", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed Poisson config: {exc}") from None
    if dim < 1:
        raise ParseError("dim must be positive")
    entries = {}
    for row in comps:
        try:
            i, j, text = int(row["i"]) - 1, int(row["j"]) - 1, str(row["poly"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed component {row!r}: missing or bad {exc}") from None
        if not (0 <= i < dim and 0 <= j < dim) or i == j:
            raise ParseError(f"component ({i + 1},{j + 1}) is out of range or diagonal")
        key = (i, j) if i < j else (j, i)
        poly = parse_poly(text, dim)
        if key in entries:
            raise ParseError(f"component ({key[0] + 1},{key[1] + 1}) given twice")
        entries[key] = poly if i < j else -poly
    return Multivector.bivector(dim, entries)


def load_poisson_config(path) -> Multivector:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return poisson_from_config(data)

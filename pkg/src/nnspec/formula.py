"""Affine terms, linear atoms and boolean formula trees over exact rationals.

Variables are identified by keys:

* ``("x", name)`` — a scalar input variable of a goal;
* ``("y", app_id, component)`` — one output component of a model application.

Every coefficient and constant is a `fractions.Fraction`; evaluation is exact.
All types here are immutable and freely shareable.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

__all__ = [
    "Key",
    "Affine",
    "LinearAtom",
    "Formula",
    "TRUE",
    "FALSE",
    "FAtom",
    "FAnd",
    "FOr",
    "FNot",
    "FImplies",
    "conj",
    "disj",
    "implies",
    "negate",
    "nnf",
    "dnf",
    "eval_formula",
    "atoms_of",
    "keys_of",
]

Key = tuple

_ZERO = Fraction(0)

_FLIP = {"<=": ">", "<": ">=", ">=": "<", ">": "<=", "=": "!="}
_SWAP = {"<=": ">=", "<": ">", ">=": "<=", ">": "<", "=": "="}
COMPARATORS = ("<=", "<", ">=", ">", "=")


@dataclass(frozen=True)
class Affine:
    """Rational affine combination: sum of coeff*var plus a constant."""

    coeffs: tuple[tuple[Key, Fraction], ...]
    const: Fraction

    @staticmethod
    def make(coeffs: Mapping[Key, Fraction] | Iterable = (), const=0) -> "Affine":
        items = dict(coeffs)
        cleaned = tuple(
            sorted((k, Fraction(v)) for k, v in items.items() if v != 0)
        )
        return Affine(cleaned, Fraction(const))

    @staticmethod
    def constant(value) -> "Affine":
        return Affine((), Fraction(value))

    @staticmethod
    def var(key: Key, coeff=1) -> "Affine":
        coeff = Fraction(coeff)
        if coeff == 0:
            return Affine((), _ZERO)
        return Affine(((key, coeff),), _ZERO)

    def coeff_map(self) -> dict[Key, Fraction]:
        return dict(self.coeffs)

    def is_constant(self) -> bool:
        return not self.coeffs

    def keys(self) -> set[Key]:
        return {k for k, _ in self.coeffs}

    def __add__(self, other: "Affine") -> "Affine":
        merged = self.coeff_map()
        for key, value in other.coeffs:
            merged[key] = merged.get(key, _ZERO) + value
        return Affine.make(merged, self.const + other.const)

    def __sub__(self, other: "Affine") -> "Affine":
        merged = self.coeff_map()
        for key, value in other.coeffs:
            merged[key] = merged.get(key, _ZERO) - value
        return Affine.make(merged, self.const - other.const)

    def __neg__(self) -> "Affine":
        return self.scale(-1)

    def scale(self, factor) -> "Affine":
        factor = Fraction(factor)
        return Affine.make(
            {k: v * factor for k, v in self.coeffs}, self.const * factor
        )

    def substitute(self, mapping: Mapping[Key, "Affine"]) -> "Affine":
        out = Affine.constant(self.const)
        for key, coeff in self.coeffs:
            repl = mapping.get(key)
            if repl is None:
                out = out + Affine.var(key, coeff)
            else:
                out = out + repl.scale(coeff)
        return out

    def eval(self, valuation: Mapping[Key, Fraction]) -> Fraction:
        total = self.const
        for key, coeff in self.coeffs:
            total += coeff * valuation[key]
        return total

    def __str__(self):
        parts = []
        for key, coeff in self.coeffs:
            name = key[1] if key[0] == "x" else f"Y{key[1]}_{key[2]}"
            parts.append(f"{coeff}*{name}" if coeff != 1 else name)
        if self.const != 0 or not parts:
            parts.append(str(self.const))
        return " + ".join(parts)


@dataclass(frozen=True)
class LinearAtom:
    """Comparison between two affine sides; `cmp` is one of <= < >= > =."""

    cmp: str
    lhs: Affine
    rhs: Affine

    def __post_init__(self):
        if self.cmp not in COMPARATORS:
            raise ValueError(f"bad comparator {self.cmp!r}")

    def diff(self) -> Affine:
        """lhs - rhs, the canonical `diff cmp 0` form."""
        return self.lhs - self.rhs

    def keys(self) -> set[Key]:
        return self.lhs.keys() | self.rhs.keys()

    def eval(self, valuation: Mapping[Key, Fraction]) -> bool:
        d = self.diff().eval(valuation)
        if self.cmp == "<=":
            return d <= 0
        if self.cmp == "<":
            return d < 0
        if self.cmp == ">=":
            return d >= 0
        if self.cmp == ">":
            return d > 0
        return d == 0

    def swap(self) -> "LinearAtom":
        return LinearAtom(_SWAP[self.cmp], self.rhs, self.lhs)

    def substitute(self, mapping: Mapping[Key, Affine]) -> "LinearAtom":
        return LinearAtom(
            self.cmp, self.lhs.substitute(mapping), self.rhs.substitute(mapping)
        )

    def normalized(self) -> tuple:
        """Scale-invariant fingerprint of the constraint (for set comparison)."""
        d = self.diff()
        cmp = self.cmp
        if cmp in (">=", ">"):
            d = -d
            cmp = "<=" if cmp == ">=" else "<"
        scale = None
        for _, coeff in d.coeffs:
            scale = abs(coeff)
            break
        if scale is None:
            scale = abs(d.const) if d.const != 0 else Fraction(1)
        if cmp == "=" and d.coeffs and d.coeffs[0][1] < 0:
            d = -d
        d = d.scale(Fraction(1) / scale)
        return (cmp, d.coeffs, d.const)

    def __str__(self):
        return f"{self.lhs} {self.cmp} {self.rhs}"


class Formula:
    """Base class for boolean structure over linear atoms."""

    __slots__ = ()


@dataclass(frozen=True)
class _FBool(Formula):
    value: bool


TRUE = _FBool(True)
FALSE = _FBool(False)


@dataclass(frozen=True)
class FAtom(Formula):
    atom: LinearAtom


@dataclass(frozen=True)
class FAnd(Formula):
    items: tuple[Formula, ...]


@dataclass(frozen=True)
class FOr(Formula):
    items: tuple[Formula, ...]


@dataclass(frozen=True)
class FNot(Formula):
    inner: Formula


@dataclass(frozen=True)
class FImplies(Formula):
    lhs: Formula
    rhs: Formula


def conj(items: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for item in items:
        if isinstance(item, _FBool):
            if item.value:
                continue
            return FALSE
        if isinstance(item, FAnd):
            flat.extend(item.items)
        else:
            flat.append(item)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return FAnd(tuple(flat))


def disj(items: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for item in items:
        if isinstance(item, _FBool):
            if not item.value:
                continue
            return TRUE
        if isinstance(item, FOr):
            flat.extend(item.items)
        else:
            flat.append(item)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return FOr(tuple(flat))


def implies(lhs: Formula, rhs: Formula) -> Formula:
    if isinstance(lhs, _FBool):
        return rhs if lhs.value else TRUE
    if isinstance(rhs, _FBool) and rhs.value:
        return TRUE
    return FImplies(lhs, rhs)


def negate(f: Formula) -> Formula:
    return nnf(f, positive=False)


def _negate_atom(atom: LinearAtom) -> Formula:
    flipped = _FLIP[atom.cmp]
    if flipped == "!=":
        return disj([
            FAtom(LinearAtom("<", atom.lhs, atom.rhs)),
            FAtom(LinearAtom(">", atom.lhs, atom.rhs)),
        ])
    return FAtom(LinearAtom(flipped, atom.lhs, atom.rhs))


def nnf(f: Formula, positive: bool = True) -> Formula:
    """Negation normal form (`positive=False` negates the formula)."""
    if isinstance(f, _FBool):
        return f if positive else (FALSE if f.value else TRUE)
    if isinstance(f, FAtom):
        return f if positive else _negate_atom(f.atom)
    if isinstance(f, FNot):
        return nnf(f.inner, not positive)
    if isinstance(f, FImplies):
        if positive:
            return disj([nnf(f.lhs, False), nnf(f.rhs, True)])
        return conj([nnf(f.lhs, True), nnf(f.rhs, False)])
    if isinstance(f, FAnd):
        items = [nnf(i, positive) for i in f.items]
        return conj(items) if positive else disj(items)
    if isinstance(f, FOr):
        items = [nnf(i, positive) for i in f.items]
        return disj(items) if positive else conj(items)
    raise TypeError(f"not a formula: {f!r}")


def dnf(f: Formula) -> list[list[LinearAtom]] | bool:
    """Disjunctive normal form as a list of conjunctions of atoms.

    Returns True/False for constant formulas.
    """
    g = nnf(f)
    if isinstance(g, _FBool):
        return g.value

    def walk(node: Formula) -> list[list[LinearAtom]]:
        if isinstance(node, FAtom):
            return [[node.atom]]
        if isinstance(node, FOr):
            out = []
            for item in node.items:
                out.extend(walk(item))
            return out
        if isinstance(node, FAnd):
            product: list[list[LinearAtom]] = [[]]
            for item in node.items:
                branches = walk(item)
                product = [p + b for p in product for b in branches]
            return product
        raise TypeError(f"unexpected node in NNF: {node!r}")

    return walk(g)


def const_value(f: Formula) -> bool | None:
    """The boolean value of a constant formula, else None."""
    return f.value if isinstance(f, _FBool) else None


def eval_formula(f: Formula, valuation: Mapping[Key, Fraction]) -> bool:
    if isinstance(f, _FBool):
        return f.value
    if isinstance(f, FAtom):
        return f.atom.eval(valuation)
    if isinstance(f, FNot):
        return not eval_formula(f.inner, valuation)
    if isinstance(f, FAnd):
        return all(eval_formula(i, valuation) for i in f.items)
    if isinstance(f, FOr):
        return any(eval_formula(i, valuation) for i in f.items)
    if isinstance(f, FImplies):
        return (not eval_formula(f.lhs, valuation)) or eval_formula(f.rhs, valuation)
    raise TypeError(f"not a formula: {f!r}")


def atoms_of(f: Formula) -> list[LinearAtom]:
    out: list[LinearAtom] = []

    def walk(node: Formula):
        if isinstance(node, FAtom):
            out.append(node.atom)
        elif isinstance(node, FAnd) or isinstance(node, FOr):
            for item in node.items:
                walk(item)
        elif isinstance(node, FNot):
            walk(node.inner)
        elif isinstance(node, FImplies):
            walk(node.lhs)
            walk(node.rhs)

    walk(f)
    return out


def keys_of(f: Formula) -> set[Key]:
    keys: set[Key] = set()
    for atom in atoms_of(f):
        keys |= atom.keys()
    return keys


def map_atoms(f: Formula, fn) -> Formula:
    """Rebuild the formula with `fn` applied to every atom."""
    if isinstance(f, _FBool):
        return f
    if isinstance(f, FAtom):
        return FAtom(fn(f.atom))
    if isinstance(f, FNot):
        return FNot(map_atoms(f.inner, fn))
    if isinstance(f, FAnd):
        return conj([map_atoms(i, fn) for i in f.items])
    if isinstance(f, FOr):
        return disj([map_atoms(i, fn) for i in f.items])
    if isinstance(f, FImplies):
        return implies(map_atoms(f.lhs, fn), map_atoms(f.rhs, fn))
    raise TypeError(f"not a formula: {f!r}")

"""One-vs-one SVM classifiers: JSON loading, reference decision, NIR compilation.

The JSON schema follows scikit-learn's OVO parameter layout::

    {"n_classes": int,
     "kernel": {"type": "linear"|"poly"|"rbf",
                "gamma": num?, "coef0": num?, "degree": int?},
     "support_vectors": [[num, ...], ...],      # sum(n_support) rows, d columns
     "n_support": [int, ...],                   # one count per class
     "dual_coef": [[num, ...], ...],            # n_classes-1 rows
     "intercept": [num, ...]}                   # one per class pair

Numbers may be given as decimal strings for exactness.  Class pairs are
ordered (0,1), (0,2), ..., (m-2,m-1).  For pair (a, b) the decision value is

    intercept + sum over a's support vectors of coef * f(x (.) s)
              - sum over b's support vectors of coef * f(x (.) s)

with the coefficients for class a's vectors taken from dual_coef row b-1 and
those for class b's vectors from row a.  Positive values vote for a, negative
for b, an exact zero votes for neither.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .nir import Graph, GraphBuilder, Tensor
from .rational import mpf_to_fraction

__all__ = [
    "SvmError",
    "SchemaError",
    "InconsistentCounts",
    "DimensionMismatch",
    "Kernel",
    "SvmModel",
    "load_svm",
    "svm_from_dict",
    "pair_values",
    "decision",
    "svm_to_nir",
    "class_pairs",
]

# High-precision real context for the RBF reference path.
_MP = mpmath.mp.clone()
_MP.prec = 160


class SvmError(Exception):
    pass


class SchemaError(SvmError):
    def __init__(self, field: str, detail: str = ""):
        message = f"invalid or missing field {field!r}"
        if detail:
            message += f": {detail}"
        super().__init__(message)
        self.field = field


class InconsistentCounts(SvmError):
    pass


class DimensionMismatch(SvmError):
    pass


@dataclass(frozen=True)
class Kernel:
    kind: str  # "linear" | "poly" | "rbf"
    gamma: Fraction = Fraction(1)
    coef0: Fraction = Fraction(0)
    degree: int = 1


@dataclass(frozen=True)
class SvmModel:
    n_classes: int
    feature_dim: int
    support_vectors: tuple[tuple[Fraction, ...], ...]  # grouped by class
    n_support: tuple[int, ...]
    dual_coef: tuple[tuple[Fraction, ...], ...]  # (n_classes-1) x total SVs
    intercept: tuple[Fraction, ...]  # one per pair
    kernel: Kernel

    @property
    def n_pairs(self) -> int:
        return self.n_classes * (self.n_classes - 1) // 2

    def class_slice(self, cls: int) -> tuple[int, int]:
        start = sum(self.n_support[:cls])
        return start, start + self.n_support[cls]


def class_pairs(m: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(m) for b in range(a + 1, m)]


def _num(value, field: str) -> Fraction:
    try:
        if isinstance(value, bool):
            raise TypeError
        if isinstance(value, (int, str)):
            return Fraction(str(value))
        if isinstance(value, float):
            return Fraction(value)
    except (TypeError, ValueError):
        pass
    raise SchemaError(field, f"not a number: {value!r}")


def load_svm(path: str) -> SvmModel:
    """Load and validate an SVM model file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaError("<file>", f"invalid JSON: {e}") from None
    return svm_from_dict(raw)


def svm_from_dict(raw: dict) -> SvmModel:
    for field in ("n_classes", "kernel", "support_vectors", "n_support",
                  "dual_coef", "intercept"):
        if field not in raw:
            raise SchemaError(field)
    m = raw["n_classes"]
    if not isinstance(m, int) or m < 2:
        raise SchemaError("n_classes", "must be an integer >= 2")

    kraw = raw["kernel"]
    kind = kraw.get("type")
    if kind not in ("linear", "poly", "rbf"):
        raise SchemaError("kernel.type", f"unknown kernel {kind!r}")
    degree = kraw.get("degree", 1)
    if not isinstance(degree, int) or degree < 1:
        raise SchemaError("kernel.degree", "must be a positive integer")
    kernel = Kernel(
        kind=kind,
        gamma=_num(kraw.get("gamma", 1), "kernel.gamma"),
        coef0=_num(kraw.get("coef0", 0), "kernel.coef0"),
        degree=degree,
    )

    n_support = tuple(raw["n_support"])
    if len(n_support) != m:
        raise InconsistentCounts(
            f"n_support has {len(n_support)} entries for {m} classes"
        )
    if any(not isinstance(k, int) or k < 1 for k in n_support):
        raise SchemaError("n_support", "every class needs at least one vector")
    total = sum(n_support)

    sv_rows = raw["support_vectors"]
    if len(sv_rows) != total:
        raise InconsistentCounts(
            f"{len(sv_rows)} support vectors but n_support sums to {total}"
        )
    if not sv_rows or not sv_rows[0]:
        raise SchemaError("support_vectors", "must be a non-empty matrix")
    d = len(sv_rows[0])
    support = []
    for i, row in enumerate(sv_rows):
        if len(row) != d:
            raise InconsistentCounts(f"support vector {i} has length {len(row)}")
        support.append(tuple(_num(v, "support_vectors") for v in row))

    dual_rows = raw["dual_coef"]
    if len(dual_rows) != m - 1:
        raise InconsistentCounts(
            f"dual_coef has {len(dual_rows)} rows, expected {m - 1}"
        )
    dual = []
    for i, row in enumerate(dual_rows):
        if len(row) != total:
            raise InconsistentCounts(f"dual_coef row {i} has length {len(row)}")
        dual.append(tuple(_num(v, "dual_coef") for v in row))

    n_pairs = m * (m - 1) // 2
    intercepts = raw["intercept"]
    if len(intercepts) != n_pairs:
        raise InconsistentCounts(
            f"intercept has {len(intercepts)} entries, expected {n_pairs}"
        )
    return SvmModel(
        n_classes=m,
        feature_dim=d,
        support_vectors=tuple(support),
        n_support=n_support,
        dual_coef=tuple(dual),
        intercept=tuple(_num(v, "intercept") for v in intercepts),
        kernel=kernel,
    )


def _kernel_value(model: SvmModel, dot: Fraction, sq_dist: Fraction) -> Fraction:
    k = model.kernel
    if k.kind == "linear":
        return dot
    if k.kind == "poly":
        return (k.gamma * dot + k.coef0) ** k.degree
    # rbf: exp(-gamma * ||x - s||^2), evaluated at 160-bit precision
    arg = -k.gamma * sq_dist
    value = _MP.exp(_MP.mpf(arg.numerator) / _MP.mpf(arg.denominator))
    return mpf_to_fraction(value)


def pair_values(model: SvmModel, x) -> list[Fraction]:
    """Per-pair decision values (the quantities fed to the sign test)."""
    x = [Fraction(v) for v in x]
    if len(x) != model.feature_dim:
        raise DimensionMismatch(
            f"input has {len(x)} features, model expects {model.feature_dim}"
        )
    kern: list[Fraction] = []
    for sv in model.support_vectors:
        dot = sum(a * b for a, b in zip(x, sv))
        sq = sum((a - b) ** 2 for a, b in zip(x, sv))
        kern.append(_kernel_value(model, dot, sq))
    values = []
    for p, (a, b) in enumerate(class_pairs(model.n_classes)):
        a_lo, a_hi = model.class_slice(a)
        b_lo, b_hi = model.class_slice(b)
        value = model.intercept[p]
        value += sum(model.dual_coef[b - 1][i] * kern[i] for i in range(a_lo, a_hi))
        value -= sum(model.dual_coef[a][i] * kern[i] for i in range(b_lo, b_hi))
        values.append(value)
    return values


def decision(model: SvmModel, x) -> list[int]:
    """Reference OVO vote counts; each score lies in [0, n_classes - 1]."""
    scores = [0] * model.n_classes
    for p, value in enumerate(pair_values(model, x)):
        a, b = class_pairs(model.n_classes)[p]
        if value > 0:
            scores[a] += 1
        elif value < 0:
            scores[b] += 1
    return scores


def svm_to_nir(model: SvmModel) -> Graph:
    """Compile the OVO decision into a graph equivalent to :func:`decision`.

    Stage 1 computes the kernel values for all support vectors, stage 2 the
    per-pair signed decisions, stage 3 tallies votes with a single Gemm.  A
    pair whose decision value is exactly zero contributes half a vote to each
    of its classes (Sign yields 0, and the tally matrix splits it evenly),
    which preserves vote order on every non-boundary input.
    """
    m = model.n_classes
    d = model.feature_dim
    total = sum(model.n_support)
    builder = GraphBuilder("svm_ovo")
    x = builder.input((d,))

    # Stage 1: kernel computation.
    sv_matrix = Tensor.matrix(
        [[model.support_vectors[j][i] for j in range(total)] for i in range(d)]
    )
    dots = builder.add("Gemm", [x, builder.constant(sv_matrix)])
    kern = dots
    k = model.kernel
    if k.kind == "poly":
        if k.gamma != 1:
            kern = builder.add("Mul", [kern, builder.constant(Tensor.scalar(k.gamma))])
        if k.coef0 != 0:
            kern = builder.add("Add", [kern, builder.constant(Tensor.scalar(k.coef0))])
        base = kern
        for _ in range(k.degree - 1):
            kern = builder.add("Mul", [kern, base])
    elif k.kind == "rbf":
        # ||x - s||^2 = ||x||^2 - 2 x.s + ||s||^2, replicated per vector by a
        # Gemm against a ones matrix so no non-constant broadcast is needed.
        xx = builder.add("Mul", [x, x])
        ones = Tensor.matrix([[1] * total for _ in range(d)])
        xnorm = builder.add("Gemm", [xx, builder.constant(ones)])
        minus_two = builder.constant(Tensor.scalar(Fraction(-2)))
        cross = builder.add("Mul", [dots, minus_two])
        snorm = Tensor.vector(
            [sum(v * v for v in sv) for sv in model.support_vectors]
        )
        dist = builder.add("Add", [xnorm, cross])
        dist = builder.add("Add", [dist, builder.constant(snorm)])
        scaled = builder.add(
            "Mul", [dist, builder.constant(Tensor.scalar(-k.gamma))]
        )
        kern = builder.add("Exp", [scaled])

    # Stage 2: one-vs-one decisions.
    pairs = class_pairs(m)
    pair_matrix = [[Fraction(0)] * len(pairs) for _ in range(total)]
    for p, (a, b) in enumerate(pairs):
        a_lo, a_hi = model.class_slice(a)
        b_lo, b_hi = model.class_slice(b)
        for i in range(a_lo, a_hi):
            pair_matrix[i][p] = model.dual_coef[b - 1][i]
        for i in range(b_lo, b_hi):
            pair_matrix[i][p] = -model.dual_coef[a][i]
    summed = builder.add("Gemm", [kern, builder.constant(Tensor.matrix(pair_matrix))])
    with_intercept = builder.add(
        "Add", [summed, builder.constant(Tensor.vector(model.intercept))]
    )
    signs = builder.add("Sign", [with_intercept])

    # Stage 3: adding up scores.
    tally = [[Fraction(0)] * m for _ in range(len(pairs))]
    for p, (a, b) in enumerate(pairs):
        tally[p][a] = Fraction(1, 2)
        tally[p][b] = Fraction(-1, 2)
    bias = Tensor.vector([Fraction(m - 1, 2)] * m)
    scores = builder.add(
        "Gemm", [signs, builder.constant(Tensor.matrix(tally)), builder.constant(bias)]
    )
    return builder.build([scores])

"""Built-in prelude: theories definable in the language itself.

Only the built-ins (read_model, read_dataset, length, has_length, indexing,
model application, mapi, dataset forall_) get special interpretation; the
vocabulary below is ordinary definitions layered on top of them.  Bounds
values are two-element vectors `(lo, hi)`.
"""

from __future__ import annotations

from .parser import parse
from .typecheck import TypeEnv, typecheck

PRELUDE_SOURCE = """\
type t = float

predicate ClassRobustVector.bounded_by_epsilon (p: vector t) (eps: t) =
  forall i. 0 <= i < length p -> .- eps .<= p[i] .<= eps

predicate FeatureVector.valid (bounds: vector t) (v: vector t) =
  forall i. 0 <= i < length v -> bounds[0] .<= v[i] .<= bounds[1]

predicate Label.valid (bounds: vector int) (j: int) =
  bounds[0] <= j /\\ j <= bounds[1]
"""

_cache: tuple | None = None


def prelude() -> tuple:
    """Parse and typecheck the prelude once; returns (SpecAst, TypeEnv)."""
    global _cache
    if _cache is None:
        ast = parse(PRELUDE_SOURCE)
        env = TypeEnv()
        typecheck(ast, env)
        _cache = (ast, env)
    return _cache

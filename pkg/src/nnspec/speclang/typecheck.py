"""Type inference and checking.

Unification-based, monomorphic for user declarations; built-ins are
instantiated fresh at every use (so `length` works on any vector type).
Integer and float operator families are disjoint: `<=` compares ints,
`.<=` compares floats, with no implicit coercions.  `+`/`-` are also
overloaded element-wise on float vectors.  A tuple literal unifies with a
vector type by unifying every element with the element type.
"""

from __future__ import annotations

import itertools

from .ast import (
    BOOL,
    Binder,
    Decl,
    EApp,
    EBinOp,
    EBool,
    EBuiltin,
    EFloat,
    EForall,
    EExists,
    EFun,
    EIf,
    EInt,
    ELet,
    ENot,
    EString,
    ETuple,
    EUnary,
    EVar,
    Expr,
    FLOAT,
    INT,
    MODEL,
    STRING,
    SpecAst,
    SpecType,
    SpecTypeError,
    Span,
    TArrow,
    TBool,
    TFloat,
    TInt,
    TModel,
    TNamed,
    TString,
    TTuple,
    TVar,
    TVector,
    UnboundIdentifier,
)

__all__ = ["typecheck", "builtin_kind_for_name", "TypeEnv"]

# Names (last path segment) with built-in interpretations.
_BUILTIN_NAMES = {
    "read_model": "ReadModel",
    "read_dataset": "ReadDataset",
    "length": "Length",
    "has_length": "HasLength",
    "mapi": "Mapi",
    "forall_": "DatasetForall",
}

_INT_CMP = ("<=", "<", ">=", ">")
_FLOAT_CMP = (".<=", ".<", ".>=", ".>")
_INT_ARITH = ("+", "-", "*", "/")
_FLOAT_ARITH = (".+", ".-", ".*", "./")


def builtin_kind_for_name(name: str) -> str | None:
    return _BUILTIN_NAMES.get(name.rsplit(".", 1)[-1])


def _show(t: SpecType) -> str:
    """Render a type for diagnostics, hiding unification variable ids."""
    if isinstance(t, TVar):
        return _show(t.ref) if t.ref is not None else "_"
    if isinstance(t, TVector):
        return f"vector {_show(t.elem)}"
    if isinstance(t, TTuple):
        return "(" + ", ".join(_show(i) for i in t.items) + ")"
    if isinstance(t, TArrow):
        return f"{_show(t.dom)} -> {_show(t.cod)}"
    return str(t)


def resolve(t: SpecType, aliases: dict[str, SpecType]) -> SpecType:
    while True:
        if isinstance(t, TVar) and t.ref is not None:
            t = t.ref
        elif isinstance(t, TNamed):
            if t.name not in aliases:
                raise SpecTypeError(Span(0, 0), "a known type", t.name)
            t = aliases[t.name]
        else:
            return t


def _occurs(var: TVar, t: SpecType, aliases) -> bool:
    t = resolve(t, aliases)
    if t is var:
        return True
    if isinstance(t, TVector):
        return _occurs(var, t.elem, aliases)
    if isinstance(t, TTuple):
        return any(_occurs(var, i, aliases) for i in t.items)
    if isinstance(t, TArrow):
        return _occurs(var, t.dom, aliases) or _occurs(var, t.cod, aliases)
    return False


class TypeEnv:
    """Declaration types plus alias table, shared between files and prelude."""

    def __init__(self, parent: "TypeEnv | None" = None):
        self.parent = parent
        self.types: dict[str, SpecType] = {}
        self.aliases: dict[str, SpecType] = {}

    def alias_table(self) -> dict[str, SpecType]:
        table = dict(self.parent.alias_table()) if self.parent else {}
        table.update(self.aliases)
        return table

    def lookup(self, name: str) -> SpecType | None:
        env: TypeEnv | None = self
        while env is not None:
            if name in env.types:
                return env.types[name]
            env = env.parent
        # A qualified prelude name may be referenced unqualified and vice
        # versa; fall back to suffix matching on the last path segment.
        short = name.rsplit(".", 1)[-1]
        env = self
        while env is not None:
            for key, value in env.types.items():
                if key.rsplit(".", 1)[-1] == short:
                    return value
            env = env.parent
        return None


class _Checker:
    def __init__(self, env: TypeEnv):
        self.env = env
        self.aliases = env.alias_table()
        self._uid = itertools.count(1)
        # Deferred equality-type checks: (span, type) must end up int/bool/string.
        self._eq_checks: list[tuple[Span, SpecType]] = []

    # --------------------------------------------------------- unification

    def unify(self, a: SpecType, b: SpecType, span: Span):
        a = resolve(a, self.aliases)
        b = resolve(b, self.aliases)
        if a is b:
            return
        if isinstance(a, TVar):
            if _occurs(a, b, self.aliases):
                raise SpecTypeError(span, str(a), f"cyclic type {b}")
            a.ref = b
            return
        if isinstance(b, TVar):
            self.unify(b, a, span)
            return
        if type(a) is type(b) and isinstance(a, (TInt, TBool, TFloat, TString, TModel)):
            return
        if isinstance(a, TVector) and isinstance(b, TVector):
            self.unify(a.elem, b.elem, span)
            return
        # Tuple literals serve as fixed-length vector literals.
        if isinstance(a, TTuple) and isinstance(b, TVector):
            for item in a.items:
                self.unify(item, b.elem, span)
            return
        if isinstance(a, TVector) and isinstance(b, TTuple):
            self.unify(b, a, span)
            return
        if isinstance(a, TTuple) and isinstance(b, TTuple):
            if len(a.items) != len(b.items):
                raise SpecTypeError(span, _show(a), _show(b))
            for x, y in zip(a.items, b.items):
                self.unify(x, y, span)
            return
        if isinstance(a, TArrow) and isinstance(b, TArrow):
            self.unify(a.dom, b.dom, span)
            self.unify(a.cod, b.cod, span)
            return
        raise SpecTypeError(span, _show(a), _show(b))

    def zonk(self, t: SpecType, span: Span) -> SpecType:
        t = resolve(t, self.aliases)
        if isinstance(t, TVar):
            raise SpecTypeError(span, "a concrete type", "an ambiguous type (add an annotation)")
        if isinstance(t, TVector):
            return TVector(self.zonk(t.elem, span))
        if isinstance(t, TTuple):
            return TTuple(tuple(self.zonk(i, span) for i in t.items))
        if isinstance(t, TArrow):
            return TArrow(self.zonk(t.dom, span), self.zonk(t.cod, span))
        return t

    # ------------------------------------------------------------ builtins

    def builtin_type(self, kind: str) -> SpecType:
        if kind == "ReadModel":
            return TArrow(STRING, MODEL)
        if kind == "ReadDataset":
            return TArrow(STRING, TVector(TTuple((INT, TVector(FLOAT)))))
        if kind == "Length":
            return TArrow(TVector(TVar()), INT)
        if kind == "HasLength":
            return TArrow(TVector(TVar()), TArrow(INT, BOOL))
        if kind == "Index":
            elem = TVar()
            return TArrow(TVector(elem), TArrow(INT, elem))
        if kind == "ModelApply":
            return TArrow(MODEL, TArrow(TVector(FLOAT), TVector(FLOAT)))
        if kind == "Mapi":
            a, b = TVar(), TVar()
            return TArrow(TVector(a), TArrow(TArrow(INT, TArrow(a, b)), TVector(b)))
        if kind == "DatasetForall":
            row = TTuple((INT, TVector(FLOAT)))
            fn = TArrow(INT, TArrow(TVector(FLOAT), BOOL))
            return TArrow(TVector(row), TArrow(fn, BOOL))
        raise AssertionError(f"unknown builtin {kind}")

    # ----------------------------------------------------------- checking

    def bind(self, scope: dict, binder: Binder):
        ty = binder.ty if binder.ty is not None else TVar()
        binder.uid = next(self._uid)
        binder.resolved = ty
        scope[binder.name] = (ty, binder.uid)

    def check(self, e: Expr, scope: dict) -> SpecType:
        ty = self._check(e, scope)
        if e.ascription is not None:
            self.unify(ty, e.ascription, e.span)
        e.ty = ty
        return ty

    def _check(self, e: Expr, scope: dict) -> SpecType:
        if isinstance(e, EInt):
            return INT
        if isinstance(e, EFloat):
            return FLOAT
        if isinstance(e, EBool):
            return BOOL
        if isinstance(e, EString):
            return STRING
        if isinstance(e, EBuiltin):
            return self.builtin_type(e.kind)
        if isinstance(e, EVar):
            if e.name in scope:
                ty, uid = scope[e.name]
                e.binding = uid
                return ty
            decl_ty = self.env.lookup(e.name)
            if decl_ty is not None:
                return decl_ty
            kind = builtin_kind_for_name(e.name)
            if kind is not None:
                return self.builtin_type(kind)
            raise UnboundIdentifier(e.span, e.name)
        if isinstance(e, EApp):
            fn_ty = resolve(self.check(e.fn, scope), self.aliases)
            arg_ty = self.check(e.arg, scope)
            if isinstance(fn_ty, TArrow):
                self.unify(fn_ty.dom, arg_ty, e.arg.span)
                return fn_ty.cod
            cod = TVar()
            self.unify(fn_ty, TArrow(arg_ty, cod), e.span)
            return cod
        if isinstance(e, ETuple):
            return TTuple(tuple(self.check(i, scope) for i in e.items))
        if isinstance(e, ELet):
            value_ty = self.check(e.value, scope)
            e.uid = next(self._uid)
            inner = dict(scope)
            inner[e.name] = (value_ty, e.uid)
            return self.check(e.body, inner)
        if isinstance(e, EIf):
            self.unify(self.check(e.cond, scope), BOOL, e.cond.span)
            then_ty = self.check(e.then, scope)
            self.unify(self.check(e.els, scope), then_ty, e.els.span)
            return then_ty
        if isinstance(e, ENot):
            self.unify(self.check(e.operand, scope), BOOL, e.operand.span)
            return BOOL
        if isinstance(e, EUnary):
            ty = self.check(e.operand, scope)
            target = INT if e.op == "-" else FLOAT
            self.unify(ty, target, e.span)
            return target
        if isinstance(e, EBinOp):
            return self._check_binop(e, scope)
        if isinstance(e, (EForall, EExists)):
            inner = dict(scope)
            for b in e.binders:
                self.bind(inner, b)
            self.unify(self.check(e.body, inner), BOOL, e.body.span)
            return BOOL
        if isinstance(e, EFun):
            inner = dict(scope)
            for b in e.binders:
                self.bind(inner, b)
            body_ty = self.check(e.body, inner)
            for b in reversed(e.binders):
                body_ty = TArrow(b.resolved, body_ty)
            return body_ty
        raise AssertionError(f"unhandled node {type(e).__name__}")

    def _check_binop(self, e: EBinOp, scope: dict) -> SpecType:
        op = e.op
        if op in ("/\\", "\\/", "->"):
            self.unify(self.check(e.lhs, scope), BOOL, e.lhs.span)
            self.unify(self.check(e.rhs, scope), BOOL, e.rhs.span)
            return BOOL
        if op in _FLOAT_CMP:
            self.unify(self.check(e.lhs, scope), FLOAT, e.lhs.span)
            self.unify(self.check(e.rhs, scope), FLOAT, e.rhs.span)
            return BOOL
        if op in _FLOAT_ARITH:
            self.unify(self.check(e.lhs, scope), FLOAT, e.lhs.span)
            self.unify(self.check(e.rhs, scope), FLOAT, e.rhs.span)
            return FLOAT
        if op in _INT_CMP:
            self.unify(self.check(e.lhs, scope), INT, e.lhs.span)
            self.unify(self.check(e.rhs, scope), INT, e.rhs.span)
            return BOOL
        if op in ("=", "<>"):
            lhs_ty = self.check(e.lhs, scope)
            self.unify(self.check(e.rhs, scope), lhs_ty, e.rhs.span)
            self._eq_checks.append((e.span, lhs_ty))
            return BOOL
        if op in _INT_ARITH:
            lhs_ty = resolve(self.check(e.lhs, scope), self.aliases)
            if isinstance(lhs_ty, (TVector, TTuple)) and op in ("+", "-"):
                vec = TVector(FLOAT)
                self.unify(lhs_ty, vec, e.lhs.span)
                self.unify(self.check(e.rhs, scope), vec, e.rhs.span)
                return vec
            if isinstance(lhs_ty, TFloat):
                raise SpecTypeError(e.span, f"int (use `.{op}` on floats)", "float")
            self.unify(lhs_ty, INT, e.lhs.span)
            self.unify(self.check(e.rhs, scope), INT, e.rhs.span)
            return INT
        raise AssertionError(f"unhandled operator {op}")

    def flush_eq_checks(self):
        checks, self._eq_checks = self._eq_checks, []
        for span, ty in checks:
            final = resolve(ty, self.aliases)
            if isinstance(final, TVar):
                # Unconstrained equality defaults to int.
                self.unify(final, INT, span)
            elif not isinstance(final, (TInt, TBool, TString)):
                raise SpecTypeError(span, "int, bool or string equality", str(final))

    def zonk_expr(self, e: Expr):
        stack = [e]
        while stack:
            node = stack.pop()
            node.ty = self.zonk(node.ty, node.span)
            for attr in ("fn", "arg", "value", "body", "cond", "then", "els",
                         "lhs", "rhs", "operand"):
                child = getattr(node, attr, None)
                if isinstance(child, Expr):
                    stack.append(child)
            for child in getattr(node, "items", []) or []:
                if isinstance(child, Expr):
                    stack.append(child)
            for b in getattr(node, "binders", []) or []:
                b.resolved = self.zonk(b.resolved, b.span)


def typecheck(ast: SpecAst, env: TypeEnv | None = None) -> SpecAst:
    """Infer and annotate all types; raises on errors, returns the same AST."""
    env = env if env is not None else TypeEnv()
    checker = _Checker(env)
    for decl in ast.decls:
        if decl.kind == "type":
            # Validate the alias target resolves before registering it.
            resolve(decl.alias, {**env.alias_table(), decl.name: decl.alias})
            env.aliases[decl.name] = decl.alias
            checker.aliases = env.alias_table()
            continue
        scope: dict = {}
        for b in decl.binders:
            checker.bind(scope, b)
        body_ty = checker.check(decl.body, scope)
        if decl.kind == "predicate":
            checker.unify(body_ty, BOOL, decl.body.span)
        if decl.result_type is not None:
            checker.unify(body_ty, decl.result_type, decl.body.span)
        for kind, expr in decl.contracts:
            contract_scope = dict(scope)
            if kind == "ensures":
                contract_scope["result"] = (body_ty, next(checker._uid))
            checker.unify(checker.check(expr, contract_scope), BOOL, expr.span)
        checker.flush_eq_checks()
        checker.zonk_expr(decl.body)
        for _kind, expr in decl.contracts:
            checker.zonk_expr(expr)
        decl_ty = body_ty
        for b in reversed(decl.binders):
            decl_ty = TArrow(b.resolved, decl_ty)
        decl.resolved_type = checker.zonk(decl_ty, decl.span)
        env.types[decl.name] = decl.resolved_type
    for goal in ast.goals:
        checker.unify(checker.check(goal.body, {}), BOOL, goal.body.span)
        checker.flush_eq_checks()
        checker.zonk_expr(goal.body)
    return ast

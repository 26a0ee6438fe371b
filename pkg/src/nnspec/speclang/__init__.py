"""Specification language: lexing, parsing, type checking, pretty printing."""

from __future__ import annotations

import copy

from .ast import (
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
    Goal,
    SpecAst,
    SpecError,
    SpecSyntaxError,
    SpecType,
    SpecTypeError,
    Span,
    UnboundIdentifier,
    app_spine,
    same_structure,
)
from .lexer import tokenize
from .parser import parse, parse_expr_text
from .pretty import pretty, pretty_expr, pretty_type
from .prelude import PRELUDE_SOURCE, prelude
from .typecheck import TypeEnv, builtin_kind_for_name, typecheck

__all__ = [
    "parse", "parse_expr_text", "tokenize", "typecheck", "pretty",
    "pretty_expr", "pretty_type", "prelude", "PRELUDE_SOURCE", "TypeEnv",
    "builtin_kind_for_name", "expand_contract_goals", "check_file",
    "SpecAst", "Decl", "Goal", "Binder", "Expr", "Span",
    "SpecError", "SpecSyntaxError", "SpecTypeError", "UnboundIdentifier",
    "app_spine", "same_structure",
]


def _subst_var(e: Expr, name: str, replacement: Expr) -> Expr:
    """Capture-safe substitution of a free variable (used for `result`)."""
    if isinstance(e, EVar):
        return copy.deepcopy(replacement) if e.name == name else e
    if isinstance(e, (EForall, EExists, EFun)):
        if any(b.name == name for b in e.binders):
            return e
        e.body = _subst_var(e.body, name, replacement)
        return e
    if isinstance(e, ELet):
        e.value = _subst_var(e.value, name, replacement)
        if e.name != name:
            e.body = _subst_var(e.body, name, replacement)
        return e
    for attr in ("fn", "arg", "cond", "then", "els", "lhs", "rhs", "operand"):
        child = getattr(e, attr, None)
        if isinstance(child, Expr):
            setattr(e, attr, _subst_var(child, name, replacement))
    items = getattr(e, "items", None)
    if items:
        e.items = [_subst_var(i, name, replacement) for i in items]
    return e


def expand_contract_goals(ast: SpecAst) -> SpecAst:
    """Derive a verification goal from every function with `ensures` clauses.

    A declaration `let f (x: tau) requires { R } ensures { E } = body`
    contributes the goal `f: forall (x: tau). R -> E[result := body]`.
    Purely syntactic; run before type checking.
    """
    taken = {g.name for g in ast.goals}
    for decl in ast.decls:
        ensures = [e for kind, e in decl.contracts if kind == "ensures"]
        if not ensures:
            continue
        requires = [e for kind, e in decl.contracts if kind == "requires"]
        conclusion = None
        for clause in ensures:
            clause = _subst_var(copy.deepcopy(clause), "result",
                                copy.deepcopy(decl.body))
            conclusion = clause if conclusion is None else EBinOp(
                span=decl.span, op="/\\", lhs=conclusion, rhs=clause)
        body = conclusion
        for req in reversed(requires):
            body = EBinOp(span=decl.span, op="->", lhs=copy.deepcopy(req), rhs=body)
        if decl.binders:
            body = EForall(span=decl.span,
                           binders=copy.deepcopy(decl.binders), body=body)
        name = decl.name if decl.name not in taken else decl.name + "_vc"
        taken.add(name)
        ast.goals.append(Goal(name, body, decl.span))
    return ast


def check_file(source: str) -> tuple[SpecAst, TypeEnv]:
    """Parse, expand contract goals, and typecheck against the prelude."""
    _prelude_ast, prelude_env = prelude()
    ast = parse(source)
    expand_contract_goals(ast)
    env = TypeEnv(parent=prelude_env)
    typecheck(ast, env)
    return ast, env

"""Pretty printer: emits canonical single-space tokens that re-parse equal."""

from __future__ import annotations

from ..rational import exact_decimal
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
    SpecType,
    TArrow,
    TNamed,
    TTuple,
    TVector,
    app_spine,
    same_structure,
)

# Precedence levels; higher binds tighter.
_BINDING = 0
_IMPL = 1
_OR = 2
_AND = 3
_NOT = 4
_CMP = 5
_ADD = 6
_MUL = 7
_UNARY = 8
_ATAT = 9
_APP = 10
_POSTFIX = 11
_ATOM = 12

_BIN_LEVEL = {
    "->": _IMPL, "\\/": _OR, "/\\": _AND,
    "<=": _CMP, "<": _CMP, ">=": _CMP, ">": _CMP, "=": _CMP, "<>": _CMP,
    ".<=": _CMP, ".<": _CMP, ".>=": _CMP, ".>": _CMP,
    "+": _ADD, "-": _ADD, ".+": _ADD, ".-": _ADD,
    "*": _MUL, "/": _MUL, ".*": _MUL, "./": _MUL,
}


def pretty_type(t: SpecType, arrow_ctx: bool = False, atom_ctx: bool = False) -> str:
    if isinstance(t, TVector):
        return f"vector {pretty_type(t.elem, atom_ctx=True)}"
    if isinstance(t, TTuple):
        return "(" + ", ".join(pretty_type(i) for i in t.items) + ")"
    if isinstance(t, TArrow):
        text = f"{pretty_type(t.dom, arrow_ctx=True)} -> {pretty_type(t.cod)}"
        return f"({text})" if (arrow_ctx or atom_ctx) else text
    if isinstance(t, TNamed):
        return t.name
    return str(t)


def _binder(b: Binder) -> str:
    if b.ty is None:
        return b.name
    return f"({b.name}: {pretty_type(b.ty)})"


def _float_text(e: EFloat) -> str:
    if e.text:
        return e.text
    dec = exact_decimal(e.value)
    if dec is not None:
        return dec if "." in dec else dec + ".0"
    return repr(float(e.value))


def _chain_parts(e: EBinOp) -> list[tuple[str, Expr]] | None:
    """Decompose a chained-comparison conjunction into `a op b op c` parts."""
    if not (e.op == "/\\" and e.chain):
        return None
    rhs = e.rhs
    if not (isinstance(rhs, EBinOp) and _BIN_LEVEL.get(rhs.op) == _CMP):
        return None
    if isinstance(e.lhs, EBinOp) and e.lhs.op == "/\\" and e.lhs.chain:
        left = _chain_parts(e.lhs)
        if left is None:
            return None
    elif isinstance(e.lhs, EBinOp) and _BIN_LEVEL.get(e.lhs.op) == _CMP:
        left = [("", e.lhs.lhs), (e.lhs.op, e.lhs.rhs)]
    else:
        return None
    if not same_structure(left[-1][1], rhs.lhs):
        return None
    return left + [(rhs.op, rhs.rhs)]


def pretty_expr(e: Expr, ctx: int = 0) -> str:
    text, level = _render(e)
    if e.ascription is not None:
        return f"({text}: {pretty_type(e.ascription)})"
    if level < ctx:
        return f"({text})"
    return text


def _lazy_rhs(e: Expr, level: int) -> str:
    # Binding forms extend to the end of the expression after a lazy
    # operator, so they need no parentheses on the right.
    if isinstance(e, (EForall, EExists, EFun, ELet, EIf)) and e.ascription is None:
        return pretty_expr(e, _BINDING)
    return pretty_expr(e, level)


def _render(e: Expr) -> tuple[str, int]:
    if isinstance(e, EVar):
        return e.name, _ATOM
    if isinstance(e, EInt):
        return (e.text or str(e.value)), _ATOM
    if isinstance(e, EFloat):
        return _float_text(e), _ATOM
    if isinstance(e, EBool):
        return ("true" if e.value else "false"), _ATOM
    if isinstance(e, EString):
        escaped = e.value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"', _ATOM
    if isinstance(e, EBuiltin):
        return e.kind, _ATOM
    if isinstance(e, ETuple):
        inner = ", ".join(pretty_expr(i, _BINDING) for i in e.items)
        return f"({inner})", _ATOM
    if isinstance(e, EApp):
        head, args = app_spine(e)
        if isinstance(head, EBuiltin) and head.kind == "Index" and len(args) == 2:
            base = pretty_expr(args[0], _ATOM)
            return f"{base}[{pretty_expr(args[1], _BINDING)}]", _POSTFIX
        if isinstance(head, EBuiltin) and head.kind == "ModelApply" and len(args) == 2:
            lhs = pretty_expr(args[0], _ATAT)
            rhs = pretty_expr(args[1], _APP)
            return f"{lhs} @@ {rhs}", _ATAT
        parts = [pretty_expr(head, _APP)] + [pretty_expr(a, _POSTFIX) for a in args]
        return " ".join(parts), _APP
    if isinstance(e, ELet):
        value = pretty_expr(e.value, _BINDING)
        body = pretty_expr(e.body, _BINDING)
        return f"let {e.name} = {value} in {body}", _BINDING
    if isinstance(e, EIf):
        return (
            f"if {pretty_expr(e.cond, _BINDING)} then {pretty_expr(e.then, _BINDING)}"
            f" else {pretty_expr(e.els, _BINDING)}",
            _BINDING,
        )
    if isinstance(e, EBinOp):
        chain = _chain_parts(e)
        if chain is not None:
            parts = [pretty_expr(chain[0][1], _ADD)]
            for op, operand in chain[1:]:
                parts.append(op)
                parts.append(pretty_expr(operand, _ADD))
            return " ".join(parts), _CMP
        level = _BIN_LEVEL[e.op]
        if e.op == "->":
            lhs = pretty_expr(e.lhs, level + 1)
            rhs = _lazy_rhs(e.rhs, level)
        elif e.op in ("/\\", "\\/"):
            lhs = pretty_expr(e.lhs, level)
            rhs = _lazy_rhs(e.rhs, level + 1)
        elif level == _CMP:
            lhs = pretty_expr(e.lhs, level + 1)
            rhs = pretty_expr(e.rhs, level + 1)
        else:
            lhs = pretty_expr(e.lhs, level)
            rhs = pretty_expr(e.rhs, level + 1)
        return f"{lhs} {e.op} {rhs}", level
    if isinstance(e, EUnary):
        return f"{e.op} {pretty_expr(e.operand, _UNARY)}", _UNARY
    if isinstance(e, ENot):
        return f"not {pretty_expr(e.operand, _NOT)}", _NOT
    if isinstance(e, (EForall, EExists, EFun)):
        if isinstance(e, EFun):
            head, sep = "fun", " ->"
        else:
            head = "forall" if isinstance(e, EForall) else "exists"
            sep = "."
        binders = " ".join(_binder(b) for b in e.binders)
        return f"{head} {binders}{sep} {pretty_expr(e.body, _BINDING)}", _BINDING
    raise TypeError(f"cannot print {type(e).__name__}")


def pretty_decl(d: Decl) -> str:
    if d.kind == "type":
        return f"type {d.name} = {pretty_type(d.alias)}"
    binders = "".join(" " + _binder(b) for b in d.binders)
    result = f" : {pretty_type(d.result_type)}" if d.result_type else ""
    contracts = "".join(
        f" {kw} {{ {pretty_expr(expr, _BINDING)} }}" for kw, expr in d.contracts
    )
    keyword = d.keyword or ("predicate" if d.kind == "predicate" else "function")
    body = pretty_expr(d.body, _BINDING)
    return f"{keyword} {d.name}{binders}{result}{contracts} = {body}"


def pretty_goal(g: Goal) -> str:
    return f"goal {g.name}: {pretty_expr(g.body, _BINDING)}"


def pretty(ast: SpecAst) -> str:
    """Render a whole file; declarations keep their source order."""
    items: list[tuple[tuple[int, int], str]] = []
    for d in ast.decls:
        items.append(((d.span.line, d.span.col), pretty_decl(d)))
    for g in ast.goals:
        items.append(((g.span.line, g.span.col), pretty_goal(g)))
    items.sort(key=lambda kv: kv[0])
    return "\n".join(text for _, text in items) + "\n"

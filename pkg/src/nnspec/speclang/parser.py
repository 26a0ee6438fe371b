"""Recursive-descent parser producing a :class:`SpecAst`.

Comparison chains (`a .<= b .<= c`) desugar into conjunctions whose nodes
carry a `chain` flag so the pretty printer can restore the surface form.
Indexing `v[i]` and model application `m @@ v` parse to applications of the
Index and ModelApply built-ins.
"""

from __future__ import annotations

from fractions import Fraction

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
    SpecSyntaxError,
    SpecType,
    Span,
    TArrow,
    TNamed,
    TTuple,
    TVector,
    BOOL,
    FLOAT,
    INT,
    MODEL,
    STRING,
)
from .lexer import Token, tokenize

CMP_OPS = frozenset(["<=", "<", ">=", ">", "=", "<>", ".<=", ".<", ".>=", ".>"])
ADD_OPS = frozenset(["+", "-", ".+", ".-"])
MUL_OPS = frozenset(["*", "/", ".*", "./"])

_BASE_TYPES = {"int": INT, "bool": BOOL, "float": FLOAT, "string": STRING,
               "model": MODEL}

# Tokens that can start an expression "atom" (for juxtaposition application).
_ATOM_STARTS = {"ident", "int", "float", "string"}


def _unquote(text: str) -> str:
    body = text[1:-1]
    return body.replace('\\"', '"').replace("\\\\", "\\")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # ------------------------------------------------------------- helpers

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text in ops

    def at_kw(self, *kws: str) -> bool:
        tok = self.peek()
        return tok.kind == "kw" and tok.text in kws

    def expect_op(self, op: str) -> Token:
        tok = self.next()
        if tok.kind != "op" or tok.text != op:
            raise SpecSyntaxError(tok.span, f"expected {op!r}, found {tok.text or 'end of input'!r}")
        return tok

    def expect_kw(self, kw: str) -> Token:
        tok = self.next()
        if tok.kind != "kw" or tok.text != kw:
            raise SpecSyntaxError(tok.span, f"expected {kw!r}, found {tok.text or 'end of input'!r}")
        return tok

    def expect_ident(self) -> Token:
        tok = self.next()
        if tok.kind != "ident":
            raise SpecSyntaxError(tok.span, f"expected identifier, found {tok.text or 'end of input'!r}")
        return tok

    # --------------------------------------------------------------- types

    def parse_type(self) -> SpecType:
        left = self.parse_type_atom()
        if self.at_op("->"):
            self.next()
            return TArrow(left, self.parse_type())
        return left

    def parse_type_atom(self) -> SpecType:
        tok = self.peek()
        if tok.kind == "ident":
            self.next()
            if tok.text == "vector":
                return TVector(self.parse_type_atom())
            if tok.text in _BASE_TYPES:
                return _BASE_TYPES[tok.text]
            return TNamed(tok.text)
        if self.at_op("("):
            self.next()
            items = [self.parse_type()]
            while self.at_op(","):
                self.next()
                items.append(self.parse_type())
            self.expect_op(")")
            if len(items) == 1:
                return items[0]
            return TTuple(tuple(items))
        raise SpecSyntaxError(tok.span, f"expected a type, found {tok.text!r}")

    # ------------------------------------------------------------- binders

    def parse_binders(self, stop_op: str) -> list[Binder]:
        binders: list[Binder] = []
        while True:
            tok = self.peek()
            if tok.kind == "ident":
                self.next()
                binders.append(Binder(tok.text, None, tok.span))
            elif self.at_op("("):
                self.next()
                names = [self.expect_ident()]
                while self.peek().kind == "ident":
                    names.append(self.expect_ident())
                self.expect_op(":")
                ty = self.parse_type()
                self.expect_op(")")
                for name in names:
                    binders.append(Binder(name.text, ty, name.span))
            elif self.at_op(","):
                self.next()
            elif self.at_op(stop_op):
                self.next()
                break
            else:
                raise SpecSyntaxError(
                    tok.span, f"expected binder or {stop_op!r}, found {tok.text or 'end of input'!r}"
                )
        if not binders:
            raise SpecSyntaxError(self.peek().span, "expected at least one binder")
        return binders

    # ---------------------------------------------------------- expressions

    def _starts_binding_form(self) -> bool:
        return self.at_kw("forall", "exists", "fun", "let", "if", "not")

    def parse_expr(self) -> Expr:
        tok = self.peek()
        if self.at_kw("forall", "exists"):
            self.next()
            binders = self.parse_binders(".")
            body = self.parse_expr()
            cls = EForall if tok.text == "forall" else EExists
            return cls(span=tok.span, binders=binders, body=body)
        if self.at_kw("fun"):
            self.next()
            binders = self.parse_binders("->")
            body = self.parse_expr()
            return EFun(span=tok.span, binders=binders, body=body)
        if self.at_kw("let"):
            self.next()
            name = self.expect_ident()
            self.expect_op("=")
            value = self.parse_expr_no_binding()
            self.expect_kw("in")
            body = self.parse_expr()
            return ELet(span=tok.span, name=name.text, value=value, body=body)
        if self.at_kw("if"):
            self.next()
            cond = self.parse_expr_no_binding()
            self.expect_kw("then")
            then = self.parse_expr_no_binding()
            self.expect_kw("else")
            els = self.parse_expr()
            return EIf(span=tok.span, cond=cond, then=then, els=els)
        return self.parse_impl()

    def parse_expr_no_binding(self) -> Expr:
        """An expression that must stop at `in` / `then` / `else`."""
        return self.parse_expr()

    def _rhs(self, level) -> tuple[Expr, bool]:
        """Right operand of a lazy binary operator.

        A binding form (quantifier, fun, let, if, not before a binder) in
        operand position extends to the end of the expression, so parsing
        must stop afterwards.
        """
        if self._starts_binding_form():
            return self.parse_expr(), True
        return level(), False

    def parse_impl(self) -> Expr:
        left = self.parse_or()
        if self.at_op("->"):
            tok = self.next()
            right = self.parse_expr()
            return EBinOp(span=tok.span, op="->", lhs=left, rhs=right)
        return left

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.at_op("\\/"):
            tok = self.next()
            right, stop = self._rhs(self.parse_and)
            left = EBinOp(span=tok.span, op="\\/", lhs=left, rhs=right)
            if stop:
                break
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self.at_op("/\\"):
            tok = self.next()
            right, stop = self._rhs(self.parse_not)
            left = EBinOp(span=tok.span, op="/\\", lhs=left, rhs=right)
            if stop:
                break
        return left

    def parse_not(self) -> Expr:
        if self.at_kw("not"):
            tok = self.next()
            return ENot(span=tok.span, operand=self.parse_not())
        return self.parse_cmp()

    def parse_cmp(self) -> Expr:
        first = self.parse_add()
        if not self.at_op(*CMP_OPS):
            return first
        comparisons: list[Expr] = []
        operands = [first]
        while self.at_op(*CMP_OPS):
            tok = self.next()
            rhs = self.parse_add()
            operands.append(rhs)
            comparisons.append(
                EBinOp(span=tok.span, op=tok.text, lhs=operands[-2], rhs=rhs)
            )
        result = comparisons[0]
        for cmp in comparisons[1:]:
            result = EBinOp(span=cmp.span, op="/\\", lhs=result, rhs=cmp, chain=True)
        return result

    def parse_add(self) -> Expr:
        left = self.parse_mul()
        while self.at_op(*ADD_OPS):
            tok = self.next()
            left = EBinOp(span=tok.span, op=tok.text, lhs=left, rhs=self.parse_mul())
        return left

    def parse_mul(self) -> Expr:
        left = self.parse_unary()
        while self.at_op(*MUL_OPS):
            tok = self.next()
            left = EBinOp(span=tok.span, op=tok.text, lhs=left, rhs=self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.at_op("-", ".-"):
            tok = self.next()
            return EUnary(span=tok.span, op=tok.text, operand=self.parse_unary())
        return self.parse_atat()

    def parse_atat(self) -> Expr:
        left = self.parse_app()
        while self.at_op("@@"):
            tok = self.next()
            rhs = self.parse_app()
            left = EApp(
                span=tok.span,
                fn=EApp(span=tok.span, fn=EBuiltin(span=tok.span, kind="ModelApply"), arg=left),
                arg=rhs,
            )
        return left

    def _at_atom_start(self) -> bool:
        tok = self.peek()
        if tok.kind in _ATOM_STARTS:
            return True
        if tok.kind == "kw" and tok.text in ("true", "false"):
            return True
        return tok.kind == "op" and tok.text == "("

    def parse_app(self) -> Expr:
        expr = self.parse_postfix()
        while self._at_atom_start():
            arg = self.parse_postfix()
            expr = EApp(span=expr.span, fn=expr, arg=arg)
        return expr

    def parse_postfix(self) -> Expr:
        expr = self.parse_atom()
        while self.at_op("["):
            tok = self.next()
            index = self.parse_expr_no_binding()
            self.expect_op("]")
            expr = EApp(
                span=tok.span,
                fn=EApp(span=tok.span, fn=EBuiltin(span=tok.span, kind="Index"), arg=expr),
                arg=index,
            )
        return expr

    def parse_atom(self) -> Expr:
        tok = self.next()
        if tok.kind == "int":
            return EInt(span=tok.span, value=int(tok.text), text=tok.text)
        if tok.kind == "float":
            return EFloat(span=tok.span, value=Fraction(tok.text), text=tok.text)
        if tok.kind == "string":
            return EString(span=tok.span, value=_unquote(tok.text))
        if tok.kind == "kw" and tok.text in ("true", "false"):
            return EBool(span=tok.span, value=tok.text == "true")
        if tok.kind == "ident":
            return EVar(span=tok.span, name=tok.text)
        if tok.kind == "op" and tok.text == "(":
            inner = self.parse_expr()
            if self.at_op(":"):
                self.next()
                inner.ascription = self.parse_type()
                self.expect_op(")")
                return inner
            if self.at_op(","):
                items = [inner]
                while self.at_op(","):
                    self.next()
                    items.append(self.parse_expr())
                self.expect_op(")")
                return ETuple(span=tok.span, items=items)
            self.expect_op(")")
            return inner
        raise SpecSyntaxError(
            tok.span, f"unexpected {tok.text or 'end of input'!r} in expression"
        )

    # ---------------------------------------------------------- declarations

    def parse_decl_binders(self) -> list[Binder]:
        binders: list[Binder] = []
        while True:
            tok = self.peek()
            if tok.kind == "ident":
                self.next()
                binders.append(Binder(tok.text, None, tok.span))
            elif self.at_op("(") and self.peek(1).kind == "ident":
                # Lookahead for `(name : type)`; a bare paren is not a binder.
                save = self.pos
                self.next()
                names = [self.expect_ident()]
                while self.peek().kind == "ident":
                    names.append(self.expect_ident())
                if not self.at_op(":"):
                    self.pos = save
                    break
                self.next()
                ty = self.parse_type()
                self.expect_op(")")
                for name in names:
                    binders.append(Binder(name.text, ty, name.span))
            else:
                break
        return binders

    def parse_contracts(self) -> list[tuple[str, Expr]]:
        contracts = []
        while self.at_kw("requires", "ensures"):
            kw = self.next()
            self.expect_op("{")
            expr = self.parse_expr()
            self.expect_op("}")
            contracts.append((kw.text, expr))
        return contracts

    def parse_file(self) -> SpecAst:
        decls: list[Decl] = []
        goals: list[Goal] = []
        while self.peek().kind != "eof":
            tok = self.peek()
            if self.at_kw("goal"):
                self.next()
                name = self.expect_ident()
                self.expect_op(":")
                body = self.parse_expr()
                if any(g.name == name.text for g in goals):
                    raise SpecSyntaxError(name.span, f"duplicate goal name {name.text!r}")
                goals.append(Goal(name.text, body, tok.span))
            elif self.at_kw("type"):
                self.next()
                name = self.expect_ident()
                self.expect_op("=")
                alias = self.parse_type()
                decls.append(Decl("type", name.text, [], [], None, tok.span,
                                  alias=alias, keyword="type"))
            elif self.at_kw("predicate"):
                self.next()
                name = self.expect_ident()
                binders = self.parse_decl_binders()
                self.expect_op("=")
                body = self.parse_expr()
                decls.append(Decl("predicate", name.text, binders, [], body,
                                  tok.span, keyword="predicate"))
            elif self.at_kw("function") or self.at_kw("let"):
                keyword = self.next().text
                if keyword == "let" and self.at_kw("function"):
                    self.next()
                    keyword = "let function"
                name = self.expect_ident()
                binders = self.parse_decl_binders()
                result_type = None
                if self.at_op(":"):
                    self.next()
                    result_type = self.parse_type()
                contracts = self.parse_contracts()
                self.expect_op("=")
                body = self.parse_expr()
                decls.append(Decl("function", name.text, binders, contracts,
                                  body, tok.span, result_type=result_type,
                                  keyword=keyword))
            else:
                raise SpecSyntaxError(
                    tok.span,
                    f"expected a declaration or goal, found {tok.text or 'end of input'!r}",
                )
        return SpecAst(decls, goals)


def parse(source: str) -> SpecAst:
    """Parse specification source text; raises SpecSyntaxError on bad input."""
    return _Parser(tokenize(source)).parse_file()


def parse_expr_text(source: str) -> Expr:
    """Parse a single expression (testing / embedding convenience)."""
    parser = _Parser(tokenize(source))
    expr = parser.parse_expr()
    tok = parser.peek()
    if tok.kind != "eof":
        raise SpecSyntaxError(tok.span, f"unexpected trailing {tok.text!r}")
    return expr

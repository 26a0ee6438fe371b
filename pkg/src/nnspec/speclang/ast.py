"""Typed abstract syntax for the specification language."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0

    def __str__(self):
        return f"{self.line}:{self.col}"


NO_SPAN = Span(0, 0)


class SpecError(Exception):
    def __init__(self, span: Span, message: str):
        super().__init__(f"{span}: {message}")
        self.span = span
        self.message = message


class SpecSyntaxError(SpecError):
    pass


class SpecTypeError(SpecError):
    def __init__(self, span: Span, expected, found):
        super().__init__(span, f"expected {expected}, found {found}")
        self.expected = expected
        self.found = found


class UnboundIdentifier(SpecError):
    def __init__(self, span: Span, name: str):
        super().__init__(span, f"unbound identifier {name!r}")
        self.name = name


# -------------------------------------------------------------------- types


class SpecType:
    __slots__ = ()


@dataclass(frozen=True)
class TInt(SpecType):
    def __str__(self):
        return "int"


@dataclass(frozen=True)
class TBool(SpecType):
    def __str__(self):
        return "bool"


@dataclass(frozen=True)
class TFloat(SpecType):
    def __str__(self):
        return "float"


@dataclass(frozen=True)
class TString(SpecType):
    def __str__(self):
        return "string"


@dataclass(frozen=True)
class TModel(SpecType):
    def __str__(self):
        return "model"


@dataclass(frozen=True)
class TVector(SpecType):
    elem: SpecType

    def __str__(self):
        return f"vector {self.elem}"


@dataclass(frozen=True)
class TTuple(SpecType):
    items: tuple[SpecType, ...]

    def __str__(self):
        return "(" + ", ".join(str(i) for i in self.items) + ")"


@dataclass(frozen=True)
class TArrow(SpecType):
    dom: SpecType
    cod: SpecType

    def __str__(self):
        return f"{self.dom} -> {self.cod}"


@dataclass(frozen=True)
class TNamed(SpecType):
    name: str

    def __str__(self):
        return self.name


class TVar(SpecType):
    """Unification variable; only present during type checking."""

    _counter = 0

    def __init__(self):
        TVar._counter += 1
        self.id = TVar._counter
        self.ref: SpecType | None = None

    def __str__(self):
        return f"'t{self.id}"


INT = TInt()
BOOL = TBool()
FLOAT = TFloat()
STRING = TString()
MODEL = TModel()


# -------------------------------------------------------------- expressions

# Built-in kinds with special interpretation.
BUILTIN_KINDS = (
    "ReadModel", "ReadDataset", "Length", "HasLength", "Index",
    "ModelApply", "Mapi", "DatasetForall",
)


@dataclass
class Binder:
    name: str
    ty: SpecType | None
    span: Span = NO_SPAN
    # Filled by the type checker.
    resolved: SpecType | None = None
    uid: int = 0


@dataclass
class Expr:
    span: Span = NO_SPAN
    ty: SpecType | None = None
    ascription: SpecType | None = None


@dataclass
class EVar(Expr):
    name: str = ""
    # Binder uid (> 0) when bound locally, 0 for declarations/builtins.
    binding: int = 0


@dataclass
class EInt(Expr):
    value: int = 0
    text: str = ""


@dataclass
class EFloat(Expr):
    value: Fraction = Fraction(0)
    text: str = ""


@dataclass
class EBool(Expr):
    value: bool = False


@dataclass
class EString(Expr):
    value: str = ""


@dataclass
class EBuiltin(Expr):
    kind: str = ""


@dataclass
class EApp(Expr):
    fn: Expr = None
    arg: Expr = None


@dataclass
class ETuple(Expr):
    items: list[Expr] = field(default_factory=list)


@dataclass
class ELet(Expr):
    name: str = ""
    value: Expr = None
    body: Expr = None
    uid: int = 0


@dataclass
class EIf(Expr):
    cond: Expr = None
    then: Expr = None
    els: Expr = None


@dataclass
class EBinOp(Expr):
    op: str = ""
    lhs: Expr = None
    rhs: Expr = None
    # True when this conjunction came from a chained comparison like
    # `a .<= b .<= c`; the pretty printer restores the chained form.
    chain: bool = False


@dataclass
class EUnary(Expr):
    op: str = ""
    operand: Expr = None


@dataclass
class ENot(Expr):
    operand: Expr = None


@dataclass
class EForall(Expr):
    binders: list[Binder] = field(default_factory=list)
    body: Expr = None


@dataclass
class EExists(Expr):
    binders: list[Binder] = field(default_factory=list)
    body: Expr = None


@dataclass
class EFun(Expr):
    binders: list[Binder] = field(default_factory=list)
    body: Expr = None


# -------------------------------------------------------------- declarations


@dataclass
class Decl:
    kind: str  # "type" | "predicate" | "function"
    name: str
    binders: list[Binder]
    contracts: list[tuple[str, Expr]]  # ("requires"|"ensures", expr)
    body: Expr | None
    span: Span = NO_SPAN
    alias: SpecType | None = None  # for kind == "type"
    result_type: SpecType | None = None
    keyword: str = ""  # surface keyword form, for pretty printing
    resolved_type: SpecType | None = None


@dataclass
class Goal:
    name: str
    body: Expr
    span: Span = NO_SPAN


@dataclass
class SpecAst:
    decls: list[Decl]
    goals: list[Goal]


def app_spine(e: Expr) -> tuple[Expr, list[Expr]]:
    """Unroll curried applications to (head, [args])."""
    args: list[Expr] = []
    while isinstance(e, EApp):
        args.append(e.arg)
        e = e.fn
    return e, list(reversed(args))


def same_structure(a, b) -> bool:
    """Structural AST equality, ignoring spans, inferred types and uids."""
    if type(a) is not type(b):
        return False
    if isinstance(a, (EVar,)):
        return a.name == b.name
    if isinstance(a, EInt):
        return a.value == b.value
    if isinstance(a, EFloat):
        return a.value == b.value
    if isinstance(a, (EBool, EString)):
        return a.value == b.value
    if isinstance(a, EBuiltin):
        return a.kind == b.kind
    if isinstance(a, EApp):
        return same_structure(a.fn, b.fn) and same_structure(a.arg, b.arg)
    if isinstance(a, ETuple):
        return len(a.items) == len(b.items) and all(
            same_structure(x, y) for x, y in zip(a.items, b.items)
        )
    if isinstance(a, ELet):
        return (a.name == b.name and same_structure(a.value, b.value)
                and same_structure(a.body, b.body))
    if isinstance(a, EIf):
        return (same_structure(a.cond, b.cond) and same_structure(a.then, b.then)
                and same_structure(a.els, b.els))
    if isinstance(a, EBinOp):
        return (a.op == b.op and same_structure(a.lhs, b.lhs)
                and same_structure(a.rhs, b.rhs))
    if isinstance(a, (EUnary,)):
        return a.op == b.op and same_structure(a.operand, b.operand)
    if isinstance(a, ENot):
        return same_structure(a.operand, b.operand)
    if isinstance(a, (EForall, EExists, EFun)):
        if len(a.binders) != len(b.binders):
            return False
        for x, y in zip(a.binders, b.binders):
            if x.name != y.name or str(x.ty) != str(y.ty):
                return False
        return same_structure(a.body, b.body)
    if isinstance(a, Decl):
        if (a.kind, a.name, a.keyword) != (b.kind, b.name, b.keyword):
            return False
        if len(a.binders) != len(b.binders):
            return False
        for x, y in zip(a.binders, b.binders):
            if x.name != y.name or str(x.ty) != str(y.ty):
                return False
        if len(a.contracts) != len(b.contracts):
            return False
        for (ka, ea), (kb, eb) in zip(a.contracts, b.contracts):
            if ka != kb or not same_structure(ea, eb):
                return False
        if str(a.alias) != str(b.alias) or str(a.result_type) != str(b.result_type):
            return False
        if (a.body is None) != (b.body is None):
            return False
        return a.body is None or same_structure(a.body, b.body)
    if isinstance(a, Goal):
        return a.name == b.name and same_structure(a.body, b.body)
    if isinstance(a, SpecAst):
        return (len(a.decls) == len(b.decls) and len(a.goals) == len(b.goals)
                and all(same_structure(x, y) for x, y in zip(a.decls, b.decls))
                and all(same_structure(x, y) for x, y in zip(a.goals, b.goals)))
    raise TypeError(f"unexpected node {type(a).__name__}")

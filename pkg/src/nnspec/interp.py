"""Reduce type-checked goals to quantifier-free normal form.

The reducer interprets built-ins (model/dataset loading, vector access),
inlines lets and user definitions, expands bounded integer quantifiers into
finite conjunctions, replaces universally quantified vectors by fresh scalar
input variables, and leaves model applications symbolic.  The result is a
:class:`GoalFormula`: prenex-universal input variables, a hypothesis
conjunction of linear atoms over them, and a conclusion formula over inputs
and model outputs.

All constants are exact rationals equal to their decimal source literals.
Distinct goals can be reduced concurrently; the model cache is the only
shared state and behaves as a write-once map.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from . import speclang as sl
from .formula import (
    Affine,
    FAtom,
    FALSE,
    Formula,
    LinearAtom,
    TRUE,
    conj,
    disj,
    eval_formula,
    implies,
    keys_of,
    negate,
)
from .nir import Graph, Tensor, forward, parse_onnx
from .speclang.ast import (
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
    TFloat,
    TInt,
    TVector,
)
from .speclang.typecheck import builtin_kind_for_name
from .svm import load_svm, svm_to_nir

__all__ = [
    "InterpError",
    "UnresolvedShape",
    "AlternatingQuantifiers",
    "NonLinearTerm",
    "DivisionByZeroConstant",
    "UnsupportedConstruct",
    "DatasetError",
    "RaggedRow",
    "NonNumeric",
    "Dataset",
    "ModelApp",
    "GoalFormula",
    "ModelCache",
    "Environment",
    "read_model",
    "read_dataset",
    "reduce_goal",
    "reduce",
    "split_goal",
    "eval_goal",
    "eval_goal_parts",
]


# ------------------------------------------------------------------ errors


class InterpError(Exception):
    def __init__(self, message: str, span: sl.Span | None = None):
        self.span = span
        prefix = f"{span}: " if span and span.line else ""
        super().__init__(prefix + message)
        self.message = message


class UnresolvedShape(InterpError):
    pass


class AlternatingQuantifiers(InterpError):
    pass


class NonLinearTerm(InterpError):
    pass


class DivisionByZeroConstant(InterpError):
    pass


class UnsupportedConstruct(InterpError):
    pass


class DatasetError(Exception):
    pass


class RaggedRow(DatasetError):
    def __init__(self, line: int):
        super().__init__(f"line {line}: row has a different number of features")
        self.line = line


class NonNumeric(DatasetError):
    def __init__(self, line: int, col: int):
        super().__init__(f"line {line}, column {col}: not a number")
        self.line = line
        self.col = col


# ------------------------------------------------------------- domain data


@dataclass(frozen=True)
class Dataset:
    """Labeled samples; features are exact decimals in file order."""

    rows: tuple[tuple[int, tuple[Fraction, ...]], ...]
    feature_dim: int | None

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class ModelApp:
    """A symbolic application of a model graph to affine argument terms."""

    app_id: int
    graph: Graph
    graph_name: str
    args: tuple[Affine, ...]
    n_outputs: int

    def output_key(self, component: int):
        return ("y", self.app_id, component)

    def output_vars(self) -> list:
        return [self.output_key(j) for j in range(self.n_outputs)]


@dataclass
class GoalFormula:
    """Prenex-universal goal: bounded inputs, linear hypothesis, conclusion."""

    name: str
    input_vars: list[tuple[str, str]]  # (name, "model-input" | "auxiliary")
    hypothesis: list[LinearAtom]
    conclusion: Formula
    model_apps: list[ModelApp]

    def var_names(self) -> list[str]:
        return [name for name, _role in self.input_vars]


# ------------------------------------------------------------ file loading


class ModelCache:
    """Write-once path -> Graph map; repeated reads return the same object."""

    def __init__(self):
        self._lock = threading.Lock()
        self._graphs: dict[str, Graph] = {}

    def read(self, path: str) -> Graph:
        key = os.path.abspath(path)
        with self._lock:
            cached = self._graphs.get(key)
        if cached is not None:
            return cached
        graph = _load_model_file(key)
        with self._lock:
            return self._graphs.setdefault(key, graph)


def _load_model_file(path: str) -> Graph:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if path.endswith(".json"):
        return svm_to_nir(load_svm(path))
    with open(path, "rb") as fh:
        return parse_onnx(fh.read())


_default_cache = ModelCache()


def read_model(path: str, cache: ModelCache | None = None) -> Graph:
    """Load an ONNX model (or SVM JSON, compiled to a graph), with caching."""
    return (cache or _default_cache).read(path)


def read_dataset(path: str) -> Dataset:
    """Parse a `label,f1,...,fN` CSV with no header into a Dataset."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    rows: list[tuple[int, tuple[Fraction, ...]]] = []
    feature_dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            try:
                label = int(cells[0])
            except ValueError:
                raise NonNumeric(line_no, 1) from None
            features = []
            for col, cell in enumerate(cells[1:], start=2):
                try:
                    features.append(Fraction(cell.strip()))
                except (ValueError, ZeroDivisionError):
                    raise NonNumeric(line_no, col) from None
            if feature_dim is None:
                feature_dim = len(features)
            elif len(features) != feature_dim:
                raise RaggedRow(line_no)
            rows.append((label, tuple(features)))
    return Dataset(tuple(rows), feature_dim)


# ------------------------------------------------------------------ values


@dataclass(frozen=True)
class VNum:
    affine: Affine


@dataclass(frozen=True)
class VInt:
    value: int


@dataclass(frozen=True)
class VBool:
    value: bool


@dataclass(frozen=True)
class VStr:
    value: str


@dataclass(frozen=True)
class VModel:
    graph: Graph
    name: str


@dataclass(frozen=True)
class VVec:
    items: tuple


@dataclass(frozen=True)
class VClosure:
    binders: tuple
    body: Expr
    env: "Env"
    name: str = ""


@dataclass(frozen=True)
class VFormulaV:
    formula: Formula


class _IntMarker:
    """Placeholder bound to an integer quantifier while bounds are scanned."""

    def __init__(self, name: str):
        self.name = name


class _VecMarker:
    """Placeholder bound to a vector quantifier while its shape is scanned."""

    def __init__(self, name: str):
        self.name = name


class Env:
    """Immutable chained scopes (name -> value)."""

    __slots__ = ("frame", "parent")

    def __init__(self, frame: dict, parent: "Env | None" = None):
        self.frame = frame
        self.parent = parent

    def bind(self, name: str, value) -> "Env":
        return Env({name: value}, self)

    def lookup(self, name: str):
        env: Env | None = self
        while env is not None:
            if name in env.frame:
                return env.frame[name]
            env = env.parent
        return None

    def lookup_qualified(self, name: str):
        value = self.lookup(name)
        if value is not None:
            return value
        short = name.rsplit(".", 1)[-1]
        if short != name:
            env: Env | None = self
            while env is not None:
                for key, val in env.frame.items():
                    if key.rsplit(".", 1)[-1] == short:
                        return val
                env = env.parent
        return None


def _to_formula(v) -> Formula:
    if isinstance(v, VBool):
        return TRUE if v.value else FALSE
    if isinstance(v, VFormulaV):
        return v.formula
    raise InterpError(f"expected a boolean value, got {type(v).__name__}")


def _wrap_formula(f: Formula):
    from .formula import const_value

    value = const_value(f)
    return VBool(value) if value is not None else VFormulaV(f)


def _const_of(v: VNum) -> Fraction | None:
    return v.affine.const if v.affine.is_constant() else None


_MAX_INLINE_DEPTH = 200


class Reducer:
    def __init__(self, base_env: Env, base_dir: str = ".",
                 cache: ModelCache | None = None):
        self.base_env = base_env
        self.base_dir = base_dir
        self.cache = cache or _default_cache
        self.input_vars: list[str] = []
        self.apps: list[ModelApp] = []
        self._names: set[str] = set()
        self._depth = 0
        # Set during shape/bound scans: speculative evaluation must not
        # create model applications as a side effect.
        self._scan_mode = False

    # -------------------------------------------------------- fresh names

    def _fresh(self, base: str) -> str:
        name = base
        while name in self._names:
            name += "'"
        self._names.add(name)
        return name

    def new_scalar(self, base: str):
        name = self._fresh(base)
        self.input_vars.append(name)
        return VNum(Affine.var(("x", name)))

    # --------------------------------------------------------- model apps

    def apply_model(self, model: VModel, vec: VVec, span) -> VVec:
        if self._scan_mode:
            raise InterpError("model application during shape analysis", span)
        args = []
        for item in vec.items:
            if isinstance(item, VInt):
                item = VNum(Affine.constant(item.value))
            if not isinstance(item, VNum):
                raise InterpError("model input vector must contain scalars", span)
            args.append(item.affine)
        expected = model.graph.input_dim
        if len(args) != expected:
            raise InterpError(
                f"model {model.name!r} expects {expected} inputs, got {len(args)}",
                span,
            )
        app = ModelApp(
            app_id=len(self.apps) + 1,
            graph=model.graph,
            graph_name=model.name,
            args=tuple(args),
            n_outputs=model.graph.output_dim,
        )
        self.apps.append(app)
        return VVec(tuple(
            VNum(Affine.var(app.output_key(j))) for j in range(app.n_outputs)
        ))

    # ---------------------------------------------------------- evaluation

    def eval(self, e: Expr, env: Env, univ: bool):
        self._depth += 1
        if self._depth > _MAX_INLINE_DEPTH:
            raise UnsupportedConstruct(
                "inlining depth exceeded (recursive definitions are not supported)",
                e.span,
            )
        try:
            return self._eval(e, env, univ)
        finally:
            self._depth -= 1

    def _eval(self, e: Expr, env: Env, univ: bool):
        if isinstance(e, EInt):
            return VInt(e.value)
        if isinstance(e, EFloat):
            return VNum(Affine.constant(e.value))
        if isinstance(e, EBool):
            return VBool(e.value)
        if isinstance(e, EString):
            return VStr(e.value)
        if isinstance(e, EVar):
            value = env.lookup_qualified(e.name)
            if value is None:
                kind = builtin_kind_for_name(e.name)
                if kind is not None:
                    return _BuiltinRef(kind)
                raise InterpError(f"unbound identifier {e.name!r}", e.span)
            if isinstance(value, (_IntMarker, _VecMarker)):
                raise UnresolvedShape(
                    f"quantified variable {e.name!r} used before its shape is known",
                    e.span,
                )
            return value
        if isinstance(e, EBuiltin):
            return _BuiltinRef(e.kind)
        if isinstance(e, ELet):
            value = self.eval(e.value, env, univ=False)
            return self.eval(e.body, env.bind(e.name, value), univ)
        if isinstance(e, EIf):
            cond = self.eval(e.cond, env, univ=False)
            if isinstance(cond, VBool):
                return self.eval(e.then if cond.value else e.els, env, univ)
            raise UnsupportedConstruct(
                "conditional on a condition that is not a closed term", e.span
            )
        if isinstance(e, ETuple):
            return VVec(tuple(self.eval(i, env, univ=False) for i in e.items))
        if isinstance(e, ENot):
            inner = self.eval(e.operand, env, univ=False)
            if isinstance(inner, VBool):
                return VBool(not inner.value)
            return VFormulaV(negate(_to_formula(inner)))
        if isinstance(e, EUnary):
            operand = self.eval(e.operand, env, univ=False)
            if e.op == "-":
                if isinstance(operand, VInt):
                    return VInt(-operand.value)
                raise InterpError("unary - applies to ints", e.span)
            if isinstance(operand, VNum):
                return VNum(operand.affine.scale(-1))
            raise InterpError("unary .- applies to floats", e.span)
        if isinstance(e, EBinOp):
            return self._eval_binop(e, env, univ)
        if isinstance(e, EForall):
            return self._eval_forall(e, env, univ)
        if isinstance(e, EExists):
            raise AlternatingQuantifiers(
                "existential quantification is not supported", e.span
            )
        if isinstance(e, EFun):
            return VClosure(tuple(e.binders), e.body, env)
        if isinstance(e, EApp):
            return self._eval_app(e, env, univ)
        raise InterpError(f"cannot interpret {type(e).__name__}", e.span)

    # -------------------------------------------------------- applications

    def _eval_app(self, e: EApp, env: Env, univ: bool):
        head, arg_exprs = sl.app_spine(e)
        fn = self.eval(head, env, univ=False)
        args = None
        if isinstance(fn, _BuiltinRef):
            return self._eval_builtin(fn.kind, arg_exprs, env, univ, e.span)
        args = [self.eval(a, env, univ=False) for a in arg_exprs]
        return self._apply_value(fn, args, env, univ, e.span)

    def _apply_value(self, fn, args: list, env: Env, univ: bool, span):
        while args:
            if isinstance(fn, VClosure):
                take = min(len(fn.binders), len(args))
                inner = fn.env
                for binder, value in zip(fn.binders[:take], args[:take]):
                    inner = inner.bind(binder.name, value)
                if take < len(fn.binders):
                    return VClosure(fn.binders[take:], fn.body, inner, fn.name)
                args = args[take:]
                fn = self.eval(fn.body, inner, univ if not args else False)
            elif isinstance(fn, _BuiltinRef):
                raise InterpError(
                    "built-ins cannot be partially applied", span
                )
            else:
                raise InterpError(
                    f"cannot apply a {type(fn).__name__} value", span
                )
        return fn

    _BUILTIN_ARITY = {
        "ReadModel": 1, "ReadDataset": 1, "Length": 1, "HasLength": 2,
        "Index": 2, "ModelApply": 2, "Mapi": 2, "DatasetForall": 2,
    }

    def _eval_builtin(self, kind: str, arg_exprs: list, env: Env,
                      univ: bool, span):
        expected = self._BUILTIN_ARITY[kind]
        if len(arg_exprs) != expected:
            raise InterpError(
                f"built-in {kind} expects {expected} arguments, got {len(arg_exprs)}",
                span,
            )
        args = [self.eval(a, env, univ=False) for a in arg_exprs]
        if kind == "ReadModel":
            (path,) = args
            full = os.path.join(self.base_dir, path.value)
            return VModel(read_model(full, self.cache), path.value)
        if kind == "ReadDataset":
            (path,) = args
            full = os.path.join(self.base_dir, path.value)
            dataset = read_dataset(full)
            rows = tuple(
                VVec((VInt(label),
                      VVec(tuple(VNum(Affine.constant(f)) for f in feats))))
                for label, feats in dataset.rows
            )
            return VVec(rows)
        if kind == "Length":
            (vec,) = args
            self._require_vec(vec, span)
            return VInt(len(vec.items))
        if kind == "HasLength":
            vec, n = args
            self._require_vec(vec, span)
            return VBool(len(vec.items) == self._require_int(n, span))
        if kind == "Index":
            vec, idx = args
            self._require_vec(vec, span)
            i = self._require_int(idx, span)
            if not 0 <= i < len(vec.items):
                raise InterpError(
                    f"index {i} out of range for vector of length {len(vec.items)}",
                    span,
                )
            return vec.items[i]
        if kind == "ModelApply":
            model, vec = args
            if not isinstance(model, VModel):
                raise InterpError("left operand of @@ must be a model", span)
            self._require_vec(vec, span)
            return self.apply_model(model, vec, span)
        if kind == "Mapi":
            vec, fn = args
            self._require_vec(vec, span)
            items = tuple(
                self._apply_value(fn, [VInt(i), item], env, False, span)
                for i, item in enumerate(vec.items)
            )
            return VVec(items)
        if kind == "DatasetForall":
            rows, fn = args
            self._require_vec(rows, span)
            conjuncts = []
            for row in rows.items:
                label, features = row.items
                result = self._apply_value(fn, [label, features], env, univ, span)
                conjuncts.append(_to_formula(result))
            return _wrap_formula(conj(conjuncts))
        raise InterpError(f"unknown builtin {kind}", span)

    def _require_vec(self, v, span) -> VVec:
        if isinstance(v, (_VecMarker,)):
            raise UnresolvedShape(
                f"vector {v.name!r} has no statically known shape", span
            )
        if not isinstance(v, VVec):
            raise InterpError(f"expected a vector, got {type(v).__name__}", span)
        return v

    def _require_int(self, v, span) -> int:
        if not isinstance(v, VInt):
            raise InterpError("expected a closed integer", span)
        return v.value

    # ---------------------------------------------------------- operators

    def _eval_binop(self, e: EBinOp, env: Env, univ: bool):
        op = e.op
        if op == "->":
            lhs = self.eval(e.lhs, env, univ=False)
            if isinstance(lhs, VBool) and not lhs.value:
                return VBool(True)
            rhs = self.eval(e.rhs, env, univ)
            if isinstance(lhs, VBool):
                return rhs
            rhs_f = _to_formula(rhs)
            return VFormulaV(implies(_to_formula(lhs), rhs_f))
        if op in ("/\\", "\\/"):
            lhs = self.eval(e.lhs, env, univ if op == "/\\" else False)
            rhs = self.eval(e.rhs, env, univ if op == "/\\" else False)
            if isinstance(lhs, VBool) and isinstance(rhs, VBool):
                if op == "/\\":
                    return VBool(lhs.value and rhs.value)
                return VBool(lhs.value or rhs.value)
            builder = conj if op == "/\\" else disj
            return VFormulaV(builder([_to_formula(lhs), _to_formula(rhs)]))
        lhs = self.eval(e.lhs, env, univ=False)
        rhs = self.eval(e.rhs, env, univ=False)
        if op in ("=", "<>"):
            return self._eval_eq(op, lhs, rhs, e.span)
        if op in ("<=", "<", ">=", ">"):
            a = self._require_int(lhs, e.span)
            b = self._require_int(rhs, e.span)
            return VBool({"<=": a <= b, "<": a < b, ">=": a >= b, ">": a > b}[op])
        if op in ("+", "-", "*", "/"):
            if isinstance(lhs, VVec) or isinstance(rhs, VVec):
                return self._eval_vector_arith(op, lhs, rhs, e.span)
            a = self._require_int(lhs, e.span)
            b = self._require_int(rhs, e.span)
            if op == "+":
                return VInt(a + b)
            if op == "-":
                return VInt(a - b)
            if op == "*":
                return VInt(a * b)
            if b == 0:
                raise DivisionByZeroConstant("integer division by zero", e.span)
            return VInt(a // b)
        if op in (".+", ".-", ".*", "./"):
            return self._eval_float_arith(op, lhs, rhs, e)
        if op in (".<=", ".<", ".>=", ".>"):
            if not isinstance(lhs, VNum) or not isinstance(rhs, VNum):
                raise InterpError(f"{op} applies to floats", e.span)
            atom = LinearAtom(op[1:], lhs.affine, rhs.affine)
            if lhs.affine.is_constant() and rhs.affine.is_constant():
                return VBool(atom.eval({}))
            return VFormulaV(FAtom(atom))
        raise InterpError(f"unhandled operator {op}", e.span)

    def _eval_eq(self, op: str, lhs, rhs, span):
        for a, b in ((lhs, rhs), (rhs, lhs)):
            if isinstance(a, VInt) and isinstance(b, VInt):
                eq = a.value == b.value
                return VBool(eq if op == "=" else not eq)
            if isinstance(a, VBool) and isinstance(b, VBool):
                eq = a.value == b.value
                return VBool(eq if op == "=" else not eq)
            if isinstance(a, VStr) and isinstance(b, VStr):
                eq = a.value == b.value
                return VBool(eq if op == "=" else not eq)
        raise InterpError("= and <> compare ints, bools or strings", span)

    def _eval_vector_arith(self, op: str, lhs, rhs, span):
        if op not in ("+", "-") or not isinstance(lhs, VVec) or not isinstance(rhs, VVec):
            raise InterpError(f"operator {op} is not defined on vectors", span)
        if len(lhs.items) != len(rhs.items):
            raise InterpError(
                f"vector lengths differ: {len(lhs.items)} vs {len(rhs.items)}", span
            )
        out = []
        for a, b in zip(lhs.items, rhs.items):
            if not isinstance(a, VNum) or not isinstance(b, VNum):
                raise InterpError("vector arithmetic needs scalar elements", span)
            out.append(VNum(a.affine + b.affine if op == "+" else a.affine - b.affine))
        return VVec(tuple(out))

    def _eval_float_arith(self, op: str, lhs, rhs, e: EBinOp):
        if not isinstance(lhs, VNum) or not isinstance(rhs, VNum):
            raise InterpError(f"{op} applies to floats", e.span)
        a, b = lhs.affine, rhs.affine
        if op == ".+":
            return VNum(a + b)
        if op == ".-":
            return VNum(a - b)
        if op == ".*":
            if a.is_constant():
                return VNum(b.scale(a.const))
            if b.is_constant():
                return VNum(a.scale(b.const))
            raise NonLinearTerm(
                f"product of two non-constant terms: {sl.pretty_expr(e)}", e.span
            )
        if b.is_constant():
            if b.const == 0:
                raise DivisionByZeroConstant("division by the constant 0", e.span)
            return VNum(a.scale(Fraction(1) / b.const))
        raise NonLinearTerm(
            f"division by a non-constant term: {sl.pretty_expr(e)}", e.span
        )

    # --------------------------------------------------------- quantifiers

    def _eval_forall(self, e: EForall, env: Env, univ: bool):
        return self._forall_binders(list(e.binders), e.body, env, univ, e.span)

    def _forall_binders(self, binders: list, body: Expr, env: Env,
                        univ: bool, span):
        if not binders:
            return self.eval(body, env, univ)
        binder, rest = binders[0], binders[1:]
        ty = binder.resolved
        if isinstance(ty, TInt):
            return self._expand_int_forall(binder, rest, body, env, univ, span)
        if not univ:
            raise AlternatingQuantifiers(
                f"universal quantifier over {binder.name!r} in a non-prenex position",
                span,
            )
        if isinstance(ty, TFloat):
            value = self.new_scalar(binder.name)
            return self._forall_binders(rest, body, env.bind(binder.name, value),
                                        univ, span)
        if isinstance(ty, TVector) and isinstance(ty.elem, TFloat):
            length = self._scan_vector_length(binder.name, body, env, span)
            items = tuple(
                self.new_scalar(f"{binder.name}[{i}]") for i in range(length)
            )
            return self._forall_binders(rest, body,
                                        env.bind(binder.name, VVec(items)),
                                        univ, span)
        raise UnsupportedConstruct(
            f"cannot quantify over values of type {ty}", span
        )

    # Bounded integer quantifier: scan the implication spine for bounds on
    # the marker, then expand to a finite conjunction.
    def _expand_int_forall(self, binder, rest, body, env: Env, univ, span):
        marker = _IntMarker(binder.name)
        prev = self._scan_mode
        self._scan_mode = True
        try:
            lo, hi = self._scan_int_bounds(body, env.bind(binder.name, marker),
                                           marker)
        finally:
            self._scan_mode = prev
        if lo is None or hi is None:
            raise UnresolvedShape(
                f"cannot determine finite bounds for integer quantifier "
                f"{binder.name!r}",
                span,
            )
        conjuncts = []
        for k in range(lo, hi + 1):
            inst = self._forall_binders(
                rest, body, env.bind(binder.name, VInt(k)), univ, span
            )
            conjuncts.append(_to_formula(inst))
        return _wrap_formula(conj(conjuncts))

    def _scan_int_bounds(self, body: Expr, env: Env, marker: _IntMarker,
                         depth: int = 0):
        lo = None
        hi = None

        def is_marker(expr: Expr) -> bool:
            return (isinstance(expr, EVar)
                    and env.lookup_qualified(expr.name) is marker)

        def closed_int(expr: Expr, scan_env: Env):
            try:
                value = self.eval(expr, scan_env, univ=False)
            except InterpError:
                return None
            return value.value if isinstance(value, VInt) else None

        def note(cmp: str, bound: int, marker_on_left: bool):
            nonlocal lo, hi
            if not marker_on_left:
                cmp = {"<=": ">=", "<": ">", ">=": "<=", ">": "<", "=": "="}[cmp]
            if cmp == "<=":
                hi = bound if hi is None else min(hi, bound)
            elif cmp == "<":
                hi = bound - 1 if hi is None else min(hi, bound - 1)
            elif cmp == ">=":
                lo = bound if lo is None else max(lo, bound)
            elif cmp == ">":
                lo = bound + 1 if lo is None else max(lo, bound + 1)
            elif cmp == "=":
                lo = bound if lo is None else max(lo, bound)
                hi = bound if hi is None else min(hi, bound)

        def scan_conjunct(expr: Expr, scan_env: Env, depth: int):
            if isinstance(expr, EBinOp) and expr.op == "/\\":
                scan_conjunct(expr.lhs, scan_env, depth)
                scan_conjunct(expr.rhs, scan_env, depth)
                return
            if isinstance(expr, EBinOp) and expr.op in ("<=", "<", ">=", ">", "="):
                if is_marker(expr.lhs):
                    bound = closed_int(expr.rhs, scan_env)
                    if bound is not None:
                        note(expr.op, bound, True)
                elif is_marker(expr.rhs):
                    bound = closed_int(expr.lhs, scan_env)
                    if bound is not None:
                        note(expr.op, bound, False)
                return
            if isinstance(expr, EApp) and depth < 8:
                head, arg_exprs = sl.app_spine(expr)
                if not any(is_marker(a) for a in arg_exprs):
                    return
                if not isinstance(head, EVar):
                    return
                fn = scan_env.lookup_qualified(head.name)
                if fn is None:
                    fn = self.base_env.lookup_qualified(head.name)
                if isinstance(fn, VClosure) and len(fn.binders) == len(arg_exprs):
                    inner = fn.env
                    for b, arg in zip(fn.binders, arg_exprs):
                        if is_marker(arg):
                            inner = inner.bind(b.name, marker)
                        else:
                            try:
                                inner = inner.bind(
                                    b.name, self.eval(arg, scan_env, univ=False))
                            except InterpError:
                                return
                    scan_spine(fn.body, inner, depth + 1)

        def scan_spine(expr: Expr, scan_env: Env, depth: int):
            while True:
                if isinstance(expr, EBinOp) and expr.op == "->":
                    scan_conjunct(expr.lhs, scan_env, depth)
                    expr = expr.rhs
                elif isinstance(expr, EBinOp) and expr.op == "/\\":
                    # A bare conjunction of bounds (predicate bodies).
                    scan_conjunct(expr, scan_env, depth)
                    return
                elif isinstance(expr, EBinOp) and expr.op in ("<=", "<", ">=", ">", "="):
                    scan_conjunct(expr, scan_env, depth)
                    return
                else:
                    return

        scan_spine(body, env, depth)
        return lo, hi

    def _scan_vector_length(self, name: str, body: Expr, env: Env, span):
        marker = _VecMarker(name)
        scan_env = env.bind(name, marker)
        prev = self._scan_mode
        self._scan_mode = True
        try:
            return self._scan_vector_length_inner(marker, scan_env, body, span)
        finally:
            self._scan_mode = prev

    def _scan_vector_length_inner(self, marker: "_VecMarker", scan_env: Env,
                                  body: Expr, span):
        name = marker.name

        def is_marker(expr: Expr) -> bool:
            return (isinstance(expr, EVar)
                    and scan_env.lookup_qualified(expr.name) is marker)

        has_length: list[int] = []
        model_arity: list[int] = []

        def scan(expr: Expr, local_env: Env, depth: int):
            if isinstance(expr, EApp):
                head, arg_exprs = sl.app_spine(expr)
                kind = None
                if isinstance(head, EBuiltin):
                    kind = head.kind
                elif isinstance(head, EVar) and local_env.lookup_qualified(head.name) is None:
                    kind = builtin_kind_for_name(head.name)
                if kind == "HasLength" and len(arg_exprs) == 2 and is_marker(arg_exprs[0]):
                    try:
                        n = self.eval(arg_exprs[1], local_env, univ=False)
                        if isinstance(n, VInt):
                            has_length.append(n.value)
                    except InterpError:
                        pass
                elif kind == "ModelApply" and len(arg_exprs) == 2 and is_marker(arg_exprs[1]):
                    try:
                        model = self.eval(arg_exprs[0], local_env, univ=False)
                        if isinstance(model, VModel):
                            model_arity.append(model.graph.input_dim)
                    except InterpError:
                        pass
                elif kind is None and isinstance(head, EVar) and depth < 8:
                    if any(is_marker(a) for a in arg_exprs):
                        fn = local_env.lookup_qualified(head.name)
                        if isinstance(fn, VClosure) and len(fn.binders) == len(arg_exprs):
                            inner = fn.env
                            ok = True
                            for b, arg in zip(fn.binders, arg_exprs):
                                if is_marker(arg):
                                    inner = inner.bind(b.name, marker)
                                else:
                                    try:
                                        inner = inner.bind(
                                            b.name,
                                            self.eval(arg, local_env, univ=False))
                                    except InterpError:
                                        ok = False
                                        break
                            if ok:
                                scan(fn.body, inner, depth + 1)
                for a in arg_exprs:
                    scan(a, local_env, depth)
                return
            if isinstance(expr, ELet):
                scan(expr.value, local_env, depth)
                try:
                    bound = self.eval(expr.value, local_env, univ=False)
                    local_env = local_env.bind(expr.name, bound)
                except InterpError:
                    pass
                scan(expr.body, local_env, depth)
                return
            if isinstance(expr, (EForall, EExists, EFun)):
                scan(expr.body, local_env, depth)
                return
            for attr in ("cond", "then", "els", "lhs", "rhs", "operand"):
                child = getattr(expr, attr, None)
                if isinstance(child, Expr):
                    scan(child, local_env, depth)
            for child in getattr(expr, "items", []) or []:
                if isinstance(child, Expr):
                    scan(child, local_env, depth)

        scan(body, scan_env, 0)
        if has_length:
            return has_length[0]
        if model_arity:
            return model_arity[0]
        raise UnresolvedShape(
            f"universal quantification over vector {name!r} is unsupported: "
            "its shape cannot be determined statically",
            span,
        )


class _BuiltinRef:
    __slots__ = ("kind",)

    def __init__(self, kind: str):
        self.kind = kind


# ----------------------------------------------------------- environments


class Environment:
    """Evaluated declarations plus loading context for goal reduction."""

    def __init__(self, ast: sl.SpecAst, base_dir: str = ".",
                 cache: ModelCache | None = None):
        self.base_dir = base_dir
        self.cache = cache or _default_cache
        prelude_ast, _env = sl.prelude()
        frame: dict = {}
        env = Env(frame)
        reducer = Reducer(env, base_dir, self.cache)
        for decl in list(prelude_ast.decls) + list(ast.decls):
            if decl.kind == "type":
                continue
            if decl.binders:
                frame[decl.name] = VClosure(tuple(decl.binders), decl.body, env,
                                            decl.name)
            else:
                frame[decl.name] = reducer.eval(decl.body, env, univ=False)
                if reducer.apps:
                    raise UnsupportedConstruct(
                        "model applications must occur inside goals",
                        decl.span,
                    )
        self.env = env
        self.ast = ast

    def goal(self, name: str) -> sl.Goal:
        for g in self.ast.goals:
            if g.name == name:
                return g
        raise KeyError(name)


def reduce(goal_body: Expr, env: Environment, name: str = "goal") -> GoalFormula:
    """Reduce one type-checked goal body to normal form."""
    reducer = Reducer(env.env, env.base_dir, env.cache)
    result = reducer.eval(goal_body, env.env, univ=True)
    formula = _to_formula(result) if not isinstance(result, VBool) else (
        TRUE if result.value else FALSE)
    goal = GoalFormula(
        name=name,
        input_vars=[(v, "auxiliary") for v in reducer.input_vars],
        hypothesis=[],
        conclusion=formula,
        model_apps=list(reducer.apps),
    )
    _assign_roles(goal)
    return normalize_goal(goal)


def reduce_goal(env: Environment, goal: sl.Goal) -> GoalFormula:
    return reduce(goal.body, env, goal.name)


def _assign_roles(goal: GoalFormula):
    feeding: set[str] = set()
    for app in goal.model_apps:
        for arg in app.args:
            for key, _coeff in arg.coeffs:
                if key[0] == "x":
                    feeding.add(key[1])
    goal.input_vars = [
        (name, "model-input" if name in feeding else "auxiliary")
        for name, _role in goal.input_vars
    ]


def _input_only(atom: LinearAtom) -> bool:
    return all(key[0] == "x" for key in atom.keys())


def normalize_goal(goal: GoalFormula) -> GoalFormula:
    """Hoist input-only antecedent atoms of the outer implication chain
    into the hypothesis conjunction."""
    from .formula import FAnd, FImplies

    hypothesis = list(goal.hypothesis)
    conclusion = goal.conclusion
    while isinstance(conclusion, FImplies):
        lhs = conclusion.lhs
        conjuncts = list(lhs.items) if isinstance(lhs, FAnd) else [lhs]
        if not all(isinstance(c, FAtom) and _input_only(c.atom) for c in conjuncts):
            break
        hypothesis.extend(c.atom for c in conjuncts)
        conclusion = conclusion.rhs
    return GoalFormula(goal.name, goal.input_vars, hypothesis, conclusion,
                       goal.model_apps)


# ------------------------------------------------------------- goal splits


def _app_x_deps(goal: GoalFormula) -> dict[int, set]:
    """Transitive input-variable support of every model application."""
    deps: dict[int, set] = {}
    by_id = {app.app_id: app for app in goal.model_apps}
    for app in goal.model_apps:  # creation order: args only mention earlier apps
        support: set = set()
        for arg in app.args:
            for key, _c in arg.coeffs:
                if key[0] == "x":
                    support.add(key[1])
                else:
                    support |= deps[key[1]]
        deps[app.app_id] = support
    return deps


def _tokens_of(formula_keys, deps) -> set:
    tokens: set = set()
    for key in formula_keys:
        if key[0] == "x":
            tokens.add(("x", key[1]))
        else:
            tokens.add(("app", key[1]))
            for name in deps[key[1]]:
                tokens.add(("x", name))
    return tokens


def split_goal(goal: GoalFormula) -> list[GoalFormula]:
    """Split a conjunction conclusion into variable-disjoint subgoals.

    Each top-level conjunct lands in the connected component of the input
    variables and model applications it touches; hypothesis atoms follow
    their variables.  Sound when every component hypothesis is feasible
    (the pipeline checks feasibility before reporting results).
    """
    from .formula import FAnd

    conclusion = goal.conclusion
    items = list(conclusion.items) if isinstance(conclusion, FAnd) else [conclusion]
    if len(items) <= 1 and not goal.hypothesis:
        return [goal]

    deps = _app_x_deps(goal)
    parent: dict = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    item_tokens = []
    for item in items:
        tokens = _tokens_of(keys_of(item), deps)
        item_tokens.append(tokens)
        first = None
        for tok in tokens:
            if first is None:
                first = tok
            else:
                union(first, tok)
    hyp_tokens = []
    for atom in goal.hypothesis:
        tokens = _tokens_of(atom.keys(), deps)
        hyp_tokens.append(tokens)
        first = None
        for tok in tokens:
            if first is None:
                first = tok
            else:
                union(first, tok)
    # Tie every app to its argument variables.
    for app in goal.model_apps:
        tokens = list(_tokens_of([("y", app.app_id, 0)], deps))
        for tok in tokens[1:]:
            union(tokens[0], tok)

    groups: dict = {}
    order: list = []
    for idx, tokens in enumerate(item_tokens):
        root = find(next(iter(tokens))) if tokens else ("item", idx)
        if root not in groups:
            groups[root] = {"items": [], "hyp": []}
            order.append(root)
        groups[root]["items"].append(items[idx])
    for idx, tokens in enumerate(hyp_tokens):
        root = find(next(iter(tokens))) if tokens else None
        if root is None:
            continue
        if root not in groups:
            groups[root] = {"items": [], "hyp": []}
            order.append(root)
        groups[root]["hyp"].append(goal.hypothesis[idx])

    if len(groups) <= 1:
        return [normalize_goal(goal)]

    out = []
    for pos, root in enumerate(order):
        group = groups[root]
        group_keys: set = set()
        for item in group["items"]:
            group_keys |= _tokens_of(keys_of(item), deps)
        for atom in group["hyp"]:
            group_keys |= _tokens_of(atom.keys(), deps)
        var_names = {tok[1] for tok in group_keys if tok[0] == "x"}
        app_ids = {tok[1] for tok in group_keys if tok[0] == "app"}
        sub = GoalFormula(
            name=f"{goal.name}_{pos}",
            input_vars=[(n, r) for n, r in goal.input_vars if n in var_names],
            hypothesis=group["hyp"],
            conclusion=conj(group["items"]),
            model_apps=[a for a in goal.model_apps if a.app_id in app_ids],
        )
        out.append(normalize_goal(sub))
    return out


# -------------------------------------------------------------- evaluation


def _valuation_with_outputs(goal: GoalFormula, valuation) -> dict:
    values: dict = {("x", name): Fraction(v) for name, v in valuation.items()}
    for app in goal.model_apps:
        arg_values = [arg.eval(values) for arg in app.args]
        outputs = forward(app.graph, Tensor.vector(arg_values))
        flat = [v for t in outputs for v in t.data]
        for j, v in enumerate(flat):
            values[app.output_key(j)] = v
    return values


def eval_goal_parts(goal: GoalFormula, valuation) -> tuple[bool, bool]:
    """(hypothesis holds, conclusion holds) under a named input valuation."""
    values = _valuation_with_outputs(goal, valuation)
    hyp = all(atom.eval(values) for atom in goal.hypothesis)
    concl = eval_formula(goal.conclusion, values)
    return hyp, concl


def eval_goal(goal: GoalFormula, valuation) -> bool:
    hyp, concl = eval_goal_parts(goal, valuation)
    return (not hyp) or concl

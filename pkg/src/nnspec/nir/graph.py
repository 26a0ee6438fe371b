"""Operator DAG over exact-rational tensors.

Graphs are immutable after construction (build through :class:`GraphBuilder`),
so they can be shared and evaluated concurrently.  Node operands always refer
to earlier node ids, which makes the node list itself a topological order and
rules out cycles by construction.

Supported operators: Input, Constant, Add, Sub, Mul, Div, Concat, Gather,
Gemm, Relu, Sign, Exp.  Exp is evaluated with 128-bit interval arithmetic and
taints its results as approximate; everything else is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath

from ..rational import mpf_to_fraction

__all__ = [
    "NirError",
    "ShapeMismatch",
    "DivisionByZero",
    "UnsupportedOperator",
    "MalformedModel",
    "Tensor",
    "Node",
    "Graph",
    "GraphBuilder",
    "SUPPORTED_OPS",
    "topo_order",
    "infer_shapes",
    "forward",
    "subst_input",
    "isomorphic",
    "dump",
]


class NirError(Exception):
    pass


class ShapeMismatch(NirError):
    pass


class DivisionByZero(NirError):
    pass


class UnsupportedOperator(NirError):
    def __init__(self, op_name: str):
        super().__init__(f"unsupported operator: {op_name}")
        self.op_name = op_name


class MalformedModel(NirError):
    pass


SUPPORTED_OPS = frozenset(
    ["Input", "Constant", "Add", "Sub", "Mul", "Div", "Concat", "Gather",
     "Gemm", "Sign", "Relu", "Exp"]
)

# Interval context for Exp; prec is set once at import and never mutated,
# so concurrent forward() calls can share it.
_IV = mpmath.iv
_IV.prec = 128


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot build exact tensor element from {type(x).__name__}")


@dataclass(frozen=True)
class Tensor:
    """Row-major exact-rational tensor; `exact` is False past an Exp node."""

    shape: tuple[int, ...]
    data: tuple[Fraction, ...]
    exact: bool = True

    def __post_init__(self):
        size = 1
        for d in self.shape:
            if d <= 0:
                raise ShapeMismatch(f"non-positive dimension in shape {self.shape}")
            size *= d
        if len(self.data) != size:
            raise ShapeMismatch(
                f"data length {len(self.data)} does not match shape {self.shape}"
            )

    @staticmethod
    def vector(values: Iterable) -> "Tensor":
        data = tuple(_as_fraction(v) for v in values)
        return Tensor((len(data),), data)

    @staticmethod
    def matrix(rows: Sequence[Sequence]) -> "Tensor":
        m = len(rows)
        n = len(rows[0]) if m else 0
        data = []
        for row in rows:
            if len(row) != n:
                raise ShapeMismatch("ragged matrix rows")
            data.extend(_as_fraction(v) for v in row)
        return Tensor((m, n), tuple(data))

    @staticmethod
    def scalar(value) -> "Tensor":
        return Tensor((1,), (_as_fraction(value),))

    @property
    def size(self) -> int:
        return len(self.data)

    def is_scalar(self) -> bool:
        return self.size == 1

    def tolist(self) -> list[Fraction]:
        return list(self.data)

    def matrix_rows(self) -> list[list[Fraction]]:
        if len(self.shape) != 2:
            raise ShapeMismatch(f"not a matrix: shape {self.shape}")
        m, n = self.shape
        return [list(self.data[i * n:(i + 1) * n]) for i in range(m)]


@dataclass(frozen=True)
class Node:
    """One operator application; `inputs` are ids of earlier nodes."""

    op: str
    inputs: tuple[int, ...] = ()
    attrs: tuple[tuple[str, object], ...] = ()
    shape: tuple[int, ...] | None = None

    def attr(self, name: str, default=None):
        for key, value in self.attrs:
            if key == name:
                return value
        return default


# Per-op attribute defaults, materialized at construction so that two nodes
# built with and without explicit defaults compare equal.
_ATTR_DEFAULTS: dict[str, dict[str, object]] = {
    "Concat": {"axis": 0},
    "Gather": {"axis": 0},
    "Gemm": {
        "trans_a": False,
        "trans_b": False,
        "alpha": Fraction(1),
        "beta": Fraction(1),
    },
}


def _attrs(op: str, d: dict) -> tuple[tuple[str, object], ...]:
    merged = dict(_ATTR_DEFAULTS.get(op, {}))
    merged.update(d)
    if op == "Gemm":
        merged["trans_a"] = bool(merged["trans_a"])
        merged["trans_b"] = bool(merged["trans_b"])
        merged["alpha"] = Fraction(merged["alpha"])
        merged["beta"] = Fraction(merged["beta"])
    if op == "Gather":
        merged["indices"] = tuple(int(i) for i in merged["indices"])
    return tuple(sorted(merged.items()))


@dataclass(frozen=True)
class Graph:
    """Shape-annotated operator DAG with one Input node and ordered outputs."""

    nodes: tuple[Node, ...]
    input_node: int
    outputs: tuple[int, ...]
    name: str = ""

    def __post_init__(self):
        for nid, node in enumerate(self.nodes):
            if node.op not in SUPPORTED_OPS:
                raise UnsupportedOperator(node.op)
            for op_in in node.inputs:
                if not 0 <= op_in < nid:
                    raise MalformedModel(
                        f"node {nid} operand {op_in} does not precede it"
                    )
        inputs = [i for i, n in enumerate(self.nodes) if n.op == "Input"]
        if inputs != [self.input_node]:
            raise MalformedModel("graph must contain exactly one Input node")
        for out in self.outputs:
            if not 0 <= out < len(self.nodes):
                raise MalformedModel(f"output {out} is not a node")

    def node(self, nid: int) -> Node:
        return self.nodes[nid]

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.nodes[self.input_node].attr("shape")

    @property
    def input_dim(self) -> int:
        shape = self.input_shape
        n = 1
        for d in shape:
            n *= d
        return n

    @property
    def output_dim(self) -> int:
        total = 0
        for out in self.outputs:
            shape = self.nodes[out].shape
            n = 1
            for d in shape:
                n *= d
            total += n
        return total

    def count_op(self, op: str) -> int:
        return sum(1 for n in self.nodes if n.op == op)


def _infer_node_shape(node: Node, operand_shapes: list[tuple[int, ...]],
                      operand_ops: list[str]) -> tuple[int, ...]:
    op = node.op
    if op == "Input":
        shape = node.attr("shape")
        if shape is None:
            raise ShapeMismatch("Input node has no shape attribute")
        return tuple(shape)
    if op == "Constant":
        return node.attr("tensor").shape
    if op in ("Add", "Sub", "Mul", "Div"):
        a, b = operand_shapes
        if a == b:
            return a
        # Broadcast is only allowed against a scalar Constant.
        if b in ((1,), ()) and operand_ops[1] == "Constant":
            return a
        if a in ((1,), ()) and operand_ops[0] == "Constant":
            return b
        raise ShapeMismatch(f"{op}: incompatible shapes {a} and {b}")
    if op == "Concat":
        axis = node.attr("axis", 0)
        rank = len(operand_shapes[0])
        if any(len(s) != rank for s in operand_shapes):
            raise ShapeMismatch("Concat operands differ in rank")
        if not 0 <= axis < rank:
            raise ShapeMismatch(f"Concat axis {axis} out of range for rank {rank}")
        for dim in range(rank):
            if dim != axis and len({s[dim] for s in operand_shapes}) != 1:
                raise ShapeMismatch("Concat operands differ off the concat axis")
        out = list(operand_shapes[0])
        out[axis] = sum(s[axis] for s in operand_shapes)
        return tuple(out)
    if op == "Gather":
        indices = node.attr("indices")
        axis = node.attr("axis", 0)
        (src,) = operand_shapes
        if not 0 <= axis < len(src):
            raise ShapeMismatch(f"Gather axis {axis} out of range")
        for idx in indices:
            if not 0 <= idx < src[axis]:
                raise ShapeMismatch(f"Gather index {idx} out of range for {src}")
        return src[:axis] + (len(indices),) + src[axis + 1:]
    if op == "Gemm":
        a = operand_shapes[0]
        b = operand_shapes[1]
        if node.attr("trans_a", False):
            if len(a) != 2:
                raise ShapeMismatch("Gemm transA requires a matrix operand")
            a = (a[1], a[0])
        if node.attr("trans_b", False):
            if len(b) != 2:
                raise ShapeMismatch("Gemm transB requires a matrix operand")
            b = (b[1], b[0])
        vector_lhs = len(a) == 1
        if vector_lhs:
            a = (1, a[0])
        if len(a) != 2 or len(b) != 2 or a[1] != b[0]:
            raise ShapeMismatch(f"Gemm: ({a}) x ({b}) do not conform")
        out = (a[0], b[1])
        result = (out[1],) if vector_lhs else out
        if len(node.inputs) == 3:
            c = operand_shapes[2]
            if c not in (result, (out[1],), (1,), ()):
                raise ShapeMismatch(f"Gemm bias shape {c} does not conform to {result}")
        return result
    if op in ("Relu", "Sign", "Exp"):
        return operand_shapes[0]
    raise UnsupportedOperator(op)


def topo_order(g: Graph) -> list[int]:
    """Topological order of node ids (the construction order is one)."""
    return list(range(len(g.nodes)))


def infer_shapes(g: Graph) -> Graph:
    """Recompute and annotate all shapes; rejects inconsistent annotations."""
    shapes: list[tuple[int, ...]] = []
    new_nodes = []
    for nid, node in enumerate(g.nodes):
        operand_shapes = [shapes[i] for i in node.inputs]
        operand_ops = [g.nodes[i].op for i in node.inputs]
        try:
            shape = _infer_node_shape(node, operand_shapes, operand_ops)
        except ShapeMismatch as e:
            raise ShapeMismatch(f"node {nid} ({node.op}): {e}") from None
        if node.shape is not None and tuple(node.shape) != shape:
            raise ShapeMismatch(
                f"node {nid} ({node.op}): annotated {node.shape}, inferred {shape}"
            )
        shapes.append(shape)
        new_nodes.append(replace(node, shape=shape))
    return Graph(tuple(new_nodes), g.input_node, g.outputs, g.name)


class GraphBuilder:
    """Append-only constructor enforcing operands-before-node and shapes."""

    def __init__(self, name: str = ""):
        self.name = name
        self._nodes: list[Node] = []
        self._input: int | None = None

    def add(self, op: str, inputs: Sequence[int] = (), **attrs) -> int:
        if op not in SUPPORTED_OPS:
            raise UnsupportedOperator(op)
        nid = len(self._nodes)
        for op_in in inputs:
            if not 0 <= op_in < nid:
                raise MalformedModel(f"operand {op_in} not yet defined")
        if op == "Input":
            if self._input is not None:
                raise MalformedModel("graph already has an Input node")
            self._input = nid
        node = Node(op, tuple(inputs), _attrs(op, attrs))
        operand_shapes = [self._nodes[i].shape for i in inputs]
        operand_ops = [self._nodes[i].op for i in inputs]
        shape = _infer_node_shape(node, operand_shapes, operand_ops)
        self._nodes.append(replace(node, shape=shape))
        return nid

    def input(self, shape: Sequence[int]) -> int:
        return self.add("Input", shape=tuple(shape))

    def constant(self, tensor: Tensor) -> int:
        return self.add("Constant", tensor=tensor)

    def shape_of(self, nid: int) -> tuple[int, ...]:
        return self._nodes[nid].shape

    def inline(self, g: Graph, input_replacement: int) -> list[int]:
        """Splice `g` into this builder, rerouting its Input to an existing node.

        Returns the ids of g's output nodes in the new numbering.
        """
        repl_shape = self._nodes[input_replacement].shape
        if tuple(g.input_shape) != repl_shape:
            raise ShapeMismatch(
                f"cannot feed shape {repl_shape} into input of shape {g.input_shape}"
            )
        mapping: dict[int, int] = {g.input_node: input_replacement}
        for nid, node in enumerate(g.nodes):
            if nid == g.input_node:
                continue
            new_inputs = [mapping[i] for i in node.inputs]
            mapping[nid] = self.add(node.op, new_inputs, **dict(node.attrs))
        return [mapping[o] for o in g.outputs]

    def build(self, outputs: Sequence[int], name: str | None = None) -> Graph:
        if self._input is None:
            raise MalformedModel("graph has no Input node")
        return Graph(
            tuple(self._nodes),
            self._input,
            tuple(outputs),
            name if name is not None else self.name,
        )


def _broadcast(values: tuple[Fraction, ...], size: int) -> tuple[Fraction, ...]:
    if len(values) == size:
        return values
    return values * size


def _eval_node(node: Node, operands: list[Tensor]) -> Tensor:
    op = node.op
    exact = all(t.exact for t in operands)
    if op == "Constant":
        return node.attr("tensor")
    if op in ("Add", "Sub", "Mul", "Div"):
        a, b = operands
        out_shape = node.shape
        size = 1
        for d in out_shape:
            size *= d
        av = _broadcast(a.data, size)
        bv = _broadcast(b.data, size)
        if op == "Add":
            data = tuple(x + y for x, y in zip(av, bv))
        elif op == "Sub":
            data = tuple(x - y for x, y in zip(av, bv))
        elif op == "Mul":
            data = tuple(x * y for x, y in zip(av, bv))
        else:
            if any(y == 0 for y in bv):
                raise DivisionByZero("Div by tensor containing zero")
            data = tuple(x / y for x, y in zip(av, bv))
        return Tensor(out_shape, data, exact)
    if op == "Concat":
        axis = node.attr("axis", 0)
        if axis != 0 or any(len(t.shape) != 1 for t in operands):
            # General-rank concat is never produced by this package.
            raise ShapeMismatch("forward supports Concat on 1-D tensors only")
        data = tuple(x for t in operands for x in t.data)
        return Tensor(node.shape, data, exact)
    if op == "Gather":
        indices = node.attr("indices")
        axis = node.attr("axis", 0)
        (src,) = operands
        if len(src.shape) == 1 and axis == 0:
            data = tuple(src.data[i] for i in indices)
            return Tensor(node.shape, data, exact)
        raise ShapeMismatch("forward supports Gather on 1-D tensors only")
    if op == "Gemm":
        a, b = operands[0], operands[1]
        alpha = node.attr("alpha", Fraction(1))
        beta = node.attr("beta", Fraction(1))
        am = a.matrix_rows() if len(a.shape) == 2 else [list(a.data)]
        bm = b.matrix_rows() if len(b.shape) == 2 else [list(b.data)]
        if node.attr("trans_a", False):
            am = [list(col) for col in zip(*am)]
        if node.attr("trans_b", False):
            bm = [list(col) for col in zip(*bm)]
        m, k = len(am), len(am[0])
        n = len(bm[0])
        out = [
            [alpha * sum(am[i][t] * bm[t][j] for t in range(k)) for j in range(n)]
            for i in range(m)
        ]
        if len(operands) == 3:
            c = operands[2]
            flat_c = _broadcast(c.data, m * n)
            it = iter(flat_c)
            out = [[v + beta * next(it) for v in row] for row in out]
        data = tuple(v for row in out for v in row)
        return Tensor(node.shape, data, exact)
    if op == "Relu":
        (a,) = operands
        data = tuple(x if x > 0 else Fraction(0) for x in a.data)
        return Tensor(a.shape, data, exact)
    if op == "Sign":
        (a,) = operands
        data = tuple(
            Fraction(1) if x > 0 else Fraction(-1) if x < 0 else Fraction(0)
            for x in a.data
        )
        return Tensor(a.shape, data, exact)
    if op == "Exp":
        (a,) = operands
        out = []
        for x in a.data:
            interval = _IV.exp(_IV.mpf(x.numerator) / _IV.mpf(x.denominator))
            lo_raw, hi_raw = interval._mpi_
            lo = mpf_to_fraction(lo_raw)
            hi = mpf_to_fraction(hi_raw)
            out.append((lo + hi) / 2)
        return Tensor(a.shape, tuple(out), exact=False)
    raise UnsupportedOperator(op)


def forward(g: Graph, input_tensor: Tensor) -> list[Tensor]:
    """Evaluate the graph bottom-up; deterministic, exact except past Exp."""
    if tuple(input_tensor.shape) != tuple(g.input_shape):
        raise ShapeMismatch(
            f"input shape {input_tensor.shape} does not match {g.input_shape}"
        )
    values: list[Tensor | None] = [None] * len(g.nodes)
    for nid in topo_order(g):
        node = g.nodes[nid]
        if node.op == "Input":
            values[nid] = input_tensor
        else:
            values[nid] = _eval_node(node, [values[i] for i in node.inputs])
    return [values[o] for o in g.outputs]


def subst_input(g: Graph, replacement: Graph) -> Graph:
    """Replace g's Input node by the whole `replacement` graph.

    The result has node count |g| - 1 + |replacement| and computes
    g after replacement.
    """
    if len(replacement.outputs) != 1:
        raise ShapeMismatch("replacement graph must have a single output")
    builder = GraphBuilder(g.name)
    mapping: dict[int, int] = {}
    for nid, node in enumerate(replacement.nodes):
        mapping[nid] = builder.add(
            node.op, [mapping[i] for i in node.inputs], **dict(node.attrs)
        )
    repl_out = mapping[replacement.outputs[0]]
    outs = builder.inline(g, repl_out)
    return builder.build(outs, name=g.name)


def _canonical_sequence(g: Graph):
    order: dict[int, int] = {}

    def visit(nid: int):
        if nid in order:
            return
        for op_in in g.nodes[nid].inputs:
            visit(op_in)
        order[nid] = len(order)

    for out in g.outputs:
        visit(out)
    visit(g.input_node)
    # Nodes unreachable from the outputs still count for isomorphism.
    for nid in range(len(g.nodes)):
        visit(nid)
    seq = []
    for nid in sorted(order, key=order.get):
        node = g.nodes[nid]
        seq.append((node.op, node.attrs, tuple(order[i] for i in node.inputs)))
    return seq, tuple(order[o] for o in g.outputs), order[g.input_node]


def isomorphic(g1: Graph, g2: Graph) -> bool:
    """Structural equality up to node naming/numbering."""
    if len(g1.nodes) != len(g2.nodes):
        return False
    return _canonical_sequence(g1) == _canonical_sequence(g2)


def dump(g: Graph) -> str:
    """Debug text: one `node_id: Op(shape) <- operands` line per node."""
    lines = []
    for nid, node in enumerate(g.nodes):
        operands = ", ".join(str(i) for i in node.inputs)
        lines.append(f"{nid}: {node.op}{node.shape} <- [{operands}]")
    return "\n".join(lines)

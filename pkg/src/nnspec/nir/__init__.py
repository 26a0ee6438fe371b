"""Neural intermediate representation: exact operator DAGs plus ONNX I/O."""

from .graph import (
    DivisionByZero,
    Graph,
    GraphBuilder,
    MalformedModel,
    NirError,
    Node,
    ShapeMismatch,
    Tensor,
    UnsupportedOperator,
    SUPPORTED_OPS,
    dump,
    forward,
    infer_shapes,
    isomorphic,
    subst_input,
    topo_order,
)
from .onnx_io import (
    IR_VERSION,
    OPSET_VERSION,
    UnserializableExact,
    emit_onnx,
    model_ir_version,
    model_opset_version,
    parse_onnx,
)

__all__ = [
    "DivisionByZero",
    "Graph",
    "GraphBuilder",
    "MalformedModel",
    "NirError",
    "Node",
    "ShapeMismatch",
    "Tensor",
    "UnsupportedOperator",
    "SUPPORTED_OPS",
    "dump",
    "forward",
    "infer_shapes",
    "isomorphic",
    "subst_input",
    "topo_order",
    "IR_VERSION",
    "OPSET_VERSION",
    "UnserializableExact",
    "emit_onnx",
    "model_ir_version",
    "model_opset_version",
    "parse_onnx",
]

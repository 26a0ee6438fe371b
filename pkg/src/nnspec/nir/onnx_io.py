"""ONNX import/export for the supported operator subset.

Emitted files declare IR version 8 and default-domain opset 13, store
constants as float64 initializers, and round-trip through `parse_onnx`
isomorphically.  A rational constant that is not exactly a double is
rounded to the nearest double unless strict mode is requested, in which
case :class:`UnserializableExact` is raised.
"""

from __future__ import annotations

import struct
from fractions import Fraction

from ..rational import is_exact_double
from . import protowire as pw
from .graph import (
    Graph,
    GraphBuilder,
    MalformedModel,
    NirError,
    Tensor,
    UnsupportedOperator,
    topo_order,
)

__all__ = ["parse_onnx", "emit_onnx", "UnserializableExact",
           "IR_VERSION", "OPSET_VERSION"]

IR_VERSION = 8
OPSET_VERSION = 13

# TensorProto.DataType values we understand.
_FLOAT = 1
_INT32 = 6
_INT64 = 7
_DOUBLE = 11


class UnserializableExact(NirError):
    def __init__(self, value: Fraction):
        super().__init__(
            f"constant {value} is not exactly representable as float64"
        )
        self.value = value


# ---------------------------------------------------------------- parsing


def _decode_tensor(data: bytes) -> tuple[str, Tensor]:
    dims: list[int] = []
    data_type = _FLOAT
    name = ""
    raw = b""
    floats: list[float] = []
    doubles: list[float] = []
    int64s: list[int] = []
    int32s: list[int] = []
    for field, wire, value in pw.iter_fields(data):
        if field == 1:
            if wire == pw.VARINT:
                dims.append(pw.to_signed64(value))
            else:
                dims.extend(pw.to_signed64(v) for v in pw.decode_packed_varints(value))
        elif field == 2:
            data_type = value
        elif field == 4:
            if wire == pw.FIXED32:
                floats.append(struct.unpack("<f", value)[0])
            else:
                floats.extend(struct.unpack(f"<{len(value) // 4}f", value))
        elif field == 5:
            if wire == pw.VARINT:
                int32s.append(pw.to_signed64(value))
            else:
                int32s.extend(pw.to_signed64(v) for v in pw.decode_packed_varints(value))
        elif field == 7:
            if wire == pw.VARINT:
                int64s.append(pw.to_signed64(value))
            else:
                int64s.extend(pw.to_signed64(v) for v in pw.decode_packed_varints(value))
        elif field == 8:
            name = value.decode("utf-8")
        elif field == 9:
            raw = value
        elif field == 10:
            if wire == pw.FIXED64:
                doubles.append(struct.unpack("<d", value)[0])
            else:
                doubles.extend(struct.unpack(f"<{len(value) // 8}d", value))
    if raw:
        if data_type == _FLOAT:
            floats = list(struct.unpack(f"<{len(raw) // 4}f", raw))
        elif data_type == _DOUBLE:
            doubles = list(struct.unpack(f"<{len(raw) // 8}d", raw))
        elif data_type == _INT64:
            int64s = list(struct.unpack(f"<{len(raw) // 8}q", raw))
        elif data_type == _INT32:
            int32s = list(struct.unpack(f"<{len(raw) // 4}i", raw))
        else:
            raise MalformedModel(f"unsupported tensor data type {data_type}")
    if data_type == _FLOAT:
        values = [Fraction(v) for v in floats]
    elif data_type == _DOUBLE:
        values = [Fraction(v) for v in doubles]
    elif data_type == _INT64:
        values = [Fraction(v) for v in int64s]
    elif data_type == _INT32:
        values = [Fraction(v) for v in int32s]
    else:
        raise MalformedModel(f"unsupported tensor data type {data_type}")
    shape = tuple(dims) if dims else (1,) if len(values) == 1 else (len(values),)
    return name, Tensor(shape, tuple(values))


def _decode_attribute(data: bytes) -> tuple[str, object]:
    name = ""
    value: object = None
    for field, wire, raw in pw.iter_fields(data):
        if field == 1:
            name = raw.decode("utf-8")
        elif field == 2:
            value = struct.unpack("<f", raw)[0]
        elif field == 3:
            value = pw.to_signed64(raw)
        elif field == 4:
            value = raw
        elif field == 5:
            value = _decode_tensor(raw)[1]
        elif field == 7:
            if wire == pw.FIXED32:
                value = [struct.unpack("<f", raw)[0]]
            else:
                value = list(struct.unpack(f"<{len(raw) // 4}f", raw))
        elif field == 8:
            if wire == pw.VARINT:
                value = [pw.to_signed64(raw)]
            else:
                value = [pw.to_signed64(v) for v in pw.decode_packed_varints(raw)]
    return name, value


def _decode_node(data: bytes):
    inputs: list[str] = []
    outputs: list[str] = []
    op_type = ""
    name = ""
    attrs: dict[str, object] = {}
    for field, _wire, value in pw.iter_fields(data):
        if field == 1:
            inputs.append(value.decode("utf-8"))
        elif field == 2:
            outputs.append(value.decode("utf-8"))
        elif field == 3:
            name = value.decode("utf-8")
        elif field == 4:
            op_type = value.decode("utf-8")
        elif field == 5:
            key, attr_value = _decode_attribute(value)
            attrs[key] = attr_value
    return op_type, name, inputs, outputs, attrs


def _decode_value_info(data: bytes) -> tuple[str, tuple[int, ...]]:
    name = ""
    dims: tuple[int, ...] = ()
    for field, _wire, value in pw.iter_fields(data):
        if field == 1:
            name = value.decode("utf-8")
        elif field == 2:
            for f2, _w2, v2 in pw.iter_fields(value):
                if f2 != 1:  # TypeProto.tensor_type
                    continue
                for f3, _w3, v3 in pw.iter_fields(v2):
                    if f3 != 2:  # Tensor.shape
                        continue
                    out = []
                    for f4, _w4, v4 in pw.iter_fields(v3):
                        if f4 != 1:  # shape.dim
                            continue
                        dim_value = 0
                        for f5, _w5, v5 in pw.iter_fields(v4):
                            if f5 == 1:
                                dim_value = pw.to_signed64(v5)
                        out.append(dim_value)
                    dims = tuple(out)
    return name, dims


def _squeeze_boundary(shape: tuple[int, ...]) -> tuple[int, ...]:
    kept = tuple(d for d in shape if d != 1)
    if len(kept) > 1:
        raise MalformedModel(f"boundary tensors must be 1-D, got {shape}")
    return kept if kept else (1,)


_ONNX_TO_NIR = {
    "Add": "Add", "Sub": "Sub", "Mul": "Mul", "Div": "Div",
    "Concat": "Concat", "Gather": "Gather", "Gemm": "Gemm",
    "Relu": "Relu", "Sign": "Sign", "Exp": "Exp", "Constant": "Constant",
}


def parse_onnx(data: bytes) -> Graph:
    """Decode an ONNX model into a Graph; rejects operators outside the subset."""
    graph_bytes = None
    try:
        for field, _wire, value in pw.iter_fields(data):
            if field == 7:
                graph_bytes = value
    except ValueError as e:
        raise MalformedModel(f"not a valid ONNX protobuf: {e}") from None
    if graph_bytes is None:
        raise MalformedModel("model has no graph")

    graph_name = ""
    nodes = []
    initializers: dict[str, Tensor] = {}
    graph_inputs: list[tuple[str, tuple[int, ...]]] = []
    graph_outputs: list[str] = []
    for field, _wire, value in pw.iter_fields(graph_bytes):
        if field == 1:
            nodes.append(_decode_node(value))
        elif field == 2:
            graph_name = value.decode("utf-8")
        elif field == 5:
            name, tensor = _decode_tensor(value)
            initializers[name] = tensor
        elif field == 11:
            graph_inputs.append(_decode_value_info(value))
        elif field == 12:
            name, _dims = _decode_value_info(value)
            graph_outputs.append(name)

    real_inputs = [(n, s) for n, s in graph_inputs if n not in initializers]
    if len(real_inputs) != 1:
        raise MalformedModel(
            f"expected exactly one graph input, found {len(real_inputs)}"
        )
    input_name, input_dims = real_inputs[0]
    builder = GraphBuilder(graph_name)
    by_name: dict[str, int] = {
        input_name: builder.input(_squeeze_boundary(input_dims))
    }

    def node_for(name: str) -> int:
        if name in by_name:
            return by_name[name]
        if name in initializers:
            by_name[name] = builder.constant(initializers[name])
            return by_name[name]
        raise MalformedModel(f"value {name!r} is not produced by any node")

    for op_type, _name, inputs, outputs, attrs in nodes:
        if op_type not in _ONNX_TO_NIR:
            raise UnsupportedOperator(op_type)
        if len(outputs) != 1:
            raise MalformedModel(f"node {op_type} must have one output")
        if op_type == "Constant":
            tensor = attrs.get("value")
            if not isinstance(tensor, Tensor):
                raise MalformedModel("Constant node without tensor value")
            by_name[outputs[0]] = builder.constant(tensor)
            continue
        if op_type == "Gather":
            data_in = node_for(inputs[0])
            if len(inputs) != 2 or inputs[1] not in initializers:
                raise MalformedModel("Gather indices must be a constant initializer")
            idx_tensor = initializers[inputs[1]]
            indices = tuple(int(v) for v in idx_tensor.data)
            axis = int(attrs.get("axis", 0))
            by_name[outputs[0]] = builder.add(
                "Gather", [data_in], indices=indices, axis=axis
            )
            continue
        operand_ids = [node_for(n) for n in inputs]
        nir_attrs: dict[str, object] = {}
        if op_type == "Concat":
            nir_attrs["axis"] = int(attrs.get("axis", 0))
        elif op_type == "Gemm":
            nir_attrs["trans_a"] = bool(attrs.get("transA", 0))
            nir_attrs["trans_b"] = bool(attrs.get("transB", 0))
            nir_attrs["alpha"] = Fraction(attrs.get("alpha", 1.0))
            nir_attrs["beta"] = Fraction(attrs.get("beta", 1.0))
        by_name[outputs[0]] = builder.add(op_type, operand_ids, **nir_attrs)

    try:
        output_ids = [by_name[n] for n in graph_outputs]
    except KeyError as e:
        raise MalformedModel(f"graph output {e} is not produced") from None
    if not output_ids:
        raise MalformedModel("graph has no outputs")
    return builder.build(output_ids, name=graph_name)


# --------------------------------------------------------------- emission


def _tensor_bytes(name: str, tensor: Tensor, strict: bool,
                  data_type: int = _DOUBLE) -> bytes:
    out = bytearray()
    for dim in tensor.shape:
        out += pw.field_varint(1, dim)
    out += pw.field_varint(2, data_type)
    out += pw.field_string(8, name)
    if data_type == _DOUBLE:
        values = []
        for v in tensor.data:
            if strict and not is_exact_double(v):
                raise UnserializableExact(v)
            values.append(float(v))
        out += pw.field_bytes(9, struct.pack(f"<{len(values)}d", *values))
    elif data_type == _INT64:
        values = [int(v) for v in tensor.data]
        out += pw.field_bytes(9, struct.pack(f"<{len(values)}q", *values))
    else:
        raise MalformedModel(f"cannot emit tensor data type {data_type}")
    return bytes(out)


def _value_info_bytes(name: str, shape: tuple[int, ...],
                      data_type: int = _DOUBLE) -> bytes:
    dims = b""
    for dim in shape:
        dims += pw.field_bytes(1, pw.field_varint(1, dim))
    tensor_type = pw.field_varint(1, data_type) + pw.field_bytes(2, dims)
    type_proto = pw.field_bytes(1, tensor_type)
    return pw.field_string(1, name) + pw.field_bytes(2, type_proto)


def _attr_int(name: str, value: int) -> bytes:
    body = pw.field_string(1, name) + pw.field_varint(3, value)
    body += pw.field_varint(20, 2)  # AttributeType.INT
    return pw.field_bytes(5, body)


def _attr_float(name: str, value: float) -> bytes:
    body = pw.field_string(1, name) + pw.tag(2, pw.FIXED32) + struct.pack("<f", value)
    body += pw.field_varint(20, 1)  # AttributeType.FLOAT
    return pw.field_bytes(5, body)


def emit_onnx(g: Graph, strict: bool = False) -> bytes:
    """Serialize to ONNX bytes (IR v8, opset 13, float64 tensors)."""
    if not g.outputs:
        raise MalformedModel("cannot emit a graph without outputs")
    names = {nid: f"v{nid}" for nid in range(len(g.nodes))}
    names[g.input_node] = "input"
    for pos, out in enumerate(g.outputs):
        names[out] = f"output_{pos}" if len(g.outputs) > 1 else "output"

    graph = bytearray()
    node_bodies = []
    initializers = []
    extra_inputs = []
    for nid in topo_order(g):
        node = g.nodes[nid]
        if node.op == "Input":
            continue
        if node.op == "Constant":
            initializers.append(
                _tensor_bytes(names[nid], node.attr("tensor"), strict)
            )
            extra_inputs.append(_value_info_bytes(names[nid], node.shape))
            continue
        body = bytearray()
        input_names = [names[i] for i in node.inputs]
        attrs = b""
        op_type = node.op
        if node.op == "Gather":
            idx_name = f"v{nid}_indices"
            idx_tensor = Tensor(
                (len(node.attr("indices")),),
                tuple(Fraction(i) for i in node.attr("indices")),
            )
            initializers.append(_tensor_bytes(idx_name, idx_tensor, strict, _INT64))
            extra_inputs.append(
                _value_info_bytes(idx_name, idx_tensor.shape, _INT64)
            )
            input_names.append(idx_name)
            attrs += _attr_int("axis", node.attr("axis", 0))
        elif node.op == "Concat":
            attrs += _attr_int("axis", node.attr("axis", 0))
        elif node.op == "Gemm":
            attrs += _attr_int("transA", int(node.attr("trans_a", False)))
            attrs += _attr_int("transB", int(node.attr("trans_b", False)))
            alpha = node.attr("alpha", Fraction(1))
            beta = node.attr("beta", Fraction(1))
            if alpha != 1:
                attrs += _attr_float("alpha", float(alpha))
            if beta != 1:
                attrs += _attr_float("beta", float(beta))
        for name in input_names:
            body += pw.field_string(1, name)
        body += pw.field_string(2, names[nid])
        body += pw.field_string(3, f"node_{nid}")
        body += pw.field_string(4, op_type)
        body += attrs
        node_bodies.append(bytes(body))

    for body in node_bodies:
        graph += pw.field_bytes(1, body)
    graph += pw.field_string(2, g.name or "nnspec_graph")
    for init in initializers:
        graph += pw.field_bytes(5, init)
    graph += pw.field_bytes(
        11, _value_info_bytes(names[g.input_node], tuple(g.input_shape))
    )
    for extra in extra_inputs:
        graph += pw.field_bytes(11, extra)
    for out in g.outputs:
        graph += pw.field_bytes(12, _value_info_bytes(names[out], g.nodes[out].shape))

    opset = pw.field_string(1, "") + pw.field_varint(2, OPSET_VERSION)
    model = bytearray()
    model += pw.field_varint(1, IR_VERSION)
    model += pw.field_string(2, "nnspec")
    model += pw.field_bytes(8, opset)
    model += pw.field_bytes(7, bytes(graph))
    return bytes(model)


def model_ir_version(data: bytes) -> int:
    for field, _wire, value in pw.iter_fields(data):
        if field == 1:
            return pw.to_signed64(value)
    raise MalformedModel("model has no ir_version")


def model_opset_version(data: bytes) -> int:
    for field, _wire, value in pw.iter_fields(data):
        if field == 8:
            for f2, _w2, v2 in pw.iter_fields(value):
                if f2 == 2:
                    return pw.to_signed64(v2)
    raise MalformedModel("model has no opset import")

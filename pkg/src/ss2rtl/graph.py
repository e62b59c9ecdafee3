"""Discrete-time state-space model IR.

A model is a pair of dataflow graphs over vector-valued wires:

    x[k+1] = update(x[k], u, k)     applied for k = 0 .. horizon-1
    y      = output(x[horizon])

Parameter tables referenced by graph nodes are indexed by the step k, so
time-varying systems (and feed-forward networks rewritten as state-space
models, one layer per step) share one graph across all steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np


class ModelError(ValueError):
    """A model failed validation or an analysis precondition."""


# Node operations. Arity is fixed per op; payload meaning varies:
#   input      ()            the full input vector u              payload: None
#   state_in   ()            the full state vector x[k]           payload: None
#   const      ()            constant vector, or per-step table   payload: table name
#   matvec     (v,)          table[k] @ v                         payload: table name
#   vec_add    (a, b)        elementwise sum, equal widths        payload: None
#   scalar_add (v,)          v + scalar                           payload: float
#   scalar_mul (v,)          v * scalar                           payload: float
#   activation (v,)          elementwise nonlinearity             payload: kind
#   delay      (v,)          value of v from the previous step    payload: None
_ARITY = {
    "input": 0, "state_in": 0, "const": 0, "matvec": 1, "vec_add": 2,
    "scalar_add": 1, "scalar_mul": 1, "activation": 1, "delay": 1,
}

ACTIVATION_KINDS = ("tanh", "identity")


@dataclass(frozen=True)
class GNode:
    op: str
    args: tuple[int, ...] = ()
    payload: object = None


@dataclass(frozen=True)
class DataflowGraph:
    nodes: tuple[GNode, ...]
    outputs: tuple[int, ...]


@dataclass(frozen=True)
class ParamTable:
    """A per-step parameter: `values[k]` when time-varying, `values[0]`
    always when static."""

    values: tuple[np.ndarray, ...]
    static: bool = False

    def at(self, k: int) -> np.ndarray:
        return self.values[0] if self.static else self.values[k]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class StateSpaceModel:
    state_dim: int
    input_dim: int
    output_dim: int
    horizon: int
    initial_state: np.ndarray
    update_graph: DataflowGraph
    output_graph: DataflowGraph
    params: dict[str, ParamTable] = field(default_factory=dict)


class GraphBuilder:
    """Small helper for constructing well-formed graphs."""

    def __init__(self) -> None:
        self._nodes: list[GNode] = []

    def _push(self, op: str, args: tuple[int, ...] = (), payload=None) -> int:
        self._nodes.append(GNode(op, args, payload))
        return len(self._nodes) - 1

    def input(self) -> int:
        return self._push("input")

    def state_in(self) -> int:
        return self._push("state_in")

    def const(self, table: str) -> int:
        return self._push("const", payload=table)

    def matvec(self, table: str, v: int) -> int:
        return self._push("matvec", (v,), table)

    def vec_add(self, a: int, b: int) -> int:
        return self._push("vec_add", (a, b))

    def scalar_add(self, v: int, c: float) -> int:
        return self._push("scalar_add", (v,), c)

    def scalar_mul(self, v: int, c: float) -> int:
        return self._push("scalar_mul", (v,), c)

    def activation(self, kind: str, v: int) -> int:
        return self._push("activation", (v,), kind)

    def delay(self, v: int) -> int:
        return self._push("delay", (v,))

    def build(self, outputs: Iterable[int]) -> DataflowGraph:
        return DataflowGraph(tuple(self._nodes), tuple(outputs))


def _table_width(table: ParamTable, row: bool) -> int:
    a = table.values[0]
    return a.shape[0]


def _infer_widths(g: DataflowGraph, m: StateSpaceModel,
                  diags: list[str], which: str) -> list[Optional[int]]:
    """Static width per node; None marks nodes whose width could not be
    determined because of an upstream problem."""
    widths: list[Optional[int]] = []
    for i, n in enumerate(g.nodes):
        where = f"{which} node {i} ({n.op})"
        if n.op not in _ARITY:
            diags.append(f"{where}: unknown op")
            widths.append(None)
            continue
        if len(n.args) != _ARITY[n.op]:
            diags.append(f"{where}: expects {_ARITY[n.op]} args, has {len(n.args)}")
            widths.append(None)
            continue
        if any(a < 0 or a >= len(g.nodes) for a in n.args):
            diags.append(f"{where}: argument id out of range")
            widths.append(None)
            continue
        aw = [widths[a] if a < i else None for a in n.args]
        if n.op == "input":
            widths.append(m.input_dim)
        elif n.op == "state_in":
            widths.append(m.state_dim)
        elif n.op == "const":
            t = m.params.get(n.payload)
            if t is None:
                diags.append(f"{where}: unknown table {n.payload!r}")
                widths.append(None)
            else:
                widths.append(t.values[0].shape[0])
        elif n.op == "matvec":
            t = m.params.get(n.payload)
            if t is None:
                diags.append(f"{where}: unknown table {n.payload!r}")
                widths.append(None)
            elif t.values[0].ndim != 2:
                diags.append(f"{where}: table {n.payload!r} is not a matrix")
                widths.append(None)
            else:
                if aw[0] is not None and t.values[0].shape[1] != aw[0]:
                    diags.append(
                        f"{where}: table {n.payload!r} has {t.values[0].shape[1]} "
                        f"columns, argument is {aw[0]} wide")
                widths.append(t.values[0].shape[0])
        elif n.op == "vec_add":
            if aw[0] is not None and aw[1] is not None and aw[0] != aw[1]:
                diags.append(f"{where}: width mismatch {aw[0]} vs {aw[1]}")
            widths.append(aw[0] if aw[0] is not None else aw[1])
        elif n.op == "activation":
            if n.payload not in ACTIVATION_KINDS:
                diags.append(f"{where}: unknown activation {n.payload!r}")
            widths.append(aw[0])
        else:  # scalar_add, scalar_mul, delay
            widths.append(aw[0])
    return widths


def _check_graph(g: DataflowGraph, m: StateSpaceModel, which: str,
                 out_width: int, diags: list[str]) -> None:
    if not g.nodes:
        diags.append(f"{which}: empty graph")
        return
    widths = _infer_widths(g, m, diags, which)

    # Cycles are legal only through delay nodes.
    color = [0] * len(g.nodes)  # 0 white, 1 on stack, 2 done

    def visit(i: int) -> None:
        if color[i] == 2:
            return
        if color[i] == 1:
            diags.append(f"{which}: combinational cycle through node {i}")
            return
        color[i] = 1
        if g.nodes[i].op != "delay":
            for a in g.nodes[i].args:
                if 0 <= a < len(g.nodes):
                    visit(a)
        color[i] = 2

    for i in range(len(g.nodes)):
        visit(i)

    for o in g.outputs:
        if o < 0 or o >= len(g.nodes):
            diags.append(f"{which}: output id {o} out of range")
            return
    total = 0
    for o in g.outputs:
        if widths[o] is None:
            return
        total += widths[o]
    if total != out_width:
        diags.append(f"{which}: produces {total} wires, expected {out_width}")

    # Dangling nodes: not reachable from any output (through delays too).
    used = set()
    stack = list(g.outputs)
    while stack:
        i = stack.pop()
        if i in used:
            continue
        used.add(i)
        stack.extend(a for a in g.nodes[i].args if 0 <= a < len(g.nodes))
    for i in range(len(g.nodes)):
        if i not in used:
            diags.append(f"{which}: dangling node {i} ({g.nodes[i].op})")

    # Tables used per step must cover the horizon.
    for i, n in enumerate(g.nodes):
        if n.op in ("matvec", "const"):
            t = m.params.get(n.payload)
            if t is not None and not t.static and len(t) < m.horizon:
                diags.append(
                    f"{which} node {i}: table {n.payload!r} has {len(t)} "
                    f"entries, horizon is {m.horizon}")


def validate_model(m: StateSpaceModel) -> list[str]:
    """Return an empty list iff every model invariant holds."""
    diags: list[str] = []
    for name, v in (("state_dim", m.state_dim), ("input_dim", m.input_dim),
                    ("output_dim", m.output_dim), ("horizon", m.horizon)):
        if v < 1:
            diags.append(f"{name} must be >= 1, got {v}")
    if diags:
        return diags
    if m.initial_state.shape != (m.state_dim,):
        diags.append(
            f"initial_state has shape {m.initial_state.shape}, "
            f"expected ({m.state_dim},)")
    _check_graph(m.update_graph, m, "update_graph", m.state_dim, diags)
    _check_graph(m.output_graph, m, "output_graph", m.output_dim, diags)
    return diags


# ---------------------------------------------------------------------------
# Affine extraction.
#
# Most of the toolchain (fixed-point simulation, elaboration, transition
# fusion) operates on models whose update step is an affine map followed by
# at most one elementwise activation:
#
#     x[k+1] = act( Ws[k] x[k] + Wi[k] u + b[k] )
#
# The extractor evaluates a graph symbolically over (x, u, 1) and either
# produces the per-step coefficients or reports the first node that breaks
# the shape. Nonlinearities anywhere except the final position are rejected.

@dataclass(frozen=True)
class AffineStep:
    state_mats: tuple[np.ndarray, ...]   # Ws[k], (M, M) each
    input_mats: tuple[np.ndarray, ...]   # Wi[k], (M, L) each
    biases: tuple[np.ndarray, ...]       # b[k], (M,) each
    activation: str


@dataclass(frozen=True)
class AffineOutput:
    state_mat: np.ndarray    # (P, M)
    input_mat: np.ndarray    # (P, L)
    bias: np.ndarray         # (P,)
    activation: str


class _Aff:
    __slots__ = ("sx", "su", "c")

    def __init__(self, sx, su, c):
        self.sx, self.su, self.c = sx, su, c


def _extract_affine(g: DataflowGraph, m: StateSpaceModel, k: int,
                    which: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    M, L = m.state_dim, m.input_dim
    vals: list[Optional[_Aff]] = [None] * len(g.nodes)
    act_kind = "identity"
    act_node = None
    if len(g.outputs) == 1 and g.nodes[g.outputs[0]].op == "activation":
        act_node = g.outputs[0]
        act_kind = g.nodes[act_node].payload
        if act_kind == "identity":
            act_node = None

    order = list(range(len(g.nodes)))
    for i in order:
        n = g.nodes[i]
        if n.op == "activation":
            if i == act_node:
                vals[i] = vals[n.args[0]]
                continue
            if n.payload == "identity":
                vals[i] = vals[n.args[0]]
                continue
            raise ModelError(
                f"{which}: node {i} (activation {n.payload!r}) is not in the "
                f"final position; graph is not affine")
        if n.op == "delay":
            raise ModelError(f"{which}: node {i} (delay) is not affine")
        if n.op == "input":
            vals[i] = _Aff(np.zeros((L, M)), np.eye(L), np.zeros(L))
        elif n.op == "state_in":
            vals[i] = _Aff(np.eye(M), np.zeros((M, L)), np.zeros(M))
        elif n.op == "const":
            v = m.params[n.payload].at(k)
            w = v.shape[0]
            vals[i] = _Aff(np.zeros((w, M)), np.zeros((w, L)), v.astype(float))
        elif n.op == "matvec":
            a = vals[n.args[0]]
            t = m.params[n.payload].at(k).astype(float)
            vals[i] = _Aff(t @ a.sx, t @ a.su, t @ a.c)
        elif n.op == "vec_add":
            a, b = vals[n.args[0]], vals[n.args[1]]
            vals[i] = _Aff(a.sx + b.sx, a.su + b.su, a.c + b.c)
        elif n.op == "scalar_add":
            a = vals[n.args[0]]
            vals[i] = _Aff(a.sx, a.su, a.c + float(n.payload))
        elif n.op == "scalar_mul":
            a = vals[n.args[0]]
            s = float(n.payload)
            vals[i] = _Aff(a.sx * s, a.su * s, a.c * s)
        else:
            raise ModelError(f"{which}: node {i}: unknown op {n.op!r}")

    parts = [vals[o] for o in g.outputs]
    sx = np.vstack([p.sx for p in parts])
    su = np.vstack([p.su for p in parts])
    c = np.concatenate([p.c for p in parts])
    return sx, su, c, act_kind


def extract_affine_step(m: StateSpaceModel) -> AffineStep:
    """Per-step affine coefficients of the update graph, or ModelError."""
    sms, ims, bs = [], [], []
    act = "identity"
    for k in range(m.horizon):
        sx, su, c, act = _extract_affine(m.update_graph, m, k, "update_graph")
        sms.append(sx)
        ims.append(su)
        bs.append(c)
    return AffineStep(tuple(sms), tuple(ims), tuple(bs), act)


def extract_affine_output(m: StateSpaceModel) -> AffineOutput:
    """Affine coefficients of the output map, evaluated at step `horizon`."""
    k = m.horizon
    for n in m.output_graph.nodes:
        if n.op in ("matvec", "const"):
            t = m.params.get(n.payload)
            if t is not None and not t.static and len(t) <= k:
                k = len(t) - 1
    sx, su, c, act = _extract_affine(m.output_graph, m, k, "output_graph")
    return AffineOutput(sx, su, c, act)


def first_nonlinear_node(m: StateSpaceModel) -> Optional[tuple[int, str]]:
    """(node id, description) of the first update-graph node that breaks
    pure linearity in the state, or None. Pure linearity means: no input
    contribution, no bias, identity activation."""
    g = m.update_graph
    for i, n in enumerate(g.nodes):
        if n.op == "activation" and n.payload != "identity":
            return i, f"activation {n.payload!r}"
        if n.op == "delay":
            return i, "delay"
    try:
        step = extract_affine_step(m)
    except ModelError:
        return 0, "not affine"
    for k in range(m.horizon):
        if np.any(step.input_mats[k] != 0.0):
            for i, n in enumerate(g.nodes):
                if n.op == "input":
                    return i, "input contribution"
            return 0, "input contribution"
        if np.any(step.biases[k] != 0.0):
            for i, n in enumerate(g.nodes):
                if n.op in ("const", "scalar_add"):
                    return i, "additive constant"
            return 0, "additive constant"
    return None

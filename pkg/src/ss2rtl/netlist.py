"""Synchronous netlist IR.

A netlist is a flat graph of combinational nodes and registers plus one
controller FSM. Register enables are not a primitive: a held register is
a plain register whose data input is a mux between new data and the
register's own output, which keeps structural passes (retiming, C-slow,
pipelining) uniform. The controller is embedded as a single state
register, a table-driven next-state node, and one decode node per control
signal, so it is slowed and simulated exactly like the datapath.

All registers clock every cycle; synchronous active-high reset restores
every register's init value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .fixedpoint import FixedPointFormat, FormatAssignment
from .simulate import LutRom


class NetlistError(ValueError):
    pass


class ScheduleError(ValueError):
    """The requested schedule cannot meet its constraints."""


# Node kinds and their payloads:
#   in       ()          primary input port         payload: None
#   const    ()          constant                   payload: raw int
#   add      (a, b)      exact sum                  payload: None
#   mul      (a, b)      exact product              payload: None
#   cmul     (a,)        exact product by constant  payload: coefficient raw
#   shl      (a,)        exact left shift           payload: amount
#   mux      (sel, ...)  choice select              payload: None
#   rom      (addr,)     table read                 payload: tuple of raws
#   requant  (a,)        round + saturate           payload: (from_fmt, to_fmt)
#   lutaddr  (a,)        LUT address extraction     payload: LutRom
#   ctrl     (fsm,)      controller Moore output    payload: signal name
#   fsm_next (fsm, dvi)  controller next state      payload: None
#   reg      (d,)        register                   payload: init raw
COMB_KINDS = ("const", "add", "mul", "cmul", "shl", "mux", "rom",
              "requant", "lutaddr", "ctrl", "fsm_next")


@dataclass(frozen=True)
class NlNode:
    kind: str
    args: tuple[int, ...]
    fmt: FixedPointFormat
    payload: object = None
    name: str = ""
    group: str = "top"
    inst: Optional[str] = None


@dataclass(frozen=True)
class Schedule:
    """Time-sharing plan: p multipliers per state node, time-shared over
    ceil(max(input_dim, state_dim) / p) cycles per layer (every layer runs
    the same count so the latency is a closed form). clock_ratio is the
    system-clock cycle budget per data sample; None means exactly the
    pipeline latency."""

    multipliers_per_node: int
    clock_ratio: Optional[int] = None


def macc_cycles(state_dim: int, input_dim: int, p: int) -> int:
    terms = max(state_dim, input_dim)
    return -(-terms // p)


# Controller phases (low two bits of the encoded state).
PH_IDLE, PH_LOAD, PH_COMPUTE, PH_WRITE_OUT = 0, 1, 2, 3

CTRL_SIGNALS = ("load_en", "acc_en", "acc_clear", "sel_input", "term_slot",
                "w_addr", "layer", "preact_en", "state_en", "out_valid")


@dataclass(frozen=True)
class ControllerFsm:
    """Moore machine sequencing one sample through the datapath.

    States: IDLE, LOAD, COMPUTE(layer k, slot), WRITE_OUT. Each layer
    occupies macc_cycles accumulate slots, one requantize slot, and one
    activate slot. Control outputs are functions of the state alone; the
    only input consulted by the transition function is data_valid_in.
    """

    layers: int
    macc_cycles: int

    @property
    def layer_bits(self) -> int:
        return max(1, (self.layers - 1).bit_length())

    @property
    def slot_bits(self) -> int:
        # slots 0 .. macc_cycles+1 (accumulate, requantize, activate)
        return max(1, (self.macc_cycles + 1).bit_length())

    @property
    def state_bits(self) -> int:
        return 2 + self.layer_bits + self.slot_bits

    def encode(self, phase: int, layer: int = 0, slot: int = 0) -> int:
        return phase | (layer << 2) | (slot << (2 + self.layer_bits))

    def decode(self, s: int) -> tuple[int, int, int]:
        return (s & 3, (s >> 2) & ((1 << self.layer_bits) - 1),
                s >> (2 + self.layer_bits))

    @property
    def idle(self) -> int:
        return self.encode(PH_IDLE)

    def next_state(self, s: int, data_valid_in: int) -> int:
        phase, k, slot = self.decode(s)
        c = self.macc_cycles
        if phase == PH_IDLE:
            return self.encode(PH_LOAD) if data_valid_in else s
        if phase == PH_LOAD:
            return self.encode(PH_COMPUTE, 0, 0)
        if phase == PH_COMPUTE:
            if slot < c + 1:
                return self.encode(PH_COMPUTE, k, slot + 1)
            if k < self.layers - 1:
                return self.encode(PH_COMPUTE, k + 1, 0)
            return self.encode(PH_WRITE_OUT)
        return self.idle

    def signals(self, s: int) -> dict[str, int]:
        phase, k, slot = self.decode(s)
        c = self.macc_cycles
        compute = phase == PH_COMPUTE
        macc = compute and slot < c
        return {
            "load_en": int(phase == PH_LOAD),
            "acc_en": int(macc),
            "acc_clear": int(macc and slot == 0),
            "sel_input": int(compute and k == 0),
            "term_slot": slot if macc else 0,
            "w_addr": k * c + slot if macc else 0,
            "layer": k if compute else 0,
            "preact_en": int(compute and slot == c),
            "state_en": int(compute and slot == c + 1),
            "out_valid": int(phase == PH_WRITE_OUT),
        }

    def signal_width(self, name: str) -> int:
        c, n = self.macc_cycles, self.layers
        if name == "term_slot":
            return max(1, (max(c - 1, 0)).bit_length())
        if name == "w_addr":
            return max(1, (n * c - 1).bit_length())
        if name == "layer":
            return max(1, (n - 1).bit_length())
        return 1

    def reachable_states(self) -> list[int]:
        seen, order = {self.idle}, [self.idle]
        stack = [self.idle]
        while stack:
            s = stack.pop()
            for dvi in (0, 1):
                t = self.next_state(s, dvi)
                if t not in seen:
                    seen.add(t)
                    order.append(t)
                    stack.append(t)
        return sorted(order)


@dataclass(frozen=True)
class ElabInfo:
    """Elaboration facts that passes preserve and emission consumes."""

    input_dim: int
    state_dim: int
    horizon: int
    output_dim: int
    schedule: Schedule
    macc_cycles: int
    fmts: FormatAssignment
    lut: Optional[LutRom]
    activation: str
    out_activation: str
    cslow: int = 1
    mul_pipeline: int = 0


@dataclass(frozen=True)
class Netlist:
    nodes: tuple[NlNode, ...]
    inputs: tuple[tuple[str, int], ...]        # (port name, in-node id)
    outputs: tuple[tuple[str, int], ...]       # (port name, source node id)
    controller: Optional[ControllerFsm] = None
    meta: Optional[ElabInfo] = None

    def port_in(self, name: str) -> int:
        for n, i in self.inputs:
            if n == name:
                return i
        raise KeyError(name)

    def count(self, kind: str) -> int:
        return sum(1 for n in self.nodes if n.kind == kind)


class NetlistBuilder:
    def __init__(self) -> None:
        self.nodes: list[NlNode] = []
        self.inputs: list[tuple[str, int]] = []
        self.outputs: list[tuple[str, int]] = []

    def add(self, kind: str, args: Iterable[int], fmt: FixedPointFormat,
            payload=None, name: str = "", group: str = "top",
            inst: Optional[str] = None) -> int:
        if not name:
            name = f"n{len(self.nodes)}"
        self.nodes.append(NlNode(kind, tuple(args), fmt, payload,
                                 name, group, inst))
        return len(self.nodes) - 1

    def port(self, name: str, fmt: FixedPointFormat, group: str = "top") -> int:
        i = self.add("in", (), fmt, None, name, group)
        self.inputs.append((name, i))
        return i

    def output(self, name: str, src: int) -> None:
        self.outputs.append((name, src))

    def patch_args(self, node_id: int, args: Iterable[int]) -> None:
        # registers in feedback loops are created before their drivers
        self.nodes[node_id] = replace(self.nodes[node_id], args=tuple(args))

    def build(self, controller: Optional[ControllerFsm] = None,
              meta: Optional[ElabInfo] = None) -> Netlist:
        return Netlist(tuple(self.nodes), tuple(self.inputs),
                       tuple(self.outputs), controller, meta)


def ctrl_format(bits: int) -> FixedPointFormat:
    # control values are small non-negative counts; one headroom bit keeps
    # the signed-range invariant
    return FixedPointFormat(bits + 1, 0)


def check_netlist(n: Netlist) -> list[str]:
    """Structural diagnostics: bad references, arity, combinational cycles
    (every feedback loop must be cut by at least one register)."""
    diags: list[str] = []
    count = len(n.nodes)
    for i, node in enumerate(n.nodes):
        for a in node.args:
            if not 0 <= a < count:
                diags.append(f"node {i} ({node.name}): arg {a} out of range")
        need = {"in": 0, "const": 0, "add": 2, "mul": 2, "cmul": 1, "shl": 1,
                "rom": 1, "requant": 1, "lutaddr": 1, "ctrl": 1,
                "fsm_next": 2, "reg": 1}.get(node.kind)
        if node.kind == "mux":
            if len(node.args) < 3:
                diags.append(f"node {i} ({node.name}): mux needs a select "
                             f"and at least two choices")
        elif need is None:
            diags.append(f"node {i} ({node.name}): unknown kind {node.kind!r}")
        elif len(node.args) != need:
            diags.append(f"node {i} ({node.name}): {node.kind} expects "
                         f"{need} args, has {len(node.args)}")
        if node.kind in ("ctrl", "fsm_next") and n.controller is None:
            diags.append(f"node {i} ({node.name}): {node.kind} without a "
                         f"controller")
    if diags:
        return diags

    color = [0] * count

    def visit(i: int) -> bool:
        if color[i] == 2:
            return True
        if color[i] == 1:
            diags.append(f"combinational cycle through node {i} "
                         f"({n.nodes[i].name})")
            return False
        color[i] = 1
        ok = True
        if n.nodes[i].kind != "reg":
            for a in n.nodes[i].args:
                ok = visit(a) and ok
        color[i] = 2
        return ok

    for i in range(count):
        visit(i)
    for name, src in n.outputs:
        if not 0 <= src < count:
            diags.append(f"output {name}: source {src} out of range")
    return diags


def topo_order(n: Netlist, reverse_ties: bool = False) -> list[int]:
    """A valid combinational evaluation order (registers and inputs are
    sources). Two different tie-break directions expose order dependence."""
    indeg = [0] * len(n.nodes)
    consumers: list[list[int]] = [[] for _ in n.nodes]
    for i, node in enumerate(n.nodes):
        if node.kind == "reg":
            continue
        for a in node.args:
            if n.nodes[a].kind not in ("reg", "in"):
                indeg[i] += 1
                consumers[a].append(i)
    ready = [i for i, node in enumerate(n.nodes)
             if node.kind not in ("reg", "in") and indeg[i] == 0]
    ready.sort(reverse=reverse_ties)
    order: list[int] = []
    while ready:
        i = ready.pop()
        order.append(i)
        added = False
        for c in consumers[i]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
                added = True
        if added:
            ready.sort(reverse=reverse_ties)
    if len(order) != sum(1 for x in n.nodes if x.kind not in ("reg", "in")):
        raise NetlistError("combinational cycle detected at load")
    return order


def moore_violations(n: Netlist) -> list[str]:
    """Combinational paths from data inputs to controller outputs.

    Data inputs are every port except clock/reset/data_valid_in (those are
    control). An empty list certifies the Moore property structurally."""
    data_ids = {i for name, i in n.inputs
                if name not in ("data_valid_in", "clock", "reset")}
    reach = set(data_ids)
    changed = True
    while changed:
        changed = False
        for i, node in enumerate(n.nodes):
            if node.kind == "reg" or i in reach:
                continue
            if any(a in reach for a in node.args):
                reach.add(i)
                changed = True
    return [f"data input reaches controller output {node.name}"
            for i, node in enumerate(n.nodes)
            if node.kind == "ctrl" and i in reach]


@dataclass(frozen=True)
class DelayModel:
    """Unit-delay estimates per combinational node kind. Multipliers
    dominate; table reads and adders count one unit."""

    delays: dict = field(default_factory=lambda: {
        "mul": 3, "cmul": 3, "add": 1, "rom": 1, "lutaddr": 1, "mux": 1,
        "requant": 1, "shl": 0, "const": 0, "ctrl": 0, "fsm_next": 1,
        "in": 0, "reg": 0,
    })

    def of(self, kind: str) -> int:
        return self.delays.get(kind, 1)


def critical_path(n: Netlist, dm: Optional[DelayModel] = None) -> int:
    """Longest register-to-register (or port-to-port) combinational delay."""
    dm = dm or DelayModel()
    arrival = [0] * len(n.nodes)
    for i in topo_order(n):
        node = n.nodes[i]
        best = 0
        for a in node.args:
            if n.nodes[a].kind in ("reg", "in"):
                best = max(best, 0)
            else:
                best = max(best, arrival[a])
        arrival[i] = best + dm.of(node.kind)
    return max(arrival, default=0)

"""Model- and netlist-level optimization passes.

Model level: state-transition fusion folds runs of consecutive linear
update steps into precomputed matrix products, trading ROM words for
cycles. Netlist level: multiplier pipelining, register retiming, and
C-slow interleaving, all operating on the flat synchronous IR so their
effect is visible to the cycle-accurate interpreter and the emitter.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

import numpy as np

from .graph import (GraphBuilder, ModelError, ParamTable, StateSpaceModel,
                    extract_affine_step, first_nonlinear_node)
from .netlist import (DelayModel, Netlist, NetlistError, NlNode,
                      critical_path)

FUSED_TABLE = "fused_transition"


# ---------------------------------------------------------------------------
# State-transition fusion.

def fuse_state_transition(m: StateSpaceModel, j: int) -> StateSpaceModel:
    """Fold each run of j+1 consecutive update steps x[k+1] = A[k] x[k]
    into one step with the precomputed product A[k+j] ... A[k].

    Only valid when the update is purely linear in the state: any
    activation, input term, or additive constant would not commute with
    the product. j+1 must divide the horizon so runs tile it exactly.
    """
    if j < 0:
        raise ModelError(f"fusion depth must be >= 0, got {j}")
    bad = first_nonlinear_node(m)
    if bad is not None:
        nid, why = bad
        raise ModelError(
            f"cannot fuse: update step is not purely linear in the state "
            f"(node {nid}: {why})")
    run = j + 1
    if m.horizon % run:
        raise ModelError(
            f"fusion run length {run} does not divide horizon {m.horizon}")
    if FUSED_TABLE in m.params:
        raise ModelError(f"model already carries a {FUSED_TABLE!r} table")
    if j == 0:
        return m

    step = extract_affine_step(m)
    mats = [np.asarray(a, dtype=float) for a in step.state_mats]
    fused = []
    for g in range(m.horizon // run):
        phi = mats[g * run]
        for k in range(1, run):
            phi = mats[g * run + k] @ phi
        fused.append(phi)

    params = dict(m.params)
    params[FUSED_TABLE] = ParamTable(tuple(fused), static=False)
    b = GraphBuilder()
    x = b.state_in()
    update = b.build([b.matvec(FUSED_TABLE, x)])
    return StateSpaceModel(
        state_dim=m.state_dim, input_dim=m.input_dim,
        output_dim=m.output_dim, horizon=m.horizon // run,
        initial_state=m.initial_state, update_graph=update,
        output_graph=m.output_graph, params=params)


# ---------------------------------------------------------------------------
# Netlist helpers shared by the structural passes.

def _consumers(nodes: list[NlNode]) -> list[list[int]]:
    cons: list[list[int]] = [[] for _ in nodes]
    for i, node in enumerate(nodes):
        for a in node.args:
            cons[a].append(i)
    return cons

def _rewire(nodes: list[NlNode], old: int, new: int,
            skip: frozenset[int] = frozenset()) -> None:
    for i, node in enumerate(nodes):
        if i in skip or old not in node.args:
            continue
        nodes[i] = replace(node, args=tuple(new if a == old else a
                                            for a in node.args))

def _remap_outputs(outs, old: int, new: int):
    return tuple((nm, new if s == old else s) for nm, s in outs)

def _drop_nodes(nodes: list[NlNode], outs, dead: set[int]):
    remap: dict[int, int] = {}
    kept: list[NlNode] = []
    for i, node in enumerate(nodes):
        if i in dead:
            continue
        remap[i] = len(kept)
        kept.append(node)
    kept = [replace(nd, args=tuple(remap[a] for a in nd.args)) for nd in kept]
    outs2 = tuple((nm, remap[s]) for nm, s in outs)
    return kept, outs2, remap


# ---------------------------------------------------------------------------
# Multiplier pipelining.

def pipeline_multiplier(n: Netlist, node: int, stages: int) -> Netlist:
    """Insert `stages` pipeline registers after a multiplier, rewiring its
    fanout to the last stage. The pass is purely structural: it changes
    cycle alignment, and the equivalence gate is what decides whether the
    surrounding schedule tolerates that."""
    if not 0 <= node < len(n.nodes):
        raise NetlistError(f"node id {node} out of range")
    target = n.nodes[node]
    if target.kind not in ("mul", "cmul"):
        raise NetlistError(
            f"node {node} ({target.name}) is a {target.kind}, not a "
            "multiplier")
    if stages < 0:
        raise NetlistError(f"stages must be >= 0, got {stages}")
    if stages == 0:
        return n

    nodes = list(n.nodes)
    outs = n.outputs
    prev = node
    first_new = len(nodes)
    for s in range(stages):
        nodes.append(NlNode("reg", (prev,), target.fmt, 0,
                            f"{target.name}_p{s + 1}", target.group,
                            target.inst))
        prev = len(nodes) - 1
    _rewire(nodes, node, prev, skip=frozenset((first_new,)))
    outs = _remap_outputs(outs, node, prev)
    meta = n.meta
    if meta is not None:
        meta = replace(meta, mul_pipeline=max(meta.mul_pipeline, stages))
    return Netlist(tuple(nodes), n.inputs, outs, n.controller, meta)


# ---------------------------------------------------------------------------
# Retiming.

_ZERO_PRESERVING = ("add", "mul", "cmul", "shl", "requant", "mux")


def _cyclic_regs(nodes: list[NlNode], cons: list[list[int]]) -> set[int]:
    """Registers that can reach themselves; their position encodes loop
    state and must not move."""
    cyclic: set[int] = set()
    for r, node in enumerate(nodes):
        if node.kind != "reg":
            continue
        seen = set()
        stack = list(cons[r])
        while stack:
            i = stack.pop()
            if i == r:
                cyclic.add(r)
                break
            if i in seen:
                continue
            seen.add(i)
            stack.extend(cons[i])
    return cyclic


def _zero_preserving(node: NlNode) -> bool:
    if node.kind in _ZERO_PRESERVING:
        return True
    if node.kind == "rom":
        return bool(node.payload) and node.payload[0] == 0
    return False


class _RetimeScan:
    """Per-round structural facts shared by every candidate move."""

    def __init__(self, n: Netlist):
        self.n = n
        self.nodes = list(n.nodes)
        self.cons = _consumers(self.nodes)
        self.cyclic = _cyclic_regs(self.nodes, self.cons)
        self.out_srcs = {s for _, s in n.outputs}

    def _movable_reg(self, r: int) -> bool:
        rn = self.nodes[r]
        return (rn.kind == "reg" and rn.payload == 0
                and r not in self.cyclic and r not in self.out_srcs)

    def backward(self, v: int) -> Optional[Netlist]:
        """Move the registers on all fanout edges of node v to its inputs."""
        node = self.nodes[v]
        if (not _zero_preserving(node) or not node.args
                or v in self.out_srcs):
            return None
        sinks = self.cons[v]
        if not sinks:
            return None
        for r in sinks:
            if not self._movable_reg(r) or self.nodes[r].args != (v,):
                return None
        nodes = list(self.nodes)
        new_args = []
        for a in node.args:
            nodes.append(NlNode("reg", (a,), nodes[a].fmt, 0,
                                f"rt_b{v}_{len(nodes)}", node.group,
                                node.inst))
            new_args.append(len(nodes) - 1)
        nodes[v] = replace(node, args=tuple(new_args))
        outs = self.n.outputs
        for r in set(sinks):
            _rewire(nodes, r, v)
            outs = _remap_outputs(outs, r, v)
        nodes, outs, _ = _drop_nodes(nodes, outs, set(sinks))
        return Netlist(tuple(nodes), self.n.inputs, outs,
                       self.n.controller, self.n.meta)

    def forward(self, v: int) -> Optional[Netlist]:
        """Move one register from every input edge of node v to its output."""
        node = self.nodes[v]
        if (not _zero_preserving(node) or not node.args
                or v in self.out_srcs):
            return None
        for a in node.args:
            if not self._movable_reg(a) or self.cons[a] != [v]:
                return None
        nodes = list(self.nodes)
        nodes[v] = replace(node,
                           args=tuple(nodes[a].args[0] for a in node.args))
        nodes.append(NlNode("reg", (v,), node.fmt, 0,
                            f"rt_f{v}_{len(nodes)}", node.group, node.inst))
        nr = len(nodes) - 1
        _rewire(nodes, v, nr, skip=frozenset((nr,)))
        outs = _remap_outputs(self.n.outputs, v, nr)
        nodes, outs, _ = _drop_nodes(nodes, outs, set(node.args))
        return Netlist(tuple(nodes), self.n.inputs, outs,
                       self.n.controller, self.n.meta)


def retime(n: Netlist, dm: Optional[DelayModel] = None,
           max_rounds: int = 1000) -> Netlist:
    """Greedy minimax retiming: repeatedly take the register move that
    shrinks the critical path the most, stop when no move helps.

    Only zero-initialized registers outside feedback loops move, across
    nodes that map all-zero inputs to zero, so reset behavior and every
    port's cycle alignment are preserved exactly. A netlist whose
    registers all sit in loops (the elaborated designs here, where even
    hold registers close a mux loop) is returned unchanged.
    """
    dm = dm or DelayModel()
    best = critical_path(n, dm)
    for _ in range(max_rounds):
        scan = _RetimeScan(n)
        cand: Optional[Netlist] = None
        cand_cp = best
        for v in range(len(n.nodes)):
            if n.nodes[v].kind in ("reg", "in", "const"):
                continue
            for attempt in (scan.backward(v), scan.forward(v)):
                if attempt is None:
                    continue
                cp = critical_path(attempt, dm)
                if cp < cand_cp:
                    cand, cand_cp = attempt, cp
        if cand is None:
            return n
        n, best = cand, cand_cp
    return n


# ---------------------------------------------------------------------------
# C-slow interleaving.

def c_slow(n: Netlist, factor: int) -> Netlist:
    """Replace every register with a chain of `factor` registers. The
    result time-multiplexes `factor` independent copies of the original
    machine: the copy fed on cycles with index r mod factor behaves
    exactly like the original running at 1/factor rate. Each chain
    register copies the original init so every copy resets identically."""
    if factor < 1:
        raise NetlistError(f"interleave factor must be >= 1, got {factor}")
    if factor == 1:
        return n
    nodes = list(n.nodes)
    outs = n.outputs
    orig_regs = [i for i, nd in enumerate(n.nodes) if nd.kind == "reg"]
    tail: dict[int, int] = {}
    for r in orig_regs:
        rn = nodes[r]
        prev = r
        for s in range(factor - 1):
            nodes.append(NlNode("reg", (prev,), rn.fmt, rn.payload,
                                f"{rn.name}_c{s + 1}", rn.group, rn.inst))
            prev = len(nodes) - 1
        tail[r] = prev
    for r in orig_regs:
        skip = frozenset(i for i in range(len(n.nodes), len(nodes))
                         if nodes[i].args == (r,))
        _rewire(nodes, r, tail[r], skip=skip)
        outs = _remap_outputs(outs, r, tail[r])
    meta = n.meta
    if meta is not None:
        meta = replace(meta, cslow=meta.cslow * factor)
    return Netlist(tuple(nodes), n.inputs, outs, n.controller, meta)

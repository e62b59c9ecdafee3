"""Shared fixtures: the canonical small network, its elaborated netlist,
an independent feed-forward oracle, and a random-netlist generator for
the structural passes."""

import numpy as np
import pytest

from ss2rtl import (
    FixedModel, FixedPointFormat, FormatAssignment, NetlistBuilder,
    Schedule, build_state_space, elaborate, gen_activation_lut, random_nn,
)

FIG_SHAPE = dict(input_dim=3, hidden_layers=4, nodes_per_layer=4,
                 output_dim=2)


def mlp_forward(nn, u):
    """Plain feed-forward evaluation, written against the weight arrays
    directly so it shares no code with the state-space rewrite."""
    act = np.tanh if nn.activation == "tanh" else (lambda v: v)
    h = act(nn.input_weights.T @ np.asarray(u, dtype=float) + nn.biases[0])
    for W, b in zip(nn.hidden_weights, nn.biases[1:]):
        h = act(W @ h + b)
    y = nn.output_weights @ h
    if nn.output_activation == "tanh":
        y = np.tanh(y)
    return y


@pytest.fixture(scope="session")
def small_nn():
    return random_nn(seed=11, **FIG_SHAPE)


@pytest.fixture(scope="session")
def small_model(small_nn):
    return build_state_space(small_nn)


def make_fixed(m, width, addr_bits=10):
    """(formats, lut, FixedModel) at a uniform word length."""
    fmts = FormatAssignment.uniform(width)
    lut = gen_activation_lut("tanh", fmts.accumulator, fmts.state, addr_bits)
    return fmts, lut, FixedModel(m, fmts, lut)


def make_netlist(m, width=16, mults=4, addr_bits=10):
    fmts, lut, fixed = make_fixed(m, width, addr_bits)
    return elaborate(m, Schedule(mults), fmts, lut), fixed


@pytest.fixture(scope="session")
def small_netlist(small_model):
    n, fixed = make_netlist(small_model)
    return n, fixed


def random_pipeline_netlist(seed, depth=5, width=3):
    """Feedforward DAG with zero-init registers scattered through it, the
    kind of structure retiming is allowed to rearrange. Value growth is
    tracked so no register ever commits outside its format."""
    rng = np.random.default_rng(seed)
    wide = FixedPointFormat(64, 12)
    narrow = FixedPointFormat(64, 8)
    in_bound = 1 << 15
    b = NetlistBuilder()
    sel = b.port("sel", FixedPointFormat(2, 0))
    live = [b.port(f"u{j}", FixedPointFormat(16, 12)) for j in range(width)]
    bound = {i: in_bound for i in live}
    bound[sel] = 1
    for d in range(depth):
        nxt = []
        for j in range(width):
            a = int(rng.choice(live))
            c = int(rng.choice(live))
            kind = rng.choice(
                ["add", "mul", "cmul", "shl", "mux", "requant", "reg"])
            if kind == "mul" and bound[a] * bound[c] > (1 << 55):
                kind = "add"
            if kind == "add":
                i = b.add("add", (a, c), wide)
                bound[i] = bound[a] + bound[c]
            elif kind == "mul":
                i = b.add("mul", (a, c), wide)
                bound[i] = bound[a] * bound[c]
            elif kind == "cmul":
                k = int(rng.integers(-5, 6))
                i = b.add("cmul", (a,), wide, payload=k)
                bound[i] = abs(k) * bound[a]
            elif kind == "shl":
                s = int(rng.integers(0, 3))
                if bound[a] << s > (1 << 55):
                    s = 0
                i = b.add("shl", (a,), wide, payload=s)
                bound[i] = bound[a] << s
            elif kind == "mux":
                i = b.add("mux", (sel, a, c), wide)
                bound[i] = max(bound[a], bound[c])
            elif kind == "requant":
                i = b.add("requant", (a,), narrow, payload=(wide, narrow))
                bound[i] = min(narrow.max_raw, (bound[a] >> 4) + 1)
            else:
                i = b.add("reg", (a,), wide, payload=0)
                bound[i] = bound[a]
            nxt.append(i)
        live = nxt
    for j, i in enumerate(live):
        b.output(f"y{j}", i)
    return b.build()


def full_topo_order(net):
    """Topological order over every node including registers; only valid
    for acyclic (feedforward) netlists."""
    indeg = [0] * len(net.nodes)
    cons = [[] for _ in net.nodes]
    for i, node in enumerate(net.nodes):
        for a in node.args:
            indeg[i] += 1
            cons[a].append(i)
    ready = [i for i, d in enumerate(indeg) if d == 0]
    order = []
    while ready:
        i = ready.pop()
        order.append(i)
        for c in cons[i]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    assert len(order) == len(net.nodes), "netlist has a register loop"
    return order


def reg_path_extremes(net):
    """(min, max) register count over all paths from each input port to
    each output, keyed by (input name, output name). Retiming must keep
    these pairs identical: registers may move, path weights may not."""
    order = full_topo_order(net)
    result = {}
    for in_name, src in net.inputs:
        lo = {src: 0}
        hi = {src: 0}
        for i in order:
            node = net.nodes[i]
            w = 1 if node.kind == "reg" else 0
            for a in node.args:
                if a in lo:
                    cand = lo[a] + w
                    if i not in lo or cand < lo[i]:
                        lo[i] = cand
                    cand = hi[a] + w
                    if i not in hi or cand > hi[i]:
                        hi[i] = cand
        for out_name, osrc in net.outputs:
            if osrc in lo:
                result[(in_name, out_name)] = (lo[osrc], hi[osrc])
    return result


def random_stimulus(net, cycles, seed):
    """One input dict per cycle, in-range for each port's format."""
    rng = np.random.default_rng(seed)
    stim = []
    for _ in range(cycles):
        d = {}
        for name, i in net.inputs:
            f = net.nodes[i].fmt
            if name == "sel":
                d[name] = int(rng.integers(0, 2))
            else:
                d[name] = int(rng.integers(max(f.min_raw, -(1 << 15)),
                                           min(f.max_raw, (1 << 15) - 1) + 1))
        stim.append(d)
    return stim

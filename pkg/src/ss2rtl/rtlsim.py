"""Cycle-accurate netlist interpreter.

The netlist is compiled once into a flat list of closures over a shared
value array, evaluated in topological order each clock; registers commit
simultaneously afterwards. All values are raw Python ints, so datapath
arithmetic is exact at any word length and a mismatch against the
functional model is a real divergence, not an artifact.

Outputs are sampled after combinational settling and before the clock
edge, which is what a testbench sampling on the opposite edge sees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .netlist import Netlist, NetlistError, topo_order
from .simulate import FixedModel, LutRom

_Op = Callable[[list, dict], None]


def _lutaddr_consts(lut: LutRom) -> tuple[int, int, int, int, int]:
    """Integer constants (lo_le, hi_ge, p, q, r) so that for raw inputs
    raw <= lo_le maps to bin 0, raw >= hi_ge maps to the top bin, and
    otherwise the bin is (raw * p - q) // r, exactly as the rational
    form floor((raw/2**n - lo) * depth / (hi - lo))."""
    n = lut.in_fmt.frac_length
    lo, hi = Fraction(lut.lo), Fraction(lut.hi)
    lo_le = math.floor(lo * (1 << n))
    hi_ge = math.ceil(hi * (1 << n))
    span = hi - lo
    t = lo * (1 << n)                      # raw-domain left edge
    p = t.denominator * lut.depth * span.denominator
    q = t.numerator * lut.depth * span.denominator
    r = t.denominator * (1 << n) * span.numerator
    return lo_le, hi_ge, p, q, r


class RtlSim:
    """One clock domain, synchronous reset to register init values."""

    def __init__(self, n: Netlist, reverse_ties: bool = False,
                 trace: bool = False):
        self.netlist = n
        self.cycle = 0
        self.trace: Optional[List[tuple[int, str, int]]] = [] if trace else None
        self._vals: list = [0] * len(n.nodes)
        self._consts: list[tuple[int, int]] = []
        self._regs: list[tuple[int, int, int, int, str]] = []
        self._inits: list[int] = []
        self._outs = tuple(n.outputs)
        self._ops: list[_Op] = []
        self._compile(reverse_ties)
        self.reset()

    # -- compilation ---------------------------------------------------------

    def _compile(self, reverse_ties: bool) -> None:
        n = self.netlist
        fsm = n.controller
        sig_cache: dict = {}
        nxt_cache: dict = {}

        for i, node in enumerate(n.nodes):
            if node.kind == "reg":
                fmt = node.fmt
                self._regs.append((i, node.args[0], fmt.min_raw,
                                   fmt.max_raw, node.name))
                self._inits.append(int(node.payload or 0))
            elif node.kind == "const":
                self._consts.append((i, int(node.payload or 0)))
            elif node.kind == "in":
                # ports are topological sources and settle before any logic
                def op(vals, inp, d=i, nm=node.name):
                    vals[d] = inp.get(nm, 0)
                self._ops.append(op)

        for i in topo_order(n, reverse_ties=reverse_ties):
            node = n.nodes[i]
            k = node.kind
            if k == "const":
                continue
            if k == "add":
                a, b = node.args
                def op(vals, inp, d=i, a=a, b=b):
                    vals[d] = vals[a] + vals[b]
            elif k == "mul":
                a, b = node.args
                def op(vals, inp, d=i, a=a, b=b):
                    vals[d] = vals[a] * vals[b]
            elif k == "cmul":
                (a,) = node.args
                def op(vals, inp, d=i, a=a, c=int(node.payload)):
                    vals[d] = c * vals[a]
            elif k == "shl":
                (a,) = node.args
                def op(vals, inp, d=i, a=a, s=int(node.payload)):
                    vals[d] = vals[a] << s
            elif k == "mux":
                sel = node.args[0]
                ch = node.args[1:]
                if len(ch) == 2:
                    c0, c1 = ch
                    def op(vals, inp, d=i, s=sel, c0=c0, c1=c1):
                        vals[d] = vals[c1] if vals[s] else vals[c0]
                else:
                    def op(vals, inp, d=i, s=sel, ch=ch):
                        vals[d] = vals[ch[vals[s]]]
            elif k == "rom":
                (a,) = node.args
                def op(vals, inp, d=i, a=a, t=tuple(node.payload)):
                    vals[d] = t[vals[a]]
            elif k == "requant":
                (a,) = node.args
                src_fmt, dst_fmt = node.payload
                shift = src_fmt.frac_length - dst_fmt.frac_length
                lo, hi = dst_fmt.min_raw, dst_fmt.max_raw
                if shift <= 0:
                    def op(vals, inp, d=i, a=a, sh=-shift, lo=lo, hi=hi):
                        v = vals[a] << sh
                        vals[d] = lo if v < lo else hi if v > hi else v
                else:
                    half = 1 << (shift - 1)
                    def op(vals, inp, d=i, a=a, sh=shift, hf=half,
                           lo=lo, hi=hi):
                        v = vals[a]
                        r = ((v + hf) >> sh if v >= 0
                             else -((-v + hf) >> sh))
                        vals[d] = lo if r < lo else hi if r > hi else r
            elif k == "lutaddr":
                (a,) = node.args
                lut: LutRom = node.payload
                lo_le, hi_ge, p, q, r = _lutaddr_consts(lut)
                top = lut.depth - 1
                def op(vals, inp, d=i, a=a, lo_le=lo_le, hi_ge=hi_ge,
                       p=p, q=q, r=r, top=top):
                    v = vals[a]
                    if v <= lo_le:
                        vals[d] = 0
                    elif v >= hi_ge:
                        vals[d] = top
                    else:
                        b = (v * p - q) // r
                        vals[d] = top if b > top else b
            elif k == "ctrl":
                if fsm is None:
                    raise NetlistError(f"ctrl node {node.name} without a "
                                       "controller")
                (a,) = node.args
                def op(vals, inp, d=i, a=a, nm=node.payload,
                       cache=sig_cache, f=fsm):
                    st = vals[a]
                    t = cache.get(st)
                    if t is None:
                        t = cache[st] = f.signals(st)
                    vals[d] = t[nm]
            elif k == "fsm_next":
                if fsm is None:
                    raise NetlistError(f"fsm_next node {node.name} without "
                                       "a controller")
                a, b = node.args
                def op(vals, inp, d=i, a=a, b=b, cache=nxt_cache, f=fsm):
                    key = (vals[a], vals[b])
                    t = cache.get(key, -1)
                    if t < 0:
                        t = cache[key] = f.next_state(key[0], 1 if key[1] else 0)
                    vals[d] = t
            else:
                raise NetlistError(f"cannot simulate node kind {k!r}")
            self._ops.append(op)

    # -- execution -----------------------------------------------------------

    def reset(self) -> None:
        self.cycle = 0
        vals = self._vals
        for i in range(len(vals)):
            vals[i] = 0
        for (rid, _, _, _, _), init in zip(self._regs, self._inits):
            vals[rid] = init
        for cid, cv in self._consts:
            vals[cid] = cv

    def step(self, inputs: Optional[Dict[str, int]] = None) -> Dict[str, int]:
        """One clock: settle combinational logic against the current
        register values and the given input port raws, sample the outputs,
        then commit every register at once."""
        inp = inputs if inputs is not None else {}
        vals = self._vals
        for op in self._ops:
            op(vals, inp)
        out = {name: vals[src] for name, src in self._outs}
        if self.trace is not None:
            c = self.cycle
            self.trace.extend((c, name, v) for name, v in out.items())
        news = [vals[src] for _, src, _, _, _ in self._regs]
        for (rid, _, lo, hi, name), v in zip(self._regs, news):
            if not lo <= v <= hi:
                raise NetlistError(
                    f"register {name} commits {v} outside its format range "
                    f"[{lo}, {hi}] at cycle {self.cycle}")
            vals[rid] = v
        self.cycle += 1
        return out

    def trace_csv(self) -> str:
        if self.trace is None:
            raise ValueError("tracing was not enabled")
        lines = ["cycle,port,raw"]
        lines += [f"{c},{p},{v}" for c, p, v in self.trace]
        return "\n".join(lines) + "\n"


def run(n: Netlist, stimulus: Sequence[Dict[str, int]],
        reverse_ties: bool = False) -> list[Dict[str, int]]:
    """Apply one input dict per cycle from reset; collect sampled outputs."""
    sim = RtlSim(n, reverse_ties=reverse_ties)
    return [sim.step(s) for s in stimulus]


# ---------------------------------------------------------------------------
# Handshake driver.

@dataclass
class StreamResult:
    outputs: list[tuple[int, ...]]
    latencies: list[int]           # data_valid_in to data_valid_out, cycles


def _u_ports(n: Netlist) -> list[str]:
    return [name for name, _ in n.inputs if name != "data_valid_in"]


def _y_ports(n: Netlist) -> list[str]:
    return [name for name, _ in n.outputs if name != "data_valid_out"]


def drive_streams(n: Netlist, streams: Dict[int, Sequence[Sequence[int]]],
                  sim: Optional[RtlSim] = None,
                  max_cycles: Optional[int] = None) -> Dict[int, StreamResult]:
    """Feed raw input samples through the valid handshake.

    After C-slowing by C the design time-multiplexes C independent
    streams; stream r owns the cycles with index r mod C. Each sample is
    presented with data_valid_in for one stream cycle, held through the
    following load cycle, and its outputs are captured on the stream
    cycle where data_valid_out rises.
    """
    if n.meta is None:
        raise NetlistError("driver needs an elaborated netlist")
    C = n.meta.cslow
    for r in streams:
        if not 0 <= r < C:
            raise ValueError(f"stream {r} out of range for factor {C}")
    base = (1 + n.meta.horizon * (n.meta.macc_cycles + 2) + 1) * C
    total = sum(len(s) for s in streams.values())
    if max_cycles is None:
        max_cycles = 2 * total * (base + 4 * C) + 16 * C + 64
    u_names = _u_ports(n)
    y_names = _y_ports(n)

    sim = sim if sim is not None else RtlSim(n)
    res = {r: StreamResult([], []) for r in streams}
    queue = {r: list(map(list, streams[r])) for r in streams}
    phase = {r: "send" if queue[r] else "done" for r in streams}
    start = {r: 0 for r in streams}
    pending = sum(len(q) for q in queue.values())

    cycle = 0
    while pending and cycle < max_cycles:
        r = cycle % C
        inp: Dict[str, int] = {}
        if r in phase and phase[r] not in ("done",):
            ph = phase[r]
            if ph == "send":
                sample = queue[r][0]
                if len(sample) != len(u_names):
                    raise ValueError(
                        f"sample has {len(sample)} values for "
                        f"{len(u_names)} input ports")
                inp = dict(zip(u_names, sample))
                inp["data_valid_in"] = 1
                start[r] = cycle
                phase[r] = "hold"
            elif ph == "hold":
                inp = dict(zip(u_names, queue[r][0]))
                phase[r] = "wait"
        out = sim.step(inp)
        if r in phase and phase[r] == "wait" and out.get("data_valid_out"):
            res[r].outputs.append(tuple(out[name] for name in y_names))
            res[r].latencies.append(cycle - start[r])
            queue[r].pop(0)
            pending -= 1
            phase[r] = "send" if queue[r] else "done"
        cycle += 1
    if pending:
        raise NetlistError(
            f"no data_valid_out after {max_cycles} cycles with {pending} "
            "samples outstanding; controller is wedged or the latency "
            "bound is wrong")
    return res


def drive_samples(n: Netlist, samples: Sequence[Sequence[int]],
                  stream: int = 0,
                  max_cycles: Optional[int] = None) -> StreamResult:
    return drive_streams(n, {stream: samples}, max_cycles=max_cycles)[stream]


# ---------------------------------------------------------------------------
# Functional-vs-netlist equivalence gate.

@dataclass
class EquivalenceReport:
    equivalent: bool
    samples: int
    first_divergence: Optional[tuple[int, int, int, int]] = None
    # (sample index, output index, functional raw, netlist raw)

    def describe(self) -> str:
        if self.equivalent:
            return f"bit-exact over {self.samples} samples"
        s, o, want, got = self.first_divergence
        return (f"divergence at sample {s} output {o}: "
                f"functional {want}, netlist {got}")


def compare_with_functional(fixed: FixedModel, n: Netlist,
                            inputs: Sequence[Sequence[float]]
                            ) -> EquivalenceReport:
    """Run the same stimuli through the functional fixed-point model and
    the netlist interpreter and demand raw-for-raw equality."""
    raw_in = [fixed.quantize_input(u) for u in inputs]
    want = [fixed.run_raw(u) for u in raw_in]
    got = drive_samples(n, raw_in).outputs
    for si, (w, g) in enumerate(zip(want, got)):
        for oi, (wv, gv) in enumerate(zip(w, g)):
            if wv != gv:
                return EquivalenceReport(False, len(raw_in),
                                         (si, oi, wv, gv))
    return EquivalenceReport(True, len(raw_in))


def random_inputs(input_dim: int, samples: int, seed: int,
                  span: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-span, span, size=(samples, input_dim))

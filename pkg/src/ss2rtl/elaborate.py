"""Elaboration: state-space model to synchronous netlist.

The datapath instantiates one node unit per state element, each holding p
multiply-accumulate units time-shared over ceil(max(L, M) / p) cycles per
layer (the count is uniform across layers, including the input layer, so
the sample latency is a closed form). A single M-word register bank holds
the state between layers; layer parameters live in ROMs addressed by the
controller's layer and slot counters. Each node is narrowed exactly once
per layer, at its activation input. The output map is a constant-
coefficient combinational stage read out during WRITE_OUT.

Elaboration accepts any model whose update step is affine followed by a
uniform activation, provided step 0 does not read the state (the input is
folded into the first pre-activation) and later steps do not read the
input. Networks rewritten by the frontend satisfy this by construction.
"""

from __future__ import annotations

from typing import Optional

from .fixedpoint import FixedPointFormat, FormatAssignment, macc_format
from .graph import ModelError, StateSpaceModel
from .netlist import (ControllerFsm, CTRL_SIGNALS, ElabInfo, Netlist,
                      NetlistBuilder, Schedule, ScheduleError,
                      ctrl_format, macc_cycles)
from .simulate import FixedModel, LutRom


def build_controller(layers: int, cycles: int) -> ControllerFsm:
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    if cycles < 1:
        raise ValueError(f"macc cycles must be >= 1, got {cycles}")
    return ControllerFsm(layers, cycles)


def latency(n: Netlist) -> int:
    """data_valid_in to data_valid_out distance in clock cycles:
    1 load cycle, layers * (macc_cycles + 2) compute cycles, 1 write-out
    cycle; scaled by the interleave factor after C-slow."""
    if n.meta is None:
        raise ValueError("netlist has no elaboration metadata")
    m = n.meta
    return (1 + m.horizon * (m.macc_cycles + 2) + 1) * m.cslow


def elaborate(m: StateSpaceModel, s: Schedule, fmts: FormatAssignment,
              lut: Optional[LutRom] = None) -> Netlist:
    fixed = FixedModel(m, fmts, lut)   # validates, extracts, quantizes
    M, L, N, P = m.state_dim, m.input_dim, m.horizon, m.output_dim

    if lut is None and (fixed.step.activation == "tanh"
                        or fixed.out.activation == "tanh"):
        raise ModelError("tanh elaboration needs a lookup table; exact "
                         "activation exists only in analysis simulations")
    if any(v for row in fixed.w_state[0] for v in row):
        raise ModelError(
            "step 0 reads the state; only input-folded models elaborate")
    for k in range(1, N):
        if any(v for row in fixed.w_input[k] for v in row):
            raise ModelError(
                f"step {k} reads the input; inputs are wired to step 0 only")
    if fmts.input != fmts.state:
        raise ModelError(
            f"input format {fmts.input} must equal state format "
            f"{fmts.state}: both drive the shared MACC operand port")
    wfmt = fmts.table_format("input_weights")
    if wfmt != fmts.table_format("state_weights"):
        raise ModelError("input and state weights share one ROM per "
                         "multiplier and must use one format")
    bfmt = fmts.table_format("biases")
    ofmt_w = fmts.table_format("output_weights")

    p = s.multipliers_per_node
    if not 1 <= p <= M:
        raise ScheduleError(
            f"multipliers_per_node must be in [1, {M}], got {p}")
    c = macc_cycles(M, L, p)
    base_latency = 1 + N * (c + 2) + 1
    clock_ratio = s.clock_ratio if s.clock_ratio is not None else base_latency
    if clock_ratio < base_latency:
        raise ScheduleError(
            f"clock_ratio {clock_ratio} is below the pipeline latency "
            f"{base_latency}")
    sched = Schedule(p, clock_ratio)

    dfmt = fmts.state
    nd, nw = dfmt.frac_length, wfmt.frac_length
    accfmt = macc_format(dfmt, wfmt, max(L, M))
    acc_frac = nd + nw
    bias_shift = acc_frac - bfmt.frac_length
    if bias_shift < 0:
        raise ModelError("bias format is finer than the accumulator; "
                         "reduce its fraction length")
    tanh_hidden = fixed.step.activation == "tanh"
    preact_fmt = fmts.accumulator if tanh_hidden else fmts.state

    fsm = build_controller(N, c)
    b = NetlistBuilder()

    # --- ports and controller ----------------------------------------------
    dvi = b.port("data_valid_in", ctrl_format(1))
    u_ports = [b.port(f"u{j}", fmts.input) for j in range(L)]

    fsm_reg = b.add("reg", (0,), ctrl_format(fsm.state_bits),
                    payload=fsm.idle, name="fsm_state", group="ctrl")
    nxt = b.add("fsm_next", (fsm_reg, dvi), ctrl_format(fsm.state_bits),
                name="fsm_nxt", group="ctrl")
    b.patch_args(fsm_reg, (nxt,))
    sig = {name: b.add("ctrl", (fsm_reg,),
                       ctrl_format(fsm.signal_width(name)),
                       payload=name, name=f"sig_{name}", group="ctrl")
           for name in CTRL_SIGNALS}

    # --- input capture bank --------------------------------------------------
    in_q = []
    for j in range(L):
        r = b.add("reg", (0,), fmts.input, payload=0,
                  name=f"in_reg{j}", group="input_layer")
        mx = b.add("mux", (sig["load_en"], r, u_ports[j]), fmts.input,
                   name=f"in_hold{j}", group="input_layer")
        b.patch_args(r, (mx,))
        in_q.append(r)

    # --- state bank placeholders (written by the activation stage) ----------
    state_q = [b.add("reg", (0,), fmts.state, payload=0,
                     name=f"state{i}", group="hidden_layer",
                     inst=None if not tanh_hidden else f"act:{i}")
               for i in range(M)]

    # --- shared operand selection: slot t feeds term index t*p + q ----------
    zero_d = b.add("const", (), dfmt, payload=0, name="zero_d",
                   group="hidden_layer")
    data_op = []
    for q in range(p):
        slots = []
        for t in range(c):
            j = t * p + q
            ui = in_q[j] if j < L else zero_d
            xi = state_q[j] if j < M else zero_d
            slots.append(b.add("mux", (sig["sel_input"], xi, ui), dfmt,
                               name=f"slot_q{q}_t{t}", group="hidden_layer"))
        if c == 1:
            data_op.append(slots[0])
        else:
            data_op.append(b.add("mux", (sig["term_slot"], *slots), dfmt,
                                 name=f"dop_q{q}", group="hidden_layer"))

    # --- weight ROMs and MACC units -----------------------------------------
    def weight_entry(k: int, i: int, j: int) -> int:
        if k == 0:
            return fixed.w_input[0][i][j] if j < L else 0
        return fixed.w_state[k][i][j] if j < M else 0

    prod_fmt = FixedPointFormat(dfmt.word_length + wfmt.word_length,
                                acc_frac)
    acc_q: list[list[int]] = []
    for i in range(M):
        accs = []
        for q in range(p):
            table = tuple(weight_entry(k, i, t * p + q)
                          for k in range(N) for t in range(c))
            w = b.add("rom", (sig["w_addr"],), wfmt, payload=table,
                      name=f"wrom_n{i}m{q}", group="hidden_layer")
            tag = f"macc:{i}:{q}"
            prod = b.add("mul", (data_op[q], w), prod_fmt,
                         name=f"prod_n{i}m{q}", group="hidden_layer", inst=tag)
            r = b.add("reg", (0,), accfmt, payload=0,
                      name=f"acc_n{i}m{q}", group="hidden_layer", inst=tag)
            acc_add = b.add("add", (r, prod), accfmt,
                            name=f"accadd_n{i}m{q}", group="hidden_layer",
                            inst=tag)
            clr = b.add("mux", (sig["acc_clear"], acc_add, prod), accfmt,
                        name=f"accclr_n{i}m{q}", group="hidden_layer",
                        inst=tag)
            hold = b.add("mux", (sig["acc_en"], r, clr), accfmt,
                         name=f"acchold_n{i}m{q}", group="hidden_layer",
                         inst=tag)
            b.patch_args(r, (hold,))
            accs.append(r)
        acc_q.append(accs)

    # --- per-node sum, bias, single requantization ---------------------------
    for i in range(M):
        brom = b.add("rom", (sig["layer"],), bfmt,
                     payload=tuple(fixed.bias[k][i] for k in range(N)),
                     name=f"brom_n{i}", group="hidden_layer")
        bsh = b.add("shl", (brom,), accfmt, payload=bias_shift,
                    name=f"bal_n{i}", group="hidden_layer")
        total = acc_q[i][0]
        for q in range(1, p):
            total = b.add("add", (total, acc_q[i][q]), accfmt,
                          name=f"nsum_n{i}q{q}", group="hidden_layer")
        total = b.add("add", (total, bsh), accfmt,
                      name=f"nsum_n{i}", group="hidden_layer")
        rq = b.add("requant", (total,), preact_fmt,
                   payload=(accfmt, preact_fmt),
                   name=f"narrow_n{i}", group="hidden_layer")
        pre = b.add("reg", (0,), preact_fmt, payload=0,
                    name=f"preact_n{i}", group="hidden_layer")
        pmx = b.add("mux", (sig["preact_en"], pre, rq), preact_fmt,
                    name=f"prehold_n{i}", group="hidden_layer")
        b.patch_args(pre, (pmx,))

        if tanh_hidden:
            tag = f"act:{i}"
            addr = b.add("lutaddr", (pre,), ctrl_format(lut.addr_bits),
                         payload=lut, name=f"actaddr_n{i}",
                         group="hidden_layer", inst=tag)
            val = b.add("rom", (addr,), fmts.state,
                        payload=tuple(e.raw for e in lut.entries),
                        name=f"actrom_n{i}", group="hidden_layer", inst=tag)
            smx = b.add("mux", (sig["state_en"], state_q[i], val),
                        fmts.state, name=f"statehold_n{i}",
                        group="hidden_layer", inst=tag)
        else:
            smx = b.add("mux", (sig["state_en"], state_q[i], pre),
                        fmts.state, name=f"statehold_n{i}",
                        group="hidden_layer")
        b.patch_args(state_q[i], (smx,))

    # --- combinational output stage ------------------------------------------
    out_acc_fmt = macc_format(dfmt, ofmt_w, max(L, M))
    out_acc_frac = nd + ofmt_w.frac_length
    end_lut = fixed.end_lut
    for i in range(P):
        total = None
        for j in range(M):
            coeff = fixed.w_out[i][j]
            term = b.add("cmul", (state_q[j],), out_acc_fmt, payload=coeff,
                         name=f"yterm{i}_{j}", group="output_layer")
            total = term if total is None else b.add(
                "add", (total, term), out_acc_fmt,
                name=f"ysum{i}_{j}", group="output_layer")
        if any(fixed.w_out_in[i]):
            for j in range(L):
                term = b.add("cmul", (in_q[j],), out_acc_fmt,
                             payload=fixed.w_out_in[i][j],
                             name=f"yuterm{i}_{j}", group="output_layer")
                total = b.add("add", (total, term), out_acc_fmt,
                              name=f"yusum{i}_{j}", group="output_layer")
        if fixed.out_bias[i]:
            cb = b.add("const", (), bfmt, payload=fixed.out_bias[i],
                       name=f"ybias{i}", group="output_layer")
            sh = b.add("shl", (cb,), out_acc_fmt,
                       payload=out_acc_frac - bfmt.frac_length,
                       name=f"ybal{i}", group="output_layer")
            total = b.add("add", (total, sh), out_acc_fmt,
                          name=f"ybsum{i}", group="output_layer")
        if end_lut is not None:
            rq = b.add("requant", (total,), fmts.accumulator,
                       payload=(out_acc_fmt, fmts.accumulator),
                       name=f"ynarrow{i}", group="output_layer")
            addr = b.add("lutaddr", (rq,), ctrl_format(end_lut.addr_bits),
                         payload=end_lut, name=f"yactaddr{i}",
                         group="output_layer")
            y = b.add("rom", (addr,), fmts.output,
                      payload=tuple(e.raw for e in end_lut.entries),
                      name=f"yactrom{i}", group="output_layer")
        else:
            y = b.add("requant", (total,), fmts.output,
                      payload=(out_acc_fmt, fmts.output),
                      name=f"ynarrow{i}", group="output_layer")
        b.output(f"y{i}", y)

    b.output("data_valid_out", sig["out_valid"])

    meta = ElabInfo(input_dim=L, state_dim=M, horizon=N, output_dim=P,
                    schedule=sched, macc_cycles=c, fmts=fmts, lut=lut,
                    activation=fixed.step.activation,
                    out_activation=fixed.out.activation)
    return b.build(controller=fsm, meta=meta)

"""Verilog emission.

Eight files per design: top, controller, input_layer, hidden_layer,
output_layer, activation_rom, macc, testbench. Tables and constants are
taken from the elaborated netlist (the thing the equivalence gate
verified), not recomputed from the model, so the emitted text cannot
drift from the verified design. Emission is deterministic: same netlist
and options, same bytes.

ROMs default to inline case tables so each file is self-contained;
mem_roms switches to $readmemh with companion .mem files. The testbench
inlines its stimulus and the expected outputs, which come from running
the netlist interpreter at emission time.

Supported scope: identity output activation, and an activation table
whose range endpoints are exact multiples of the operand's quantum with
a power-of-two span, so address extraction is a compare plus shift.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .elaborate import latency
from .netlist import Netlist, NlNode
from .rtlsim import drive_samples
from .vlint import VerilogError, lint_project, rom_tables

FILE_NAMES = ("top.v", "controller.v", "input_layer.v", "hidden_layer.v",
              "output_layer.v", "activation_rom.v", "macc.v", "testbench.v")


@dataclass(frozen=True)
class EmitOptions:
    mem_roms: bool = False
    tb_samples: int = 4
    tb_seed: int = 2024


def _hex(raw: int, width: int) -> str:
    digits = (width + 3) // 4
    return f"{width}'sh{raw & ((1 << width) - 1):0{digits}x}"


def _sd(value: int, width: int) -> str:
    return f"-{width}'sd{-value}" if value < 0 else f"{width}'sd{value}"


def _mem_word(raw: int, width: int) -> str:
    digits = (width + 3) // 4
    return f"{raw & ((1 << width) - 1):0{digits}x}"


def _header(fname: str, d: "_Design") -> list[str]:
    return [f"// {fname} -- fixed-point state-space pipeline: "
            f"{d.L} inputs, {d.N} layers x {d.M} nodes, {d.P} outputs, "
            f"{d.p} multipliers per node",
            ""]


def _chain(name: str, width: int, din: str, init: str, cslow: int,
           signed: bool = True) -> tuple[list[str], list[str], list[str], str]:
    """Registers name_r0..name_r{cslow-1} shifting din toward the tail.
    Returns (declarations, reset statements, clocked statements, tail)."""
    sv = "signed " if signed else ""
    stages = [f"{name}_r{s}" for s in range(cslow)]
    decl = [f"  reg {sv}[{width - 1}:0] {s};" for s in stages]
    rst = [f"      {s} <= {init};" for s in stages]
    clk = [f"      {stages[0]} <= {din};"]
    clk += [f"      {stages[s]} <= {stages[s - 1]};" for s in range(1, cslow)]
    return decl, rst, clk, stages[-1]


def _requant_fn(name: str, wi: int, wo: int, shift: int) -> list[str]:
    """Round to nearest, ties away from zero, then saturate. Mirrors the
    single narrowing primitive used by both simulators."""
    hi, lo = (1 << (wo - 1)) - 1, -(1 << (wo - 1))
    if shift <= 0:
        wr = wi + 1 - shift
        body = [f"    r = v <<< {-shift};"]
    else:
        wr = wi + 1
        half = 1 << (shift - 1)
        body = [f"    if (v >= 0) r = (v + {_sd(half, wr)}) >>> {shift};",
                f"    else r = -((-v + {_sd(half, wr)}) >>> {shift});"]
    return ([f"  function automatic signed [{wo - 1}:0] {name}"
             f"(input signed [{wi - 1}:0] v);",
             f"    reg signed [{wr - 1}:0] r;",
             "    begin"]
            + body +
            [f"      if (r > {_sd(hi, wr)}) {name} = {_sd(hi, wo)};",
             f"      else if (r < {_sd(lo, wr)}) {name} = {_sd(lo, wo)};",
             f"      else {name} = r[{wo - 1}:0];",
             "    end",
             "  endfunction"])


def _case_rom_fn(name: str, addr_w: int, data_w: int,
                 table: tuple) -> list[str]:
    lines = [f"  function automatic signed [{data_w - 1}:0] {name}"
             f"(input [{addr_w - 1}:0] a);",
             "    begin",
             "      case (a)"]
    lines += [f"        {addr_w}'d{i}: {name} = {_hex(v, data_w)};"
              for i, v in enumerate(table)]
    lines += [f"        default: {name} = {_hex(0, data_w)};",
              "      endcase",
              "    end",
              "  endfunction"]
    return lines


def _mem_rom(name: str, addr_w: int, data_w: int, depth: int,
             mem_file: str, addr_sig: str, out_sig: str) -> list[str]:
    return [f"  reg signed [{data_w - 1}:0] {name}_mem [0:{depth - 1}];",
            f"  initial $readmemh(\"{mem_file}\", {name}_mem);",
            f"  wire signed [{data_w - 1}:0] {out_sig} = "
            f"{name}_mem[{addr_sig}];"]


class _Design:
    """Everything emission needs, pulled from one elaborated netlist."""

    def __init__(self, n: Netlist):
        if n.meta is None or n.controller is None:
            raise VerilogError("netlist lacks elaboration metadata; only "
                               "elaborated designs can be emitted")
        m, fsm = n.meta, n.controller
        if m.out_activation != "identity":
            raise VerilogError("output activation lookup is not supported "
                               "in emission")
        self.n = n
        self.meta = m
        self.fsm = fsm
        self.L, self.M, self.N, self.P = (m.input_dim, m.state_dim,
                                          m.horizon, m.output_dim)
        self.p = m.schedule.multipliers_per_node
        self.c = m.macc_cycles
        self.cslow = m.cslow
        self.stages = m.mul_pipeline
        self.tanh = m.activation == "tanh"

        self.by_name: dict[str, NlNode] = {x.name: x for x in n.nodes}
        mul_count = n.count("mul")
        if mul_count != self.M * self.p:
            raise VerilogError(f"netlist has {mul_count} multipliers, "
                               f"expected {self.M * self.p}")

        f = m.fmts
        self.wd = f.state.word_length
        self.nd = f.state.frac_length
        wfmt = f.table_format("state_weights")
        self.ww, self.nw = wfmt.word_length, wfmt.frac_length
        bfmt = f.table_format("biases")
        self.wb, self.nb = bfmt.word_length, bfmt.frac_length
        ofmt = f.table_format("output_weights")
        self.wow, self.now = ofmt.word_length, ofmt.frac_length
        self.wo = f.output.word_length
        self.no = f.output.frac_length

        self.wacc = self.by_name["acc_n0m0"].fmt.word_length
        self.nacc = self.by_name["acc_n0m0"].fmt.frac_length
        self.wp = self.by_name["prod_n0m0"].fmt.word_length
        pre = self.by_name["preact_n0"].fmt
        self.wpre, self.npre = pre.word_length, pre.frac_length
        oacc = self.by_name["ynarrow0"].payload[0]
        self.woacc, self.noacc = oacc.word_length, oacc.frac_length

        self.bias_shift = self.nacc - self.nb
        self.pre_shift = self.nacc - self.npre
        self.out_shift = self.noacc - self.no
        self.out_bias_shift = self.noacc - self.nb

        self.sb = fsm.state_bits
        self.lb = fsm.layer_bits
        self.cb = fsm.slot_bits
        self.ts = fsm.signal_width("term_slot")
        self.wa = fsm.signal_width("w_addr")

        self.weight_tables = {
            (i, q): tuple(self.by_name[f"wrom_n{i}m{q}"].payload)
            for i in range(self.M) for q in range(self.p)}
        self.bias_tables = {i: tuple(self.by_name[f"brom_n{i}"].payload)
                            for i in range(self.M)}

        self.lut = m.lut
        if self.tanh:
            lut = self.lut
            self.ab = lut.addr_bits
            nin = lut.in_fmt.frac_length
            lo_raw = Fraction(lut.lo) * (1 << nin)
            hi_raw = Fraction(lut.hi) * (1 << nin)
            span = Fraction(lut.hi) - Fraction(lut.lo)
            num, den = span.numerator, span.denominator
            pow2 = (num & (num - 1)) == 0 and (den & (den - 1)) == 0
            if lo_raw.denominator != 1 or hi_raw.denominator != 1 or not pow2:
                raise VerilogError(
                    "activation table range must sit on the operand grid "
                    "with a power-of-two span for shift-based addressing")
            self.lut_lo_raw = int(lo_raw)
            self.lut_hi_raw = int(hi_raw)
            self.lut_shift = (nin + num.bit_length() - 1
                              - (den.bit_length() - 1) - self.ab)
            self.act_table = tuple(e.raw for e in lut.entries)
            rom0 = tuple(self.by_name["actrom_n0"].payload)
            if rom0 != self.act_table:
                raise VerilogError("activation table in the netlist differs "
                                   "from the declared lookup table")

        self.mem_mode = False
        self.out_coeffs: list[list[int]] = []
        self.out_in_coeffs: list[list[int]] = []
        self.out_biases: list[int] = []
        for i in range(self.P):
            self.out_coeffs.append(
                [self.by_name[f"yterm{i}_{j}"].payload
                 for j in range(self.M)])
            if f"yuterm{i}_0" in self.by_name:
                self.out_in_coeffs.append(
                    [self.by_name[f"yuterm{i}_{j}"].payload
                     for j in range(self.L)])
            else:
                self.out_in_coeffs.append([])
            name = f"ybias{i}"
            self.out_biases.append(
                self.by_name[name].payload if name in self.by_name else 0)


# ---------------------------------------------------------------------------
# Per-module emitters.

def emit_top(d: _Design) -> str:
    L, P, wd, wo, M = d.L, d.P, d.wd, d.wo, d.M
    lines = _header("top.v", d)
    lines += [
        "module top (",
        "  input clk,",
        "  input rst,",
        "  input data_valid_in,",
        f"  input [{L * wd - 1}:0] u,",
        f"  output [{P * wo - 1}:0] y,",
        "  output data_valid_out",
        ");",
        "  wire load_en, acc_en, acc_clear, sel_input, preact_en, state_en;",
        f"  wire [{d.ts - 1}:0] term_slot;",
        f"  wire [{d.wa - 1}:0] w_addr;",
        f"  wire [{d.lb - 1}:0] layer_idx;",
        f"  wire [{L * wd - 1}:0] u_q;",
        f"  wire [{M * wd - 1}:0] x;",
        "",
        "  controller u_controller (",
        "    .clk(clk), .rst(rst), .data_valid_in(data_valid_in),",
        "    .load_en(load_en), .acc_en(acc_en), .acc_clear(acc_clear),",
        "    .sel_input(sel_input), .term_slot(term_slot), .w_addr(w_addr),",
        "    .layer_idx(layer_idx), .preact_en(preact_en),",
        "    .state_en(state_en), .data_valid_out(data_valid_out)",
        "  );",
        "  input_layer u_input_layer (",
        "    .clk(clk), .rst(rst), .load_en(load_en), .u(u), .u_q(u_q)",
        "  );",
        "  hidden_layer u_hidden_layer (",
        "    .clk(clk), .rst(rst), .acc_en(acc_en), .acc_clear(acc_clear),",
        "    .sel_input(sel_input), .term_slot(term_slot), .w_addr(w_addr),",
        "    .layer_idx(layer_idx), .preact_en(preact_en),",
        "    .state_en(state_en), .u_q(u_q), .x(x)",
        "  );",
        "  output_layer u_output_layer (",
        "    .x(x), .u_q(u_q), .y(y)",
        "  );",
        "endmodule",
    ]
    return "\n".join(lines) + "\n"


def emit_controller(d: _Design) -> str:
    fsm, c, N = d.fsm, d.c, d.N
    sb, lb, cb = d.sb, d.lb, d.cb
    enc_load = fsm.encode(1)
    enc_comp = fsm.encode(2)
    enc_wout = fsm.encode(3)
    lines = _header("controller.v", d)
    lines += [
        "module controller (",
        "  input clk,",
        "  input rst,",
        "  input data_valid_in,",
        "  output load_en,",
        "  output acc_en,",
        "  output acc_clear,",
        "  output sel_input,",
        f"  output [{d.ts - 1}:0] term_slot,",
        f"  output [{d.wa - 1}:0] w_addr,",
        f"  output [{d.lb - 1}:0] layer_idx,",
        "  output preact_en,",
        "  output state_en,",
        "  output data_valid_out",
        ");",
        f"  localparam [{sb - 1}:0] S_IDLE = {sb}'d{fsm.idle};",
        f"  localparam [{sb - 1}:0] S_LOAD = {sb}'d{enc_load};",
        f"  localparam [{sb - 1}:0] S_COMPUTE0 = {sb}'d{enc_comp};",
        f"  localparam [{sb - 1}:0] S_WRITE_OUT = {sb}'d{enc_wout};",
        "",
        "  // packed state: {slot, layer, phase[1:0]}",
        f"  reg [{sb - 1}:0] fsm_next;",
    ]
    decl, rst, clk, tail = _chain("fsm", sb, "fsm_next", "S_IDLE", d.cslow,
                                  signed=False)
    lines += decl
    lines += [
        "  always @(posedge clk) begin",
        "    if (rst) begin",
        *rst,
        "    end else begin",
        *clk,
        "    end",
        "  end",
        f"  wire [1:0] phase = {tail}[1:0];",
        f"  wire [{lb - 1}:0] lyr = {tail}[{2 + lb - 1}:2];",
        f"  wire [{cb - 1}:0] slot = {tail}[{sb - 1}:{2 + lb}];",
        "",
        "  always @* begin",
        "    case (phase)",
        "      2'd0: fsm_next = data_valid_in ? S_LOAD : S_IDLE;",
        "      2'd1: fsm_next = S_COMPUTE0;",
        "      2'd2: begin",
        f"        if (slot < {cb}'d{c + 1})",
        f"          fsm_next = {{slot + {cb}'d1, lyr, 2'd2}};",
        f"        else if (lyr < {lb}'d{N - 1})",
        f"          fsm_next = {{{cb}'d0, lyr + {lb}'d1, 2'd2}};",
        "        else",
        "          fsm_next = S_WRITE_OUT;",
        "      end",
        "      default: fsm_next = S_IDLE;",
        "    endcase",
        "  end",
        "",
        "  wire compute = (phase == 2'd2);",
        f"  wire macc_on = compute && (slot < {cb}'d{c});",
        "  assign load_en = (phase == 2'd1);",
        "  assign acc_en = macc_on;",
        f"  assign acc_clear = macc_on && (slot == {cb}'d0);",
        f"  assign sel_input = compute && (lyr == {lb}'d0);",
        f"  assign term_slot = macc_on ? slot[{d.ts - 1}:0] : {d.ts}'d0;",
        f"  wire [{d.wa - 1}:0] w_addr_full = lyr * {d.wa}'d{c} + slot;",
        f"  assign w_addr = macc_on ? w_addr_full : {d.wa}'d0;",
        f"  assign layer_idx = compute ? lyr : {lb}'d0;",
        f"  assign preact_en = compute && (slot == {cb}'d{c});",
        f"  assign state_en = compute && (slot == {cb}'d{c + 1});",
        "  assign data_valid_out = (phase == 2'd3);",
        "endmodule",
    ]
    return "\n".join(lines) + "\n"


def emit_input_layer(d: _Design) -> str:
    L, wd = d.L, d.wd
    lines = _header("input_layer.v", d)
    lines += [
        "module input_layer (",
        "  input clk,",
        "  input rst,",
        "  input load_en,",
        f"  input [{L * wd - 1}:0] u,",
        f"  output [{L * wd - 1}:0] u_q",
        ");",
    ]
    decls, rsts, clks, tails = [], [], [], []
    for j in range(L):
        lines.append(f"  wire signed [{wd - 1}:0] u_{j} = "
                     f"u[{(j + 1) * wd - 1}:{j * wd}];")
    for j in range(L):
        decl, rst, clk, tail = _chain(
            f"in{j}", wd, f"load_en ? u_{j} : in{j}_r{d.cslow - 1}",
            _sd(0, wd), d.cslow)
        decls += decl
        rsts += rst
        clks += clk
        tails.append(tail)
    lines += decls
    lines += ["  always @(posedge clk) begin",
              "    if (rst) begin", *rsts,
              "    end else begin", *clks,
              "    end",
              "  end"]
    for j, tail in enumerate(tails):
        lines.append(f"  assign u_q[{(j + 1) * wd - 1}:{j * wd}] = {tail};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def emit_macc(d: _Design) -> str:
    wd, ww, wp, wacc = d.wd, d.ww, d.wp, d.wacc
    lines = _header("macc.v", d)
    lines += [
        "module macc (",
        "  input clk,",
        "  input rst,",
        "  input acc_en,",
        "  input acc_clear,",
        f"  input signed [{wd - 1}:0] a,",
        f"  input signed [{ww - 1}:0] b,",
        f"  output signed [{wacc - 1}:0] acc",
        ");",
        f"  wire signed [{wp - 1}:0] prod = a * b;",
    ]
    decls, rsts, clks = [], [], []
    prod_sig = "prod"
    for s in range(d.stages):
        decl, rst, clk, tail = _chain(f"prod_p{s + 1}", wp, prod_sig,
                                      _sd(0, wp), d.cslow)
        decls += decl
        rsts += rst
        clks += clk
        prod_sig = tail
    decl, rst, clk, tail = _chain(
        "acc", wacc,
        f"acc_en ? acc_next : acc_r{d.cslow - 1}",
        _sd(0, wacc), d.cslow)
    decls += decl
    rsts += rst
    clks += clk
    lines += decls
    lines += [
        f"  wire signed [{wacc - 1}:0] prod_ext = {prod_sig};",
        f"  wire signed [{wacc - 1}:0] acc_next = "
        f"acc_clear ? prod_ext : acc_r{d.cslow - 1} + prod_ext;",
    ]
    lines += ["  always @(posedge clk) begin",
              "    if (rst) begin", *rsts,
              "    end else begin", *clks,
              "    end",
              "  end",
              f"  assign acc = {tail};",
              "endmodule"]
    return "\n".join(lines) + "\n"


def emit_activation_rom(d: _Design, mem_files: dict) -> str:
    lines = _header("activation_rom.v", d)
    if not d.tanh:
        lines += ["// this design uses an identity activation; no lookup",
                  "// table is instantiated"]
        return "\n".join(lines) + "\n"
    ab, wd = d.ab, d.wd
    lines += [
        "module activation_rom (",
        f"  input [{ab - 1}:0] addr,",
        f"  output reg signed [{wd - 1}:0] data",
        ");",
    ]
    if d.mem_mode:
        mem_files["activation_rom.mem"] = "\n".join(
            _mem_word(v, wd) for v in d.act_table) + "\n"
        lines += [
            f"  reg signed [{wd - 1}:0] mem [0:{(1 << ab) - 1}];",
            "  initial $readmemh(\"activation_rom.mem\", mem);",
            "  always @* data = mem[addr];",
        ]
    else:
        lines += ["  always @* begin", "    case (addr)"]
        lines += [f"      {ab}'d{i}: data = {_hex(v, wd)};"
                  for i, v in enumerate(d.act_table)]
        lines += [f"      default: data = {_hex(0, wd)};",
                  "    endcase",
                  "  end"]
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def emit_hidden_layer(d: _Design, mem_files: dict) -> str:
    L, M, N, p, c = d.L, d.M, d.N, d.p, d.c
    wd, ww, wacc, wpre = d.wd, d.ww, d.wacc, d.wpre
    lines = _header("hidden_layer.v", d)
    lines += [
        "module hidden_layer (",
        "  input clk,",
        "  input rst,",
        "  input acc_en,",
        "  input acc_clear,",
        "  input sel_input,",
        f"  input [{d.ts - 1}:0] term_slot,",
        f"  input [{d.wa - 1}:0] w_addr,",
        f"  input [{d.lb - 1}:0] layer_idx,",
        "  input preact_en,",
        "  input state_en,",
        f"  input [{L * wd - 1}:0] u_q,",
        f"  output [{M * wd - 1}:0] x",
        ");",
    ]
    for j in range(L):
        lines.append(f"  wire signed [{wd - 1}:0] u_q_{j} = "
                     f"u_q[{(j + 1) * wd - 1}:{j * wd}];")
    lines.append("")

    # register chains first so every later wire refers to declared names
    state_tail = [f"x{i}_r{d.cslow - 1}" for i in range(M)]
    decls, rsts, clks = [], [], []
    for i in range(M):
        if d.tanh:
            next_state = f"act_out_{i}"
        else:
            next_state = f"pre{i}_r{d.cslow - 1}"
        decl, rst, clk, _ = _chain(
            f"pre{i}", wpre,
            f"preact_en ? pre_next_{i} : pre{i}_r{d.cslow - 1}",
            _sd(0, wpre), d.cslow)
        decls += decl
        rsts += rst
        clks += clk
        decl, rst, clk, x_tail = _chain(
            f"x{i}", wd,
            f"state_en ? {next_state} : x{i}_r{d.cslow - 1}",
            _sd(0, wd), d.cslow)
        decls += decl
        rsts += rst
        clks += clk
        assert x_tail == state_tail[i]
    lines += decls
    if d.tanh:
        for i in range(M):
            lines.append(f"  wire signed [{wd - 1}:0] act_out_{i};")
    lines.append("")

    lines.append("  // operand slot t of multiplier q carries term t*p+q;"
                 " indexes past a")
    lines.append("  // vector's end pad with zero")
    for q in range(p):
        for t in range(c):
            j = t * p + q
            uref = f"u_q_{j}" if j < L else _sd(0, wd)
            xref = state_tail[j] if j < M else _sd(0, wd)
            lines.append(f"  wire signed [{wd - 1}:0] slot_{q}_{t} = "
                         f"sel_input ? {uref} : {xref};")
        if c == 1:
            lines.append(f"  wire signed [{wd - 1}:0] dop_{q} = "
                         f"slot_{q}_0;")
        else:
            lines.append(f"  reg signed [{wd - 1}:0] dop_{q};")
            lines.append("  always @* begin")
            lines.append("    case (term_slot)")
            for t in range(c):
                lines.append(f"      {d.ts}'d{t}: dop_{q} = slot_{q}_{t};")
            lines.append(f"      default: dop_{q} = slot_{q}_0;")
            lines.append("    endcase")
            lines.append("  end")
    lines.append("")

    # weight ROMs and MACC instances
    for i in range(M):
        for q in range(p):
            table = d.weight_tables[(i, q)]
            if d.mem_mode:
                mem_files[f"wrom_{i}_{q}.mem"] = "\n".join(
                    _mem_word(v, ww) for v in table) + "\n"
                lines += _mem_rom(f"wrom_{i}_{q}", d.wa, ww, len(table),
                                  f"wrom_{i}_{q}.mem", "w_addr",
                                  f"w_{i}_{q}")
            else:
                lines += _case_rom_fn(f"wrom_{i}_{q}", d.wa, ww, table)
                lines.append(f"  wire signed [{ww - 1}:0] w_{i}_{q} = "
                             f"wrom_{i}_{q}(w_addr);")
            lines.append(f"  wire signed [{wacc - 1}:0] acc_{i}_{q};")
            lines += [
                f"  macc u_macc_{i}_{q} (",
                "    .clk(clk), .rst(rst), .acc_en(acc_en),"
                " .acc_clear(acc_clear),",
                f"    .a(dop_{q}), .b(w_{i}_{q}), .acc(acc_{i}_{q})",
                "  );",
            ]
    lines.append("")
    lines += _requant_fn("narrow_pre", wacc, wpre, d.pre_shift)
    if d.tanh:
        wr = wpre + 1
        lines += [
            "",
            "  // bin index: clamp to the table range, then shift off the",
            "  // sub-bin bits; the low edge belongs to its bin",
            f"  function automatic [{d.ab - 1}:0] act_index"
            f"(input signed [{wpre - 1}:0] v);",
            f"    reg signed [{wr - 1}:0] off;",
            "    begin",
            f"      off = v - {_sd(d.lut_lo_raw, wr)};",
            f"      if (off <= {wr}'sd0) act_index = {d.ab}'d0;",
            f"      else if (v >= {_sd(d.lut_hi_raw, wr)}) "
            f"act_index = {{{d.ab}{{1'b1}}}};",
        ]
        if d.lut_shift >= 0:
            lines.append(f"      else act_index = off >>> {d.lut_shift};")
        else:
            lines.append(f"      else act_index = off <<< {-d.lut_shift};")
        lines += ["    end", "  endfunction"]
    lines.append("")

    for i in range(M):
        terms = " + ".join(f"acc_{i}_{q}" for q in range(p))
        if d.mem_mode:
            mem_files[f"brom_{i}.mem"] = "\n".join(
                _mem_word(v, d.wb) for v in d.bias_tables[i]) + "\n"
            lines += _mem_rom(f"brom_{i}", d.lb, d.wb, N, f"brom_{i}.mem",
                              "layer_idx", f"b_{i}")
        else:
            lines += _case_rom_fn(f"brom_{i}", d.lb, d.wb, d.bias_tables[i])
            lines.append(f"  wire signed [{d.wb - 1}:0] b_{i} = "
                         f"brom_{i}(layer_idx);")
        lines.append(f"  wire signed [{wacc - 1}:0] b_{i}_ext = b_{i};")
        lines.append(f"  wire signed [{wacc - 1}:0] nsum_{i} = {terms} + "
                     f"(b_{i}_ext <<< {d.bias_shift});")
        lines.append(f"  wire signed [{wpre - 1}:0] pre_next_{i} = "
                     f"narrow_pre(nsum_{i});")
    lines += ["  always @(posedge clk) begin",
              "    if (rst) begin", *rsts,
              "    end else begin", *clks,
              "    end",
              "  end"]
    for i in range(M):
        if d.tanh:
            lines.append(f"  wire [{d.ab - 1}:0] act_addr_{i} = "
                         f"act_index(pre{i}_r{d.cslow - 1});")
            lines += [f"  activation_rom u_act_{i} (",
                      f"    .addr(act_addr_{i}), .data(act_out_{i})",
                      "  );"]
        lines.append(f"  assign x[{(i + 1) * wd - 1}:{i * wd}] = "
                     f"{state_tail[i]};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def emit_output_layer(d: _Design) -> str:
    L, M, P = d.L, d.M, d.P
    wd, wo, wow, woacc = d.wd, d.wo, d.wow, d.woacc
    lines = _header("output_layer.v", d)
    lines += [
        "module output_layer (",
        f"  input [{M * wd - 1}:0] x,",
        f"  input [{L * wd - 1}:0] u_q,",
        f"  output [{P * wo - 1}:0] y",
        ");",
    ]
    for i in range(M):
        lines.append(f"  wire signed [{wd - 1}:0] x_{i} = "
                     f"x[{(i + 1) * wd - 1}:{i * wd}];")
    any_u = any(d.out_in_coeffs[i] for i in range(P))
    if any_u:
        for j in range(L):
            lines.append(f"  wire signed [{wd - 1}:0] u_q_{j} = "
                         f"u_q[{(j + 1) * wd - 1}:{j * wd}];")
    lines += _requant_fn("narrow_out", woacc, wo, d.out_shift)
    for i in range(P):
        for j in range(M):
            lines.append(f"  localparam signed [{wow - 1}:0] W{i}_{j} = "
                         f"{_sd(d.out_coeffs[i][j], wow)};")
        terms = [f"W{i}_{j} * x_{j}" for j in range(M)]
        if d.out_in_coeffs[i]:
            for j in range(L):
                lines.append(f"  localparam signed [{wow - 1}:0] "
                             f"WU{i}_{j} = "
                             f"{_sd(d.out_in_coeffs[i][j], wow)};")
            terms += [f"WU{i}_{j} * u_q_{j}" for j in range(L)]
        if d.out_biases[i]:
            lines.append(f"  localparam signed [{d.wb - 1}:0] B{i} = "
                         f"{_sd(d.out_biases[i], d.wb)};")
            lines.append(f"  wire signed [{woacc - 1}:0] b{i}_ext = B{i};")
            terms.append(f"(b{i}_ext <<< {d.out_bias_shift})")
        lines.append(f"  wire signed [{woacc - 1}:0] oacc_{i} = "
                     + " + ".join(terms) + ";")
        lines.append(f"  assign y[{(i + 1) * wo - 1}:{i * wo}] = "
                     f"narrow_out(oacc_{i});")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def emit_testbench(d: _Design, opts: EmitOptions) -> str:
    L, P, wd, wo = d.L, d.P, d.wd, d.wo
    C = d.cslow
    fin = d.meta.fmts.input
    rng = np.random.default_rng(opts.tb_seed)
    raws = rng.integers(fin.min_raw, fin.max_raw + 1,
                        size=(opts.tb_samples, L))
    samples = [[int(v) for v in row] for row in raws]
    want = drive_samples(d.n, samples).outputs
    lat = latency(d.n)
    lines = _header("testbench.v", d)
    lines += [
        "`timescale 1ns/1ps",
        "module testbench;",
        "  reg clk = 1'b0;",
        "  always #5 clk = ~clk;",
        "  reg rst;",
        "  reg data_valid_in;",
        f"  reg [{L * wd - 1}:0] u;",
        f"  wire [{P * wo - 1}:0] y;",
        "  wire data_valid_out;",
        "  integer errors;",
        "  integer waited;",
        "",
        "  top dut (",
        "    .clk(clk), .rst(rst), .data_valid_in(data_valid_in),",
        "    .u(u), .y(y), .data_valid_out(data_valid_out)",
        "  );",
        "",
    ]
    for k, (s, w) in enumerate(zip(samples, want)):
        ucat = "{" + ", ".join(_hex(v, wd) for v in reversed(s)) + "}"
        ycat = "{" + ", ".join(_hex(v, wo) for v in reversed(w)) + "}"
        lines.append(f"  localparam [{L * wd - 1}:0] U_{k} = {ucat};")
        lines.append(f"  localparam [{P * wo - 1}:0] Y_{k} = {ycat};")
    lines += [
        "",
        f"  task check(input [{L * wd - 1}:0] uv, "
        f"input [{P * wo - 1}:0] yv, input integer idx);",
        "    begin",
        "      // present the sample for one clock, hold the data through",
        "      // the load cycle, then wait for the result",
        "      data_valid_in = 1'b1; u = uv;",
        "      @(negedge clk);",
        "      data_valid_in = 1'b0;",
        f"      repeat ({C}) @(negedge clk);",
        "      u = {" + f"{L * wd}" + "{1'b0}};",
        "      waited = 0;",
        f"      while (!data_valid_out && waited < {2 * lat + 8 * C}) begin",
        "        @(negedge clk);",
        "        waited = waited + 1;",
        "      end",
        "      if (!data_valid_out) begin",
        "        errors = errors + 1;",
        "        $display(\"FAIL sample %0d: no data_valid_out\", idx);",
        "      end else if (y !== yv) begin",
        "        errors = errors + 1;",
        "        $display(\"FAIL sample %0d: y = %h, expected %h\","
        " idx, y, yv);",
        "      end else begin",
        "        $display(\"PASS sample %0d\", idx);",
        "      end",
    ]
    if C > 1:
        # realign to this stream's cycles before the next sample
        lines.append(f"      repeat ({C - 1}) @(negedge clk);")
    lines += [
        "    end",
        "  endtask",
        "",
        "  initial begin",
        "    errors = 0;",
        "    rst = 1'b1;",
        "    data_valid_in = 1'b0;",
        "    u = {" + f"{L * wd}" + "{1'b0}};",
        "    @(negedge clk);",
        "    @(negedge clk);",
        "    rst = 1'b0;",
    ]
    for k in range(len(samples)):
        lines.append(f"    check(U_{k}, Y_{k}, {k});")
    lines += [
        "    if (errors == 0) $display(\"ALL %0d SAMPLES PASS\", "
        f"{len(samples)});",
        "    else $display(\"%0d ERRORS\", errors);",
        "    $finish;",
        "  end",
        "endmodule",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Project assembly.

def emit_project(n: Netlist, opts: EmitOptions = EmitOptions()
                 ) -> dict[str, str]:
    """All output files as {name: text}. Runs the lexical linter and, in
    inline-ROM mode, parses the tables back out of the text and compares
    them with the netlist contents before returning."""
    d = _Design(n)
    d.mem_mode = opts.mem_roms
    mem_files: dict[str, str] = {}
    files = {
        "top.v": emit_top(d),
        "controller.v": emit_controller(d),
        "input_layer.v": emit_input_layer(d),
        "hidden_layer.v": emit_hidden_layer(d, mem_files),
        "output_layer.v": emit_output_layer(d),
        "activation_rom.v": emit_activation_rom(d, mem_files),
        "macc.v": emit_macc(d),
        "testbench.v": emit_testbench(d, opts),
    }
    diags = lint_project(files)
    if diags:
        raise VerilogError("emitted project fails lint: " + "; ".join(diags))
    if not opts.mem_roms:
        _verify_tables(d, files)
    files.update(mem_files)
    return files


def _verify_tables(d: _Design, files: dict[str, str]) -> None:
    hidden = rom_tables(files["hidden_layer.v"])
    for (i, q), table in d.weight_tables.items():
        got = hidden.get(f"wrom_{i}_{q}", {})
        want = dict(enumerate(table))
        if got != want:
            raise VerilogError(f"weight table {i},{q} does not parse back "
                               "to the netlist contents")
    for i, table in d.bias_tables.items():
        got = hidden.get(f"brom_{i}", {})
        if got != dict(enumerate(table)):
            raise VerilogError(f"bias table {i} does not parse back to the "
                               "netlist contents")
    if d.tanh:
        act = rom_tables(files["activation_rom.v"]).get("data", {})
        if act != dict(enumerate(d.act_table)):
            raise VerilogError("activation table does not parse back to "
                               "the lookup table contents")


def write_project(files: dict[str, str], out_dir) -> list[str]:
    import os
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name in sorted(files):
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(files[name])
        written.append(path)
    return written

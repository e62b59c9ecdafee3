"""Emission tests: file set, lint, ROM parse-back, testbench contents.

No Verilog simulator runs here. The emitted text is checked lexically
(module/port/instance structure), numerically (case tables parsed back
and compared with the netlist payloads and with an independent
functional-simulator run), and for byte determinism.
"""

import dataclasses

import numpy as np
import pytest

from conftest import make_fixed
from ss2rtl import (
    EmitOptions,
    FILE_NAMES,
    Schedule,
    VerilogError,
    c_slow,
    elaborate,
    emit_project,
    gen_activation_lut,
    instance_census,
    lint_project,
    parse_modules,
    pipeline_multiplier,
    port_width,
    rom_tables,
    write_project,
)

WD = 16    # data word for the shared design
L, M, N, P, MULTS = 3, 4, 4, 2, 4


def sh(raw, width):
    digits = (width + 3) // 4
    return f"{width}'sh{raw & ((1 << width) - 1):0{digits}x}"


@pytest.fixture(scope="module")
def files(small_netlist):
    net, _ = small_netlist
    return emit_project(net)


@pytest.fixture(scope="module")
def mem_files(small_netlist):
    net, _ = small_netlist
    return emit_project(net, EmitOptions(mem_roms=True))


class TestProjectShape:
    def test_file_set(self, files):
        assert set(files) == set(FILE_NAMES)
        for text in files.values():
            assert text.endswith("\n")
            assert text.strip()

    def test_lint_clean(self, files):
        assert lint_project(files) == []

    def test_deterministic(self, small_netlist, files):
        net, _ = small_netlist
        assert emit_project(net) == files

    def test_top_ports(self, files):
        top = parse_modules(files["top.v"])["top"]
        assert top.ports == ["clk", "rst", "data_valid_in", "u", "y",
                             "data_valid_out"]
        assert port_width(files, "top", "u") == L * WD
        assert port_width(files, "top", "y") == P * WD
        assert port_width(files, "top", "clk") == 1
        assert port_width(files, "top", "data_valid_out") == 1

    def test_instance_census(self, files):
        census = instance_census(files)
        assert census["macc"] == M * MULTS
        assert census["activation_rom"] == M
        assert census["controller"] == 1
        assert census["input_layer"] == 1
        assert census["hidden_layer"] == 1
        assert census["output_layer"] == 1
        assert census["top"] == 1    # the testbench

    def test_controller_port_widths(self, small_netlist, files):
        net, _ = small_netlist
        fsm = net.controller
        assert (port_width(files, "controller", "w_addr")
                == fsm.signal_width("w_addr"))
        assert (port_width(files, "controller", "term_slot")
                == fsm.signal_width("term_slot"))
        assert (port_width(files, "controller", "layer_idx")
                == fsm.signal_width("layer"))
        assert port_width(files, "controller", "acc_en") == 1

    def test_inline_mode_has_no_readmemh(self, files):
        for text in files.values():
            assert "$readmemh" not in text

    def test_header_mentions_geometry(self, files):
        first = files["top.v"].splitlines()[0]
        assert f"{L} inputs" in first
        assert f"{N} layers x {M} nodes" in first

    def test_write_project(self, files, tmp_path):
        paths = write_project(files, tmp_path)
        assert [p.split("/")[-1] for p in paths] == sorted(files)
        for path in paths:
            name = path.split("/")[-1]
            with open(path) as fh:
                assert fh.read() == files[name]


class TestRomParseBack:
    def test_activation_table(self, small_netlist, files):
        net, fixed = small_netlist
        table = rom_tables(files["activation_rom.v"])["data"]
        lut = net.meta.lut
        assert table == {i: e.raw for i, e in enumerate(lut.entries)}
        assert len(table) == 1 << lut.addr_bits
        # midpoint of [-4, 4) is 0 and tanh is odd around it
        assert table[512] == 0
        for k in (1, 17, 300, 511):
            assert table[512 - k] == -table[512 + k]

    def test_weight_tables(self, small_netlist, files):
        net, _ = small_netlist
        hidden = rom_tables(files["hidden_layer.v"])
        by_name = {x.name: x for x in net.nodes}
        for i in range(M):
            for q in range(MULTS):
                payload = by_name[f"wrom_n{i}m{q}"].payload
                assert hidden[f"wrom_{i}_{q}"] == dict(enumerate(payload))

    def test_bias_tables(self, small_netlist, files):
        net, _ = small_netlist
        hidden = rom_tables(files["hidden_layer.v"])
        by_name = {x.name: x for x in net.nodes}
        for i in range(M):
            payload = by_name[f"brom_n{i}"].payload
            assert hidden[f"brom_{i}"] == dict(enumerate(payload))
            assert len(hidden[f"brom_{i}"]) == N

    def test_signed_values_survive_the_round_trip(self, files):
        hidden = rom_tables(files["hidden_layer.v"])
        vals = [v for t in hidden.values() for v in t.values()]
        assert any(v < 0 for v in vals)
        assert all(-(1 << 15) <= v < (1 << 15) for v in vals)


class TestTestbench:
    def test_expected_outputs_come_from_the_functional_sim(
            self, small_netlist, files):
        net, fixed = small_netlist
        tb = files["testbench.v"]
        fin = net.meta.fmts.input
        rng = np.random.default_rng(2024)
        raws = rng.integers(fin.min_raw, fin.max_raw + 1, size=(4, L))
        for k, row in enumerate(raws):
            sample = [int(v) for v in row]
            want = fixed.run_raw(sample)
            ucat = "{" + ", ".join(sh(v, WD) for v in reversed(sample)) + "}"
            ycat = "{" + ", ".join(sh(v, WD) for v in reversed(want)) + "}"
            assert f"localparam [{L * WD - 1}:0] U_{k} = {ucat};" in tb
            assert f"localparam [{P * WD - 1}:0] Y_{k} = {ycat};" in tb

    def test_banner_lines(self, files):
        tb = files["testbench.v"]
        assert '"PASS sample %0d"' in tb
        assert '"ALL %0d SAMPLES PASS"' in tb
        assert "check(U_3, Y_3, 3);" in tb
        assert "U_4" not in tb

    def test_sample_count_option(self, small_netlist, files):
        net, _ = small_netlist
        alt = emit_project(net, EmitOptions(tb_samples=2, tb_seed=7))
        assert "U_1" in alt["testbench.v"]
        assert "U_2" not in alt["testbench.v"]
        for name in FILE_NAMES:
            if name != "testbench.v":
                assert alt[name] == files[name]
        assert alt["testbench.v"] != files["testbench.v"]


class TestMemRoms:
    def test_companion_files(self, mem_files):
        assert set(FILE_NAMES) <= set(mem_files)
        mems = {k for k in mem_files if k.endswith(".mem")}
        want = {"activation_rom.mem"}
        want |= {f"wrom_{i}_{q}.mem" for i in range(M)
                 for q in range(MULTS)}
        want |= {f"brom_{i}.mem" for i in range(M)}
        assert mems == want

    def test_readmemh_and_contents(self, small_netlist, mem_files):
        net, _ = small_netlist
        assert "$readmemh" in mem_files["hidden_layer.v"]
        assert "$readmemh" in mem_files["activation_rom.v"]
        words = mem_files["activation_rom.mem"].splitlines()
        lut = net.meta.lut
        assert len(words) == 1 << lut.addr_bits
        decoded = [int(w, 16) - (1 << WD) if int(w, 16) >= 1 << (WD - 1)
                   else int(w, 16) for w in words]
        assert decoded == [e.raw for e in lut.entries]

    def test_lint_clean_and_deterministic(self, small_netlist, mem_files):
        net, _ = small_netlist
        verilog = {k: v for k, v in mem_files.items() if k.endswith(".v")}
        assert lint_project(verilog) == []
        assert emit_project(net, EmitOptions(mem_roms=True)) == mem_files


class TestTransformedDesigns:
    def test_cslow_design_emits(self, small_netlist):
        net, _ = small_netlist
        files = emit_project(c_slow(net, 2))
        assert lint_project(files) == []
        assert instance_census(files)["macc"] == M * MULTS
        assert "repeat (2) @(negedge clk);" in files["testbench.v"]

    def test_pipelined_multiplier_design_emits(self, small_netlist):
        net, _ = small_netlist
        piped = net
        for nid in [i for i, x in enumerate(net.nodes) if x.kind == "mul"]:
            piped = pipeline_multiplier(piped, nid, 2)
        assert piped.meta.mul_pipeline == 2
        files = emit_project(piped)
        assert lint_project(files) == []
        assert "prod_p1_r0" in files["macc.v"]
        assert "prod_p2_r0" in files["macc.v"]


class TestEmissionErrors:
    def test_bare_netlist_rejected(self, small_netlist):
        net, _ = small_netlist
        bare = dataclasses.replace(net, meta=None, controller=None)
        with pytest.raises(VerilogError,
                           match="lacks elaboration metadata"):
            emit_project(bare)

    def test_output_activation_lookup_rejected(self, small_netlist):
        net, _ = small_netlist
        meta = dataclasses.replace(net.meta, out_activation="tanh")
        with pytest.raises(VerilogError,
                           match="output activation lookup is not "
                                 "supported"):
            emit_project(dataclasses.replace(net, meta=meta))

    def test_multiplier_census_mismatch(self, small_netlist):
        net, _ = small_netlist
        kept = tuple(x for x in net.nodes if x.name != "prod_n0m0")
        broken = dataclasses.replace(net, nodes=kept)
        with pytest.raises(VerilogError,
                           match=r"netlist has 15 multipliers, expected 16"):
            emit_project(broken)

    def test_non_power_of_two_table_span_rejected(self, small_model):
        fmts, _, _ = make_fixed(small_model, WD)
        lut = gen_activation_lut("tanh", fmts.accumulator, fmts.state,
                                 addr_bits=10, lo=-3.0, hi=3.0)
        net = elaborate(small_model, Schedule(MULTS), fmts, lut)
        with pytest.raises(VerilogError, match="power-of-two span"):
            emit_project(net)

    def test_corrupted_activation_payload_detected(self, small_netlist):
        net, _ = small_netlist
        nodes = []
        for x in net.nodes:
            if x.name == "actrom_n0":
                x = dataclasses.replace(
                    x, payload=(0,) + tuple(x.payload[1:]))
            nodes.append(x)
        with pytest.raises(VerilogError,
                           match="activation table in the netlist differs"):
            emit_project(dataclasses.replace(net, nodes=tuple(nodes)))

    def test_port_width_errors(self, files):
        with pytest.raises(VerilogError, match="top has no port bogus"):
            port_width(files, "top", "bogus")
        with pytest.raises(VerilogError, match="module nosuch not found"):
            port_width(files, "nosuch", "clk")


class TestLexicalLint:
    def test_module_balance_error(self):
        src = "module a (input x);\nendmodule\nmodule b (input y);\n"
        with pytest.raises(VerilogError,
                           match="2 module headers but 1 endmodule"):
            parse_modules(src)

    def test_port_widths_and_order(self):
        src = ("module m (input [7:0] a, output signed [3:0] b, "
               "input c);\nendmodule\n")
        info = parse_modules(src)["m"]
        assert info.ports == ["a", "b", "c"]
        assert info.port_widths == {"a": 8, "b": 4, "c": 1}

    def test_block_comments_are_ignored(self):
        src = ("/* module ghost (input q);\nendmodule */\n"
               "module real_one (input x); // module fake (input y);\n"
               "endmodule\n")
        assert list(parse_modules(src)) == ["real_one"]

    def test_instance_parsing(self):
        src = ("module sub (input x);\nendmodule\n"
               "module top (input a);\n"
               "  sub u0 (.x(a));\n"
               "  sub u1 (.x(a));\n"
               "endmodule\n")
        mods = parse_modules(src)
        assert mods["top"].instances == [("sub", "u0", ["x"]),
                                         ("sub", "u1", ["x"])]
        assert instance_census({"a.v": src}) == {"sub": 2}

    def test_lint_undefined_module(self):
        files = {"a.v": "module a (input x);\n  sub u0 (.x(x));\n"
                        "endmodule\n"}
        diags = lint_project(files)
        assert diags == ["a: instantiates undefined module sub as u0"]

    def test_lint_unknown_port(self):
        files = {"a.v": "module sub (input y);\nendmodule\n"
                        "module a (input x);\n  sub u0 (.x(x), .y(x));\n"
                        "endmodule\n"}
        assert ("a.u0: connects unknown ports ['x'] of sub"
                in lint_project(files))

    def test_lint_unconnected_port(self):
        files = {"a.v": "module sub (input x, input y);\nendmodule\n"
                        "module a (input x);\n  sub u0 (.x(x));\n"
                        "endmodule\n"}
        assert ("a.u0: leaves ports ['y'] of sub unconnected"
                in lint_project(files))

    def test_lint_duplicate_connection(self):
        files = {"a.v": "module sub (input x);\nendmodule\n"
                        "module a (input x);\n  sub u0 (.x(x), .x(x));\n"
                        "endmodule\n"}
        assert "a.u0: duplicate connection" in lint_project(files)

    def test_lint_module_defined_twice(self):
        files = {"a.v": "module m (input x);\nendmodule\n",
                 "b.v": "module m (input x);\nendmodule\n"}
        assert "b.v: module m defined twice" in lint_project(files)

    def test_lint_reports_parse_failures_per_file(self):
        files = {"a.v": "module m (input x);\n"}
        diags = lint_project(files)
        assert diags == ["a.v: 1 module headers but 0 endmodule"]

    def test_rom_tables_decode(self):
        src = ("module r (input [7:0] a, output reg [15:0] d);\n"
               "  always @* case (a)\n"
               "    8'd0: d = 16'shfff3;\n"
               "    8'd1: d = 16'sh0010;\n"
               "  endcase\nendmodule\n")
        assert rom_tables(src) == {"d": {0: -13, 1: 16}}

    def test_rom_tables_width_check(self):
        src = "4'd0: t = 4'shff;\n"
        with pytest.raises(VerilogError,
                           match=r"t\[0\]: literal wider than 4 bits"):
            rom_tables(src)

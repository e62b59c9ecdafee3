"""Command-line front end.

Subcommands:

  gen-nn      make a seeded random network and write its weights document
  compile     weights -> netlist -> passes -> equivalence gate -> Verilog
  simulate    run samples through one of three engines (reference, fixed,
              rtl) and write the outputs
  sweep-bits  SNR versus word length, as CSV

Options may come from a JSON config file (--config); explicit flags win.
The config may also carry structured keys with no flag equivalent:
"formats" maps edge classes (input/weight/state/accumulator/output) to
[word, frac] pairs, and "passes" is an ordered pipeline such as
[{"fuse": 1}, "retime", {"c_slow": 2}].

Exit codes: 0 ok, 1 usage or validation, 2 infeasible schedule,
3 equivalence gate failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from dataclasses import replace
from typing import Optional, Sequence

from .fixedpoint import FixedPointFormat, FormatAssignment
from .graph import ModelError
from .nn import WeightsError, build_state_space, load_weights, random_nn, \
    save_weights
from .simulate import FixedModel, gen_activation_lut, bit_sweep, \
    default_frac_policy, simulate_reference
from .netlist import NetlistError, Schedule, ScheduleError, critical_path
from .elaborate import elaborate, latency
from .rtlsim import RtlSim, compare_with_functional, drive_streams, \
    random_inputs
from .passes import c_slow, fuse_state_transition, pipeline_multiplier, retime
from .verilog import EmitOptions, emit_project, write_project
from .vlint import VerilogError


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is taken by schedule errors here
    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


def _int_list(v) -> list[int]:
    if isinstance(v, str):
        v = [s for s in v.replace(",", " ").split() if s]
    try:
        out = [int(x) for x in v]
    except (TypeError, ValueError):
        raise CliError(f"expected a list of integers, got {v!r}")
    if not out:
        raise CliError("empty width list")
    return out


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CliError(f"config {path}: {e}")
    if not isinstance(doc, dict):
        raise CliError(f"config {path}: expected a JSON object")
    return doc


# Accepted config spellings that differ from the flag's dest name.
_ALIASES = {"model": "weights", "out": "out_dir", "output_dir": "out_dir",
            "multipliers_per_node": "mults"}


def _merge(args: argparse.Namespace, defaults: dict) -> None:
    """Fill unset options from the config file, then from hard defaults.

    Every option is declared with default None so "unset" is detectable;
    config keys use the option's dest name (underscores).
    """
    cfg = {}
    if getattr(args, "config", None):
        for key, val in _load_config(args.config).items():
            cfg[_ALIASES.get(key, key)] = val
    unknown = sorted(set(cfg) - set(defaults))
    if unknown:
        raise CliError(f"config keys not recognized here: {', '.join(unknown)}")
    for key, hard in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, cfg[key] if key in cfg else hard)


def _require(args: argparse.Namespace, key: str, flag: str) -> None:
    if getattr(args, key) is None:
        raise CliError(f"{flag} is required (flag or config)")


# ---------------------------------------------------------------------------
# Shared model construction.

_CLASSES = ("input", "weight", "state", "accumulator", "output")


def _make_formats(args) -> FormatAssignment:
    fmts = FormatAssignment.uniform(args.width, args.frac)
    if not args.formats:
        return fmts
    if not isinstance(args.formats, dict):
        raise CliError('"formats" must map edge classes to [word, frac]')
    kw = {}
    for cls, wn in args.formats.items():
        if cls not in _CLASSES:
            raise CliError(f'unknown format class {cls!r}; '
                           f'expected one of {", ".join(_CLASSES)}')
        try:
            w, n = wn
        except (TypeError, ValueError):
            raise CliError(f'format for {cls!r} must be [word, frac], '
                           f'got {wn!r}')
        kw[cls] = FixedPointFormat(int(w), int(n))
    return replace(fmts, **kw)


def _build(args) -> tuple:
    """weights file -> (model, formats, lut); shared by every subcommand
    that consumes a network."""
    _require(args, "weights", "--weights")
    nn = load_weights(args.weights)
    fmts = _make_formats(args)
    m = build_state_space(nn)
    lut = None
    if nn.activation == "tanh" or nn.output_activation == "tanh":
        lut = gen_activation_lut("tanh", fmts.accumulator, fmts.state,
                                 args.addr_bits, args.lut_lo, args.lut_hi)
    return m, fmts, lut


def _pass_entry(e) -> tuple[str, int]:
    known = ("fuse", "pipeline_mult", "retime", "c_slow")
    if isinstance(e, str):
        name, val = e, 1
    elif isinstance(e, dict) and len(e) == 1:
        (name, val), = e.items()
    else:
        raise CliError(f"bad pass entry {e!r}; use a name or {{name: arg}}")
    if name not in known:
        raise CliError(f"unknown pass {name!r}; known: {', '.join(known)}")
    return name, int(val)


def _pass_list(args) -> list:
    """Flag-driven passes in canonical order, else the config's ordered
    list. Flat config keys (fuse, retime, ...) take the flag path."""
    flagged = []
    if args.fuse:
        flagged.append({"fuse": args.fuse})
    if args.pipeline_mult:
        flagged.append({"pipeline_mult": args.pipeline_mult})
    if args.retime:
        flagged.append("retime")
    if args.c_slow and args.c_slow > 1:
        flagged.append({"c_slow": args.c_slow})
    if flagged:
        return flagged
    return list(args.passes) if args.passes else []


def _transform(m, args, fmts, lut) -> tuple:
    """Model-level passes, elaboration, then netlist-level passes in the
    pipeline's order."""
    entries = [_pass_entry(e) for e in _pass_list(args)]
    i = 0
    while i < len(entries) and entries[i][0] == "fuse":
        if entries[i][1]:
            m = fuse_state_transition(m, entries[i][1])
        i += 1
    n = elaborate(m, Schedule(args.mults, args.clock_ratio), fmts, lut)
    for name, val in entries[i:]:
        if name == "fuse":
            raise CliError("fuse rewrites the model and must come before "
                           "the netlist passes in the pipeline")
        elif name == "pipeline_mult":
            muls = [j for j, nd in enumerate(n.nodes)
                    if nd.kind in ("mul", "cmul")]
            for j in muls:
                n = pipeline_multiplier(n, j, val)
        elif name == "retime":
            n = retime(n)
        elif name == "c_slow" and val > 1:
            n = c_slow(n, val)
    return m, n


_MODEL_DEFAULTS = {
    "weights": None, "width": 16, "frac": None, "addr_bits": 10,
    "lut_lo": -4.0, "lut_hi": 4.0, "formats": None,
}
_TRANSFORM_DEFAULTS = {
    "mults": 1, "clock_ratio": None, "fuse": 0, "pipeline_mult": 0,
    "retime": False, "c_slow": 1, "passes": None,
}


def _add_model_opts(p: _Parser) -> None:
    p.add_argument("--config", metavar="JSON",
                   help="JSON object of option defaults; flags win")
    p.add_argument("--weights", metavar="PATH", help="weights document")
    p.add_argument("--width", type=int, metavar="W",
                   help="word length everywhere (default 16)")
    p.add_argument("--frac", type=int, metavar="F",
                   help="fraction bits (default width - 4)")
    p.add_argument("--addr-bits", type=int, metavar="B",
                   help="activation table address bits (default 10)")
    p.add_argument("--lut-lo", type=float, metavar="X",
                   help="activation table lower edge (default -4.0)")
    p.add_argument("--lut-hi", type=float, metavar="X",
                   help="activation table upper edge (default 4.0)")


def _add_transform_opts(p: _Parser) -> None:
    p.add_argument("--mults", type=int, metavar="P",
                   help="multipliers per state node (default 1)")
    p.add_argument("--clock-ratio", type=int, metavar="R",
                   help="clock cycles budgeted per sample (default: latency)")
    p.add_argument("--fuse", type=int, metavar="J",
                   help="fold runs of J+1 linear update steps")
    p.add_argument("--pipeline-mult", type=int, metavar="S",
                   help="pipeline stages after every multiplier; shifts "
                        "alignment, so the equivalence gate usually rejects "
                        "it unless the schedule has slack")
    p.add_argument("--retime", action="store_true", default=None,
                   help="move registers to shorten the critical path")
    p.add_argument("--c-slow", type=int, metavar="C",
                   help="interleave C independent streams")


# ---------------------------------------------------------------------------
# gen-nn

def _cmd_gen_nn(args) -> int:
    _merge(args, {"inputs": None, "layers": None, "nodes": None,
                  "outputs": None, "seed": 1, "activation": "tanh",
                  "out": None})
    for key, flag in (("inputs", "--inputs"), ("layers", "--layers"),
                      ("nodes", "--nodes"), ("outputs", "--outputs")):
        _require(args, key, flag)
    nn = random_nn(args.inputs, args.layers, args.nodes, args.outputs,
                   args.seed, args.activation)
    text = save_weights(nn)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        print(args.out)
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# compile

def _cmd_compile(args) -> int:
    _merge(args, {**_MODEL_DEFAULTS, **_TRANSFORM_DEFAULTS,
                  "out_dir": None, "gate_samples": 1000, "seed": 7,
                  "mem_roms": False, "tb_samples": 4, "tb_seed": 2024})
    _require(args, "out_dir", "--out-dir")
    m, fmts, lut = _build(args)
    m, n = _transform(m, args, fmts, lut)

    fixed = FixedModel(m, fmts, lut)
    stim = random_inputs(m.input_dim, args.gate_samples, args.seed)
    report = compare_with_functional(fixed, n, stim)
    if not report.equivalent:
        print(f"equivalence gate FAILED: {report.describe()}",
              file=sys.stderr)
        print("nothing emitted", file=sys.stderr)
        return 3

    files = emit_project(n, EmitOptions(mem_roms=args.mem_roms,
                                        tb_samples=args.tb_samples,
                                        tb_seed=args.tb_seed))
    written = write_project(files, args.out_dir)
    kinds = Counter(nd.kind for nd in n.nodes)
    print(f"gate: {report.describe()}")
    print(f"latency {latency(n)} cycles, critical path {critical_path(n)}, "
          f"{len(n.nodes)} nodes, {kinds['reg']} registers, "
          f"{kinds['mul'] + kinds['cmul']} multipliers")
    for path in written:
        print(path)
    return 0


# ---------------------------------------------------------------------------
# simulate

def _read_samples(path: str, input_dim: int) -> list[list[float]]:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CliError(f"inputs {path}: {e}")
    if not (isinstance(doc, list) and doc
            and all(isinstance(r, list) and len(r) == input_dim for r in doc)):
        raise CliError(f"inputs {path}: expected a non-empty list of "
                       f"length-{input_dim} sample rows")
    return [[float(v) for v in row] for row in doc]


def _cmd_simulate(args) -> int:
    _merge(args, {**_MODEL_DEFAULTS, **_TRANSFORM_DEFAULTS,
                  "engine": "rtl", "inputs": None, "samples": 8, "seed": 99,
                  "out": None, "trace": None})
    if args.engine not in ("reference", "fixed", "rtl"):
        raise CliError(f"unknown engine {args.engine!r}")
    if args.trace and args.engine != "rtl":
        raise CliError("--trace records clock cycles; it needs engine=rtl")
    m, fmts, lut = _build(args)

    if args.inputs:
        samples = _read_samples(args.inputs, m.input_dim)
    else:
        samples = random_inputs(m.input_dim, args.samples, args.seed).tolist()

    doc: dict = {"engine": args.engine}
    if args.engine == "reference":
        # model-level passes only; there is no netlist here
        for e in _pass_list(args):
            name, val = _pass_entry(e)
            if name != "fuse":
                raise CliError(f"engine=reference runs the model directly; "
                               f"pass {name!r} needs a netlist engine")
            m = fuse_state_transition(m, val)
        outs = [[float(v) for v in simulate_reference(m, u)] for u in samples]
        doc["outputs"] = outs
        for i, y in enumerate(outs):
            print(f"sample {i}: y = [{' '.join(f'{v:.10g}' for v in y)}]")
    else:
        fixed = FixedModel(m, fmts, lut)
        raw_in = [fixed.quantize_input(u) for u in samples]
        scale = 2.0 ** -fmts.output.frac_length
        if args.engine == "fixed":
            raws = [fixed.run_raw(u) for u in raw_in]
            lats = None
        else:
            m2, n = _transform(m, args, fmts, lut)
            sim = RtlSim(n, trace=args.trace is not None)
            res = drive_streams(n, {0: raw_in}, sim=sim)[0]
            raws, lats = [list(o) for o in res.outputs], res.latencies
            if args.trace:
                with open(args.trace, "w", encoding="utf-8") as f:
                    f.write(sim.trace_csv())
        doc["raw"] = raws
        doc["outputs"] = [[r * scale for r in row] for row in raws]
        if lats is not None:
            doc["latencies"] = list(lats)
        for i, row in enumerate(raws):
            vals = " ".join(f"{r * scale:.10g}" for r in row)
            tail = f"  latency {lats[i]}" if lats is not None else ""
            print(f"sample {i}: y = [{vals}]  raw {row}{tail}")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=1)
            f.write("\n")
        print(f"outputs written to {args.out}")
    if args.trace:
        print(f"trace written to {args.trace}")
    return 0


# ---------------------------------------------------------------------------
# sweep-bits

def _cmd_sweep_bits(args) -> int:
    _merge(args, {"weights": None, "widths": "8,12,16,24,32", "samples": 200,
                  "seed": 3, "out": None})
    _require(args, "weights", "--weights")
    widths = _int_list(args.widths)
    m = build_state_space(load_weights(args.weights))
    stim = random_inputs(m.input_dim, args.samples, args.seed)
    report = bit_sweep(m, stim, widths, default_frac_policy, seed=args.seed)
    text = report.to_csv()
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
        print(f"written to {args.out}")
    return 0


# ---------------------------------------------------------------------------

def _make_parser() -> _Parser:
    p = _Parser(prog="ss2rtl",
                description="state-space models to fixed-point Verilog")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    g = sub.add_parser("gen-nn", help="write a seeded random network")
    g.add_argument("--config", metavar="JSON")
    g.add_argument("--inputs", type=int, metavar="L")
    g.add_argument("--layers", type=int, metavar="N")
    g.add_argument("--nodes", type=int, metavar="M")
    g.add_argument("--outputs", type=int, metavar="P")
    g.add_argument("--seed", type=int)
    g.add_argument("--activation", choices=("tanh", "identity"))
    g.add_argument("--out", metavar="PATH", help="default: stdout")
    g.set_defaults(func=_cmd_gen_nn)

    c = sub.add_parser("compile", help="weights to a Verilog project")
    _add_model_opts(c)
    _add_transform_opts(c)
    c.add_argument("--out-dir", "--out", dest="out_dir", metavar="DIR",
                   help="project directory")
    c.add_argument("--gate-samples", type=int, metavar="N",
                   help="equivalence gate sample count (default 1000)")
    c.add_argument("--seed", type=int, help="equivalence gate stimulus seed")
    c.add_argument("--mem-roms", action="store_true", default=None,
                   help="emit $readmemh tables instead of inline case ROMs")
    c.add_argument("--tb-samples", type=int, metavar="N",
                   help="testbench sample count (default 4)")
    c.add_argument("--tb-seed", type=int, metavar="S")
    c.set_defaults(func=_cmd_compile)

    s = sub.add_parser("simulate", help="run a model through an engine")
    _add_model_opts(s)
    _add_transform_opts(s)
    s.add_argument("--engine", choices=("reference", "fixed", "rtl"),
                   help="reference: double precision; fixed: bit-accurate "
                        "functional; rtl: cycle-accurate netlist (default)")
    s.add_argument("--inputs", metavar="PATH",
                   help="JSON list of input sample rows (default: random)")
    s.add_argument("--samples", type=int, metavar="N",
                   help="random sample count when --inputs absent (default 8)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", metavar="PATH", help="write outputs JSON here")
    s.add_argument("--trace", metavar="PATH",
                   help="write a cycle CSV here (engine=rtl)")
    s.set_defaults(func=_cmd_simulate)

    w = sub.add_parser("sweep-bits", help="SNR versus word length, CSV")
    w.add_argument("--config", metavar="JSON")
    w.add_argument("--weights", metavar="PATH")
    w.add_argument("--widths", metavar="LIST",
                   help="comma-separated word lengths (default 8,12,16,24,32)")
    w.add_argument("--samples", type=int, metavar="N")
    w.add_argument("--seed", type=int)
    w.add_argument("--out", metavar="PATH", help="also write the CSV here")
    w.set_defaults(func=_cmd_sweep_bits)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help()
            return 1
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ScheduleError as e:
        print(f"schedule error: {e}", file=sys.stderr)
        return 2
    except (ModelError, WeightsError, NetlistError, VerilogError,
            ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 4
    except SystemExit as e:   # argparse --help
        return int(e.code or 0)


if __name__ == "__main__":
    sys.exit(main())

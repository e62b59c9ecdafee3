"""Discrete-time state-space models compiled to fixed-point Verilog.

The pipeline: describe a model as a dataflow graph over per-step parameter
tables (or rewrite an MLP into that form, one layer per step), bind
fixed-point formats, elaborate to a word-level netlist with a time-shared
MACC schedule, optionally rewrite the netlist (multiplier pipelining,
retiming, C-slow interleaving), check bit-exact equivalence against the
functional fixed-point model with a cycle-accurate interpreter, and emit
a self-checking Verilog project.
"""

from .fixedpoint import (
    FixedPointFormat, FpValue, FormatAssignment,
    quantize, requantize, round_shift, round_half_away,
    fp_add, fp_mul, product_format, macc_format, accumulator_guard_bits,
)
from .graph import (
    ModelError, GNode, DataflowGraph, ParamTable, StateSpaceModel,
    GraphBuilder, validate_model,
    AffineStep, AffineOutput, extract_affine_step, extract_affine_output,
    first_nonlinear_node,
)
from .nn import (
    NNSpec, WeightsError, WEIGHTS_VERSION, build_state_space,
    parse_weights, load_weights, save_weights, random_nn,
)
from .simulate import (
    LutRom, gen_activation_lut, lut_eval, FixedModel,
    simulate_reference, simulate_reference_trace, simulate_fixed,
    snr, SnrReport, bit_sweep, default_frac_policy, SNR_CAP_DB,
)
from .netlist import (
    NlNode, Netlist, NetlistBuilder, NetlistError,
    Schedule, ScheduleError, macc_cycles, ControllerFsm, ElabInfo,
    check_netlist, topo_order, moore_violations,
    DelayModel, critical_path, ctrl_format,
)
from .elaborate import elaborate, latency, build_controller
from .rtlsim import (
    RtlSim, StreamResult, drive_streams, drive_samples,
    EquivalenceReport, compare_with_functional, random_inputs,
)
from .passes import (
    fuse_state_transition, pipeline_multiplier, retime, c_slow,
)
from .verilog import EmitOptions, emit_project, write_project, FILE_NAMES
from .vlint import (
    VerilogError, parse_modules, lint_project, instance_census,
    rom_tables, port_width,
)

__version__ = "0.1.0"

__all__ = [
    "FixedPointFormat", "FpValue", "FormatAssignment",
    "quantize", "requantize", "round_shift", "round_half_away",
    "fp_add", "fp_mul", "product_format", "macc_format",
    "accumulator_guard_bits",
    "ModelError", "GNode", "DataflowGraph", "ParamTable", "StateSpaceModel",
    "GraphBuilder", "validate_model",
    "AffineStep", "AffineOutput", "extract_affine_step",
    "extract_affine_output", "first_nonlinear_node",
    "NNSpec", "WeightsError", "WEIGHTS_VERSION", "build_state_space",
    "parse_weights", "load_weights", "save_weights", "random_nn",
    "LutRom", "gen_activation_lut", "lut_eval", "FixedModel",
    "simulate_reference", "simulate_reference_trace", "simulate_fixed",
    "snr", "SnrReport", "bit_sweep", "default_frac_policy", "SNR_CAP_DB",
    "NlNode", "Netlist", "NetlistBuilder", "NetlistError",
    "Schedule", "ScheduleError", "macc_cycles", "ControllerFsm", "ElabInfo",
    "check_netlist", "topo_order", "moore_violations",
    "DelayModel", "critical_path", "ctrl_format",
    "elaborate", "latency", "build_controller",
    "RtlSim", "StreamResult", "drive_streams", "drive_samples",
    "EquivalenceReport", "compare_with_functional", "random_inputs",
    "fuse_state_transition", "pipeline_multiplier", "retime", "c_slow",
    "EmitOptions", "emit_project", "write_project", "FILE_NAMES",
    "VerilogError", "parse_modules", "lint_project", "instance_census",
    "rom_tables", "port_width",
]

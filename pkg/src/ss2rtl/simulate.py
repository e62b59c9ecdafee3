"""Model simulators and quantization analysis.

Three levels of fidelity:

  * simulate_reference: double precision, evaluates the dataflow graphs
    directly. The accuracy baseline.
  * simulate_fixed: bit-accurate emulation of the hardware datapath.
    All arithmetic is on Python integers, so it stays exact at any word
    length. Products are held at full width, one MACC accumulator per
    state node with guard bits, and each node is rounded exactly once at
    its activation input.
  * rtl-level simulation lives in rtlsim and must agree with
    simulate_fixed raw for raw.

snr/bit_sweep quantify the fixed-point error against the reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .fixedpoint import (FixedPointFormat, FormatAssignment, FpValue,
                         macc_format, quantize, round_shift)
from .graph import (ModelError, StateSpaceModel, extract_affine_output,
                    extract_affine_step, validate_model)

SNR_CAP_DB = 300.0   # sentinel for zero error energy; also the upper cap

_ACT_FN = {"tanh": math.tanh, "identity": lambda x: x}


# ---------------------------------------------------------------------------
# Reference simulation (double precision, generic over graphs).

def _eval_graph(m: StateSpaceModel, g, k: int, x: np.ndarray, u: np.ndarray,
                delay_mem: dict) -> np.ndarray:
    vals: list[Optional[np.ndarray]] = [None] * len(g.nodes)
    for i, n in enumerate(g.nodes):
        if n.op == "input":
            vals[i] = u
        elif n.op == "state_in":
            vals[i] = x
        elif n.op == "const":
            vals[i] = m.params[n.payload].at(k).astype(float)
        elif n.op == "matvec":
            vals[i] = m.params[n.payload].at(k).astype(float) @ vals[n.args[0]]
        elif n.op == "vec_add":
            vals[i] = vals[n.args[0]] + vals[n.args[1]]
        elif n.op == "scalar_add":
            vals[i] = vals[n.args[0]] + float(n.payload)
        elif n.op == "scalar_mul":
            vals[i] = vals[n.args[0]] * float(n.payload)
        elif n.op == "activation":
            v = vals[n.args[0]]
            vals[i] = np.tanh(v) if n.payload == "tanh" else v
        elif n.op == "delay":
            w = len(vals[n.args[0]]) if vals[n.args[0]] is not None else 1
            vals[i] = delay_mem.get(i, np.zeros(w))
        else:
            raise ModelError(f"unknown op {n.op!r}")
    for i, n in enumerate(g.nodes):
        if n.op == "delay":
            delay_mem[i] = vals[n.args[0]]
    return np.concatenate([np.atleast_1d(vals[o]) for o in g.outputs])


def simulate_reference_trace(m: StateSpaceModel,
                             u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(states, y): states has shape (horizon + 1, state_dim) with row k
    holding the state after k updates; y has shape (output_dim,)."""
    diags = validate_model(m)
    if diags:
        raise ModelError("; ".join(diags))
    u = np.asarray(u, dtype=float)
    if u.shape != (m.input_dim,):
        raise ModelError(f"input has shape {u.shape}, "
                         f"expected ({m.input_dim},)")
    x = m.initial_state.astype(float)
    states = [x]
    delay_mem: dict = {}
    for k in range(m.horizon):
        x = _eval_graph(m, m.update_graph, k, x, u, delay_mem)
        states.append(x)
    y = _eval_graph(m, m.output_graph, m.horizon, x, u, {})
    return np.stack(states), y


def simulate_reference(m: StateSpaceModel, u: np.ndarray) -> np.ndarray:
    """Exact double-precision output after `horizon` update steps."""
    return simulate_reference_trace(m, u)[1]


# ---------------------------------------------------------------------------
# Activation lookup table.

@dataclass(frozen=True)
class LutRom:
    """Uniform-bin lookup table over [lo, hi).

    entries[a] holds the quantized function value at the bin's left edge
    lo + a * (hi - lo) / 2**addr_bits. Lookup clamps the operand to the
    range and truncates to the bin index; there is no interpolation, which
    matches address extraction from the operand's most significant bits.
    """

    kind: str
    lo: float
    hi: float
    addr_bits: int
    in_fmt: FixedPointFormat
    out_fmt: FixedPointFormat
    entries: tuple[FpValue, ...]

    @property
    def depth(self) -> int:
        return 1 << self.addr_bits

    def bin_width(self) -> Fraction:
        return (Fraction(self.hi) - Fraction(self.lo)) / self.depth

    def address_of(self, raw: int) -> int:
        """Bin index for an input raw in in_fmt. Exact rational arithmetic;
        a value exactly on a bin edge indexes the bin it opens."""
        x = Fraction(raw, 1 << self.in_fmt.frac_length)
        lo, hi = Fraction(self.lo), Fraction(self.hi)
        if x <= lo:
            return 0
        if x >= hi:
            return self.depth - 1
        a = (x - lo) * self.depth // (hi - lo)
        return min(int(a), self.depth - 1)

    def lookup_raw(self, raw: int) -> int:
        return self.entries[self.address_of(raw)].raw


def gen_activation_lut(kind: str, in_fmt: FixedPointFormat,
                       out_fmt: FixedPointFormat, addr_bits: int = 10,
                       lo: float = -4.0, hi: float = 4.0) -> LutRom:
    if addr_bits < 1:
        raise ValueError(f"addr_bits must be >= 1, got {addr_bits}")
    if not lo < hi:
        raise ValueError(f"degenerate range [{lo}, {hi})")
    if kind not in _ACT_FN:
        raise ValueError(f"unknown activation kind {kind!r}")
    fn = _ACT_FN[kind]
    depth = 1 << addr_bits
    step = (Fraction(hi) - Fraction(lo)) / depth
    entries = tuple(
        quantize(fn(float(Fraction(lo) + a * step)), out_fmt)
        for a in range(depth))
    return LutRom(kind, lo, hi, addr_bits, in_fmt, out_fmt, entries)


def lut_eval(lut: LutRom, x: FpValue) -> FpValue:
    if x.fmt != lut.in_fmt:
        raise ValueError(f"operand format {x.fmt} does not match "
                         f"LUT input format {lut.in_fmt}")
    return lut.entries[lut.address_of(x.raw)]


# ---------------------------------------------------------------------------
# Fixed-point simulation.

class FixedModel:
    """A model bound to formats, with parameters quantized once.

    The step semantics mirror the elaborated datapath exactly:

      for each step k, each state node i accumulates the full-width
      products of its term weights with the step's operand vector (the
      quantized input at k = 0, the state bank afterwards), adds the
      aligned bias, and is narrowed exactly once: to the accumulator
      format ahead of a tanh table lookup, or directly to the state
      format when the activation is identity.
    """

    def __init__(self, m: StateSpaceModel, fmts: FormatAssignment,
                 lut: Optional[LutRom] = None):
        diags = validate_model(m)
        if diags:
            raise ModelError("; ".join(diags))
        step = extract_affine_step(m)
        out = extract_affine_output(m)
        # With a LUT the activation is the table the hardware will hold.
        # Without one (analysis mode) tanh is evaluated exactly on the
        # narrowed pre-activation: the limit of the table as its address
        # width grows, which is what a word-length study wants to see.
        if lut is not None:
            if lut.in_fmt != fmts.accumulator:
                raise ValueError(
                    f"LUT input format {lut.in_fmt} does not match the "
                    f"accumulator format {fmts.accumulator}")
            if lut.out_fmt != fmts.state:
                raise ValueError(
                    f"LUT output format {lut.out_fmt} does not match the "
                    f"state format {fmts.state}")

        self.model = m
        self.fmts = fmts
        self.lut = lut
        self.step = step
        self.out = out
        M, L, N = m.state_dim, m.input_dim, m.horizon

        qt = lambda a, name: [
            [quantize(float(v), fmts.table_format(name)).raw for v in row]
            for row in np.atleast_2d(a)]
        self.w_state = [qt(step.state_mats[k], "state_weights")
                        for k in range(N)]
        self.w_input = [qt(step.input_mats[k], "input_weights")
                        for k in range(N)]
        self.bias = [[quantize(float(v), fmts.table_format("biases")).raw
                      for v in step.biases[k]] for k in range(N)]
        self.w_out = qt(out.state_mat, "output_weights")
        self.w_out_in = qt(out.input_mat, "output_weights")
        self.out_bias = [quantize(float(v), fmts.table_format("biases")).raw
                         for v in out.bias]
        if np.any(m.initial_state != 0.0) and any(
                np.any(s != 0.0) for s in step.state_mats[:1]):
            # A nonzero initial state only matters if step 0 reads it.
            self.x0 = [quantize(float(v), fmts.state).raw
                       for v in m.initial_state]
        else:
            self.x0 = [0] * M

        # out-of-table end activation (rare): same table geometry, output fmt
        self.end_lut = None
        if out.activation == "tanh" and lut is not None:
            self.end_lut = gen_activation_lut(
                "tanh", fmts.accumulator, fmts.output,
                lut.addr_bits, lut.lo, lut.hi)

    def quantize_input(self, u: Sequence[float]) -> list[int]:
        return [quantize(float(v), self.fmts.input).raw for v in u]

    def run_raw(self, u_raw: Sequence[int]) -> list[int]:
        """One sample, raw in, raw out."""
        f = self.fmts
        M = self.model.state_dim
        nw = f.table_format  # fraction lengths can differ per table
        x = list(self.x0)
        for k in range(self.model.horizon):
            if k == 0:
                operands, op_frac = list(u_raw), f.input.frac_length
                terms = self.w_input[0]
            else:
                operands, op_frac = x, f.state.frac_length
                terms = self.w_state[k]
            tw_frac = nw("input_weights" if k == 0 else
                         "state_weights").frac_length
            acc_frac = op_frac + tw_frac
            b_shift = acc_frac - nw("biases").frac_length
            nxt = [0] * M
            for i in range(M):
                acc = 0
                row = terms[i]
                for j, o in enumerate(operands):
                    acc += row[j] * o
                acc += self.bias[k][i] << b_shift
                if self.step.activation == "tanh":
                    pre = f.accumulator.saturate(
                        round_shift(acc, acc_frac - f.accumulator.frac_length))
                    if self.lut is not None:
                        nxt[i] = self.lut.lookup_raw(pre)
                    else:
                        v = math.tanh(pre * 2.0 ** -f.accumulator.frac_length)
                        nxt[i] = quantize(v, f.state).raw
                else:
                    nxt[i] = f.state.saturate(
                        round_shift(acc, acc_frac - f.state.frac_length))
            x = nxt

        ow_frac = nw("output_weights").frac_length
        acc_frac = f.state.frac_length + ow_frac
        in_shift = acc_frac - (f.input.frac_length + ow_frac)
        b_shift = acc_frac - nw("biases").frac_length
        y = []
        for i in range(len(self.w_out)):
            acc = 0
            for j, xv in enumerate(x):
                acc += self.w_out[i][j] * xv
            for j, uv in enumerate(u_raw):
                acc += (self.w_out_in[i][j] * uv) << in_shift
            acc += self.out_bias[i] << b_shift
            if self.out.activation == "tanh":
                pre = f.accumulator.saturate(
                    round_shift(acc, acc_frac - f.accumulator.frac_length))
                if self.end_lut is not None:
                    y.append(self.end_lut.lookup_raw(pre))
                else:
                    v = math.tanh(pre * 2.0 ** -f.accumulator.frac_length)
                    y.append(quantize(v, f.output).raw)
            else:
                y.append(f.output.saturate(
                    round_shift(acc, acc_frac - f.output.frac_length)))
        return y

    def run(self, u: Sequence[float]) -> list[FpValue]:
        return [FpValue(r, self.fmts.output)
                for r in self.run_raw(self.quantize_input(u))]

    def accumulator_width(self, step0: bool) -> FixedPointFormat:
        f = self.fmts
        data = f.input if step0 else f.state
        w = f.table_format("input_weights" if step0 else "state_weights")
        terms = max(self.model.input_dim, self.model.state_dim)
        return macc_format(data, w, terms)


def simulate_fixed(m: StateSpaceModel, u: Sequence[float],
                   fmts: FormatAssignment,
                   lut: Optional[LutRom] = None) -> list[FpValue]:
    """One-shot fixed-point run. For many samples build a FixedModel once."""
    return FixedModel(m, fmts, lut).run(u)


# ---------------------------------------------------------------------------
# Signal-to-noise analysis.

def snr(reference: np.ndarray, test: np.ndarray) -> np.ndarray:
    """Per-output-channel SNR in dB over a series of samples.

    Both arrays are (samples, outputs). Zero error energy yields the
    SNR_CAP_DB sentinel, and finite values are capped there as well so the
    scale has a single well-defined top. Zero reference energy is an error.
    """
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    test = np.atleast_2d(np.asarray(test, dtype=float))
    if reference.shape != test.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {test.shape}")
    sig = np.sum(reference * reference, axis=0)
    if np.any(sig == 0.0):
        ch = int(np.argmin(sig))
        raise ValueError(f"zero reference energy on output {ch}")
    err = np.sum((reference - test) ** 2, axis=0)
    out = np.full(sig.shape, SNR_CAP_DB)
    nz = err > 0.0
    out[nz] = np.minimum(10.0 * np.log10(sig[nz] / err[nz]), SNR_CAP_DB)
    return out


@dataclass(frozen=True)
class SnrReport:
    """Result of a bit-width sweep: one row per word length."""

    widths: tuple[int, ...]
    snr_db: tuple[tuple[float, ...], ...]   # [width index][output index]
    samples: int
    seed: Optional[int]

    def to_csv(self) -> str:
        lines = ["bits,output_index,snr_db"]
        for w, row in zip(self.widths, self.snr_db):
            for j, v in enumerate(row):
                lines.append(f"{w},{j},{v:.4f}")
        return "\n".join(lines) + "\n"


def default_frac_policy(width: int) -> int:
    """Fraction bits for a swept word length: all but four bits, keeping
    three integer bits plus sign for the activation input range."""
    return width - 4


def bit_sweep(m: StateSpaceModel, inputs: np.ndarray,
              widths: Sequence[int],
              frac_policy: Callable[[int], int] = default_frac_policy,
              seed: Optional[int] = None) -> SnrReport:
    """SNR of the fixed-point pipeline against the reference, per width.

    Runs in analysis mode: activations are evaluated exactly on the
    narrowed pre-activation, so the report isolates word-length effects.
    Table resolution is a separate hardware choice with its own error
    bound and would otherwise put a width-independent floor under every
    row past ~16 bits.

    `inputs` is (samples, input_dim). Evaluation is sequential and
    deterministic; the seed is carried as provenance for the report.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if not widths:
        raise ValueError("width list is empty")
    ref = np.stack([simulate_reference(m, u) for u in inputs])
    rows = []
    for w in widths:
        fmts = FormatAssignment.uniform(w, frac_policy(w))
        fixed = FixedModel(m, fmts, None)
        test = np.stack([[float(v) for v in fixed.run(u)] for u in inputs])
        rows.append(tuple(float(v) for v in snr(ref, test)))
    return SnrReport(tuple(widths), tuple(rows), inputs.shape[0], seed)

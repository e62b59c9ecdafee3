"""Feed-forward network frontend.

A fully-connected network with N equal-width hidden layers is rewritten as
a state-space model whose state is one hidden layer's activation vector:
the input is folded into the first pre-activation, so

    x[1]   = act(Bt u + b[0])            Bt = input weights, transposed
    x[k+1] = act(W[k] x[k] + b[k])       k = 1 .. N-1
    y      = C x[N]

with x[0] = 0. One model step therefore advances the signal by exactly one
layer, and the state after k steps equals hidden layer k's activations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graph import (DataflowGraph, GraphBuilder, ModelError, ParamTable,
                    StateSpaceModel)


class WeightsError(ValueError):
    """A weights document failed to parse or validate."""


WEIGHTS_VERSION = 1

# Parameter table names used by models built here.
T_STATE_W = "state_weights"    # per step k: (M, M); zero at k = 0
T_INPUT_W = "input_weights"    # per step k: (M, L); transposed input weights
                               # at k = 0, zero afterwards
T_BIAS = "biases"              # per step k: (M,)
T_OUTPUT_W = "output_weights"  # static: (P, M)


@dataclass(frozen=True)
class NNSpec:
    """Network description with exact (unquantized) real weights.

    input_weights is (input_dim, nodes_per_layer): entry [j][i] feeds input
    j into node i of the first layer. hidden_weights[k] is
    (nodes_per_layer, nodes_per_layer) with rows indexed by destination
    node, applied between layers k and k+1 for k = 1 .. hidden_layers-1.
    """

    input_dim: int
    hidden_layers: int
    nodes_per_layer: int
    output_dim: int
    activation: str
    input_weights: np.ndarray
    hidden_weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    output_weights: np.ndarray
    output_activation: str = "identity"

    def validate(self) -> list[str]:
        diags: list[str] = []
        L, N, M, P = (self.input_dim, self.hidden_layers,
                      self.nodes_per_layer, self.output_dim)
        for name, v in (("input_dim", L), ("hidden_layers", N),
                        ("nodes_per_layer", M), ("output_dim", P)):
            if v < 1:
                diags.append(f"{name} must be >= 1, got {v}")
        if diags:
            return diags
        if self.activation not in ("tanh", "identity"):
            diags.append(f"unknown activation {self.activation!r}")
        if self.output_activation not in ("tanh", "identity"):
            diags.append(f"unknown output_activation {self.output_activation!r}")
        if self.input_weights.shape != (L, M):
            diags.append(f"beta: expected shape ({L}, {M}), "
                         f"got {self.input_weights.shape}")
        if len(self.hidden_weights) != N - 1:
            diags.append(f"W: expected {N - 1} matrices, "
                         f"got {len(self.hidden_weights)}")
        else:
            for k, w in enumerate(self.hidden_weights, start=1):
                if w.shape != (M, M):
                    diags.append(f"W[{k}]: expected shape ({M}, {M}), "
                                 f"got {w.shape}")
        if len(self.biases) != N:
            diags.append(f"b: expected {N} vectors, got {len(self.biases)}")
        else:
            for k, b in enumerate(self.biases):
                if b.shape != (M,):
                    diags.append(f"b[{k}]: expected shape ({M},), got {b.shape}")
        if self.output_weights.shape != (P, M):
            diags.append(f"C: expected shape ({P}, {M}), "
                         f"got {self.output_weights.shape}")
        return diags


def build_state_space(nn: NNSpec) -> StateSpaceModel:
    """Rewrite the network as a state-space model, one layer per step."""
    diags = nn.validate()
    if diags:
        raise ModelError("; ".join(diags))
    L, N, M, P = (nn.input_dim, nn.hidden_layers,
                  nn.nodes_per_layer, nn.output_dim)

    state_w = [np.zeros((M, M))]
    state_w += [np.asarray(w, dtype=float) for w in nn.hidden_weights]
    input_w = [nn.input_weights.astype(float).T]
    input_w += [np.zeros((M, L)) for _ in range(N - 1)]
    biases = [np.asarray(b, dtype=float) for b in nn.biases]

    gb = GraphBuilder()
    x = gb.state_in()
    u = gb.input()
    pre = gb.vec_add(gb.matvec(T_STATE_W, x), gb.matvec(T_INPUT_W, u))
    pre = gb.vec_add(pre, gb.const(T_BIAS))
    update = gb.build([gb.activation(nn.activation, pre)])

    gb = GraphBuilder()
    y = gb.matvec(T_OUTPUT_W, gb.state_in())
    if nn.output_activation != "identity":
        y = gb.activation(nn.output_activation, y)
    output = gb.build([y])

    return StateSpaceModel(
        state_dim=M, input_dim=L, output_dim=P, horizon=N,
        initial_state=np.zeros(M),
        update_graph=update, output_graph=output,
        params={
            T_STATE_W: ParamTable(tuple(state_w)),
            T_INPUT_W: ParamTable(tuple(input_w)),
            T_BIAS: ParamTable(tuple(biases)),
            T_OUTPUT_W: ParamTable((nn.output_weights.astype(float),),
                                   static=True),
        })


def _tensor(doc: dict, key: str, shape: tuple[int, ...]) -> np.ndarray:
    try:
        a = np.asarray(doc[key], dtype=float)
    except (TypeError, ValueError) as e:
        raise WeightsError(f"tensor {key!r}: {e}") from None
    if a.shape != shape:
        raise WeightsError(f"tensor {key!r}: expected shape {shape}, "
                           f"got {a.shape}")
    return a


def parse_weights(text: str) -> NNSpec:
    """Parse a weights document. Malformed JSON raises WeightsError with the
    line and column; a bad tensor raises WeightsError naming the tensor."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise WeightsError(
            f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise WeightsError("document root must be an object")
    version = doc.get("version")
    if version != WEIGHTS_VERSION:
        raise WeightsError(f"unsupported version {version!r}")
    for key in ("L", "N", "M", "P"):
        if not isinstance(doc.get(key), int) or doc[key] < 1:
            raise WeightsError(f"field {key!r} must be a positive integer")
    L, N, M, P = doc["L"], doc["N"], doc["M"], doc["P"]
    activation = doc.get("activation", "tanh")
    out_act = doc.get("output_activation", "identity")

    w_raw = doc.get("W")
    if not isinstance(w_raw, list) or len(w_raw) != N - 1:
        raise WeightsError(f"tensor 'W': expected a list of {N - 1} matrices")
    b_raw = doc.get("b")
    if not isinstance(b_raw, list) or len(b_raw) != N:
        raise WeightsError(f"tensor 'b': expected a list of {N} vectors")

    nn = NNSpec(
        input_dim=L, hidden_layers=N, nodes_per_layer=M, output_dim=P,
        activation=activation,
        input_weights=_tensor(doc, "beta", (L, M)),
        hidden_weights=tuple(
            _tensor({"W": w}, "W", (M, M)) for w in w_raw),
        biases=tuple(_tensor({"b": b}, "b", (M,)) for b in b_raw),
        output_weights=_tensor(doc, "C", (P, M)),
        output_activation=out_act,
    )
    diags = nn.validate()
    if diags:
        raise WeightsError("; ".join(diags))
    return nn


def load_weights(path: str) -> NNSpec:
    with open(path, "r", encoding="utf-8") as f:
        return parse_weights(f.read())


def save_weights(nn: NNSpec) -> str:
    """Serialize to the weights document format. Reals round-trip exactly."""
    doc = {
        "version": WEIGHTS_VERSION,
        "L": nn.input_dim, "N": nn.hidden_layers,
        "M": nn.nodes_per_layer, "P": nn.output_dim,
        "activation": nn.activation,
        "output_activation": nn.output_activation,
        "beta": nn.input_weights.tolist(),
        "W": [w.tolist() for w in nn.hidden_weights],
        "b": [b.tolist() for b in nn.biases],
        "C": nn.output_weights.tolist(),
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def random_nn(input_dim: int, hidden_layers: int, nodes_per_layer: int,
              output_dim: int, seed: int, activation: str = "tanh") -> NNSpec:
    """Seeded network with all weights and biases uniform in [-1, 1].

    Draw order: input weights, hidden weights (by layer), biases (by
    layer), output weights. The same seed always yields the same network.
    """
    rng = np.random.default_rng(seed)
    L, N, M, P = input_dim, hidden_layers, nodes_per_layer, output_dim
    u = lambda *shape: rng.uniform(-1.0, 1.0, shape)
    return NNSpec(
        input_dim=L, hidden_layers=N, nodes_per_layer=M, output_dim=P,
        activation=activation,
        input_weights=u(L, M),
        hidden_weights=tuple(u(M, M) for _ in range(N - 1)),
        biases=tuple(u(M) for _ in range(N)),
        output_weights=u(P, M),
    )

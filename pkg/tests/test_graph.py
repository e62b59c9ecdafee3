"""Model IR validation and affine extraction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ss2rtl import (
    DataflowGraph,
    GNode,
    GraphBuilder,
    ModelError,
    ParamTable,
    StateSpaceModel,
    extract_affine_output,
    extract_affine_step,
    first_nonlinear_node,
    validate_model,
)


def static(a):
    return ParamTable((np.asarray(a, dtype=float),), static=True)


def linear_model(A, B, C, horizon=1, bias=None, activation=None):
    """x[k+1] = act(A x + B u (+ bias)), y = C x."""
    A, B, C = np.asarray(A, float), np.asarray(B, float), np.asarray(C, float)
    M, L = B.shape
    P = C.shape[0]
    ub = GraphBuilder()
    s = ub.vec_add(ub.matvec("A", ub.state_in()), ub.matvec("B", ub.input()))
    params = {"A": static(A), "B": static(B), "C": static(C)}
    if bias is not None:
        params["b"] = static(bias)
        s = ub.vec_add(s, ub.const("b"))
    if activation is not None:
        s = ub.activation(activation, s)
    ob = GraphBuilder()
    y = ob.matvec("C", ob.state_in())
    return StateSpaceModel(M, L, P, horizon, np.zeros(M),
                           ub.build([s]), ob.build([y]), params)


RNG = np.random.default_rng


class TestValidate:
    def test_well_formed_model_has_no_diagnostics(self, small_model):
        assert validate_model(small_model) == []

    def test_hand_built_linear_model_is_clean(self):
        m = linear_model(np.eye(3), np.ones((3, 2)), np.ones((1, 3)))
        assert validate_model(m) == []

    def test_update_graph_width_mismatch_is_reported(self):
        # Update produces M-1 wires: the state row count of A is short.
        m = linear_model(RNG(0).normal(size=(2, 3)), np.ones((2, 2)),
                         np.ones((1, 3)))
        m = StateSpaceModel(3, 2, 1, 1, np.zeros(3),
                            m.update_graph, m.output_graph, m.params)
        diags = validate_model(m)
        assert any("produces 2 wires, expected 3" in d for d in diags)

    def test_combinational_cycle_is_reported(self):
        g = DataflowGraph(
            (GNode("state_in"),
             GNode("vec_add", (2, 0)),
             GNode("scalar_add", (1,), 0.0)),
            (1,))
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, g, {})
        diags = validate_model(m)
        assert any("combinational cycle through node" in d for d in diags)

    def test_cycle_through_delay_is_legal(self):
        b = GraphBuilder()
        xs = b.state_in()
        # forward reference closed by a delay: v = x + delay(v)
        g = DataflowGraph(
            (GNode("state_in"), GNode("vec_add", (2, 0)), GNode("delay", (1,))),
            (1,))
        ob = GraphBuilder()
        og = ob.build([ob.matvec("C", ob.state_in())])
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, og,
                            {"C": static(np.eye(2))})
        assert xs == 0
        assert validate_model(m) == []

    def test_unknown_table_is_reported(self):
        b = GraphBuilder()
        g = b.build([b.matvec("missing", b.state_in())])
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, g, {})
        diags = validate_model(m)
        assert any("unknown table 'missing'" in d for d in diags)

    def test_unknown_op_is_reported(self):
        g = DataflowGraph((GNode("neg", ()),), (0,))
        m = StateSpaceModel(1, 1, 1, 1, np.zeros(1), g, g, {})
        assert any("unknown op" in d for d in validate_model(m))

    def test_wrong_arity_is_reported(self):
        g = DataflowGraph((GNode("state_in"), GNode("vec_add", (0,))), (1,))
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, g, {})
        assert any("expects 2 args, has 1" in d for d in validate_model(m))

    def test_matvec_column_mismatch_is_reported(self):
        b = GraphBuilder()
        g = b.build([b.matvec("A", b.state_in())])
        m = StateSpaceModel(3, 1, 2, 1, np.zeros(3), g, g,
                            {"A": static(np.ones((2, 2)))})
        diags = validate_model(m)
        assert any("has 2 columns, argument is 3 wide" in d for d in diags)

    def test_unknown_activation_kind_is_reported(self):
        b = GraphBuilder()
        g = b.build([b.activation("relu", b.state_in())])
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, g, {})
        assert any("unknown activation 'relu'" in d for d in validate_model(m))

    def test_dangling_node_is_reported(self):
        b = GraphBuilder()
        xs = b.state_in()
        b.input()  # never consumed
        g = b.build([xs])
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, g, {})
        assert any("dangling node 1" in d for d in validate_model(m))

    def test_output_id_out_of_range(self):
        g = DataflowGraph((GNode("state_in"),), (5,))
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, g, {})
        assert any("output id 5 out of range" in d for d in validate_model(m))

    def test_empty_graph_is_reported(self):
        g = DataflowGraph((), ())
        m = StateSpaceModel(1, 1, 1, 1, np.zeros(1), g, g, {})
        diags = validate_model(m)
        assert any("update_graph: empty graph" in d for d in diags)
        assert any("output_graph: empty graph" in d for d in diags)

    def test_nonpositive_dims_are_reported(self):
        g = DataflowGraph((GNode("state_in"),), (0,))
        m = StateSpaceModel(0, 1, 1, 1, np.zeros(0), g, g, {})
        assert validate_model(m) == ["state_dim must be >= 1, got 0"]

    def test_initial_state_shape_is_checked(self):
        m = linear_model(np.eye(2), np.ones((2, 1)), np.eye(2))
        bad = StateSpaceModel(2, 1, 2, 1, np.zeros(3),
                              m.update_graph, m.output_graph, m.params)
        assert any("initial_state has shape" in d for d in validate_model(bad))

    def test_short_time_varying_table_is_reported(self):
        vals = tuple(np.eye(2) for _ in range(2))
        b = GraphBuilder()
        g = b.build([b.matvec("A", b.state_in())])
        ob = GraphBuilder()
        og = ob.build([ob.state_in()])
        m = StateSpaceModel(2, 1, 2, 4, np.zeros(2), g, og,
                            {"A": ParamTable(vals)})
        diags = validate_model(m)
        assert any("has 2 entries, horizon is 4" in d for d in diags)


class TestParamTable:
    def test_static_table_ignores_step(self):
        t = static([1.0, 2.0])
        for k in range(5):
            assert np.array_equal(t.at(k), [1.0, 2.0])

    def test_time_varying_table_indexes_by_step(self):
        t = ParamTable((np.array([0.0]), np.array([1.0]), np.array([2.0])))
        assert len(t) == 3
        assert t.at(2) == np.array([2.0])


class TestAffineExtraction:
    def test_step_coefficients_match_tables(self):
        rng = RNG(3)
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 2))
        b = rng.normal(size=3)
        m = linear_model(A, B, np.ones((1, 3)), bias=b, activation="tanh")
        step = extract_affine_step(m)
        assert step.activation == "tanh"
        np.testing.assert_array_equal(step.state_mats[0], A)
        np.testing.assert_array_equal(step.input_mats[0], B)
        np.testing.assert_array_equal(step.biases[0], b)

    def test_time_varying_tables_extract_per_step(self):
        mats = tuple(np.eye(2) * (k + 1) for k in range(3))
        b = GraphBuilder()
        g = b.build([b.matvec("A", b.state_in())])
        ob = GraphBuilder()
        og = ob.build([ob.state_in()])
        m = StateSpaceModel(2, 1, 2, 3, np.zeros(2), g, og,
                            {"A": ParamTable(mats)})
        step = extract_affine_step(m)
        for k in range(3):
            np.testing.assert_array_equal(step.state_mats[k], mats[k])

    def test_scalar_ops_fold_into_coefficients(self):
        b = GraphBuilder()
        v = b.matvec("A", b.state_in())
        v = b.scalar_mul(v, 2.0)
        v = b.scalar_add(v, 0.5)
        g = b.build([v])
        ob = GraphBuilder()
        og = ob.build([ob.state_in()])
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, og, {"A": static(A)})
        step = extract_affine_step(m)
        np.testing.assert_array_equal(step.state_mats[0], 2.0 * A)
        np.testing.assert_array_equal(step.biases[0], [0.5, 0.5])

    def test_output_coefficients_match_tables(self, small_model):
        out = extract_affine_output(small_model)
        assert out.state_mat.shape == (2, 4)
        assert out.input_mat.shape == (2, 3)
        np.testing.assert_array_equal(out.bias, np.zeros(2))

    def test_mid_graph_nonlinearity_is_rejected(self):
        b = GraphBuilder()
        v = b.activation("tanh", b.state_in())
        g = b.build([b.matvec("A", v)])
        ob = GraphBuilder()
        og = ob.build([ob.state_in()])
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, og,
                            {"A": static(np.eye(2))})
        with pytest.raises(ModelError, match="node 1 .* not in the final"):
            extract_affine_step(m)

    def test_trailing_identity_activation_is_affine(self):
        m = linear_model(np.eye(2), np.ones((2, 1)), np.eye(2),
                         activation="identity")
        step = extract_affine_step(m)
        assert step.activation == "identity"

    def test_delay_is_rejected(self):
        b = GraphBuilder()
        g = b.build([b.delay(b.state_in())])
        ob = GraphBuilder()
        og = ob.build([ob.state_in()])
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, og, {})
        with pytest.raises(ModelError, match="delay"):
            extract_affine_step(m)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), m_dim=st.integers(1, 5),
           l_dim=st.integers(1, 4))
    def test_extraction_inverts_construction(self, seed, m_dim, l_dim):
        """Extracted coefficients reproduce graph evaluation exactly."""
        rng = RNG(seed)
        A = rng.normal(size=(m_dim, m_dim))
        B = rng.normal(size=(m_dim, l_dim))
        bias = rng.normal(size=m_dim)
        m = linear_model(A, B, np.ones((1, m_dim)), bias=bias)
        step = extract_affine_step(m)
        x = rng.normal(size=m_dim)
        u = rng.normal(size=l_dim)
        direct = A @ x + B @ u + bias
        via = step.state_mats[0] @ x + step.input_mats[0] @ u + step.biases[0]
        np.testing.assert_allclose(via, direct, rtol=0, atol=1e-12)


class TestFirstNonlinearNode:
    def test_pure_linear_update_has_none(self):
        b = GraphBuilder()
        g = b.build([b.matvec("A", b.state_in())])
        ob = GraphBuilder()
        og = ob.build([ob.state_in()])
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, og,
                            {"A": static(np.eye(2))})
        assert first_nonlinear_node(m) is None

    def test_activation_is_located(self, small_model):
        hit = first_nonlinear_node(small_model)
        assert hit is not None
        node, why = hit
        assert small_model.update_graph.nodes[node].op == "activation"
        assert why == "activation 'tanh'"

    def test_input_contribution_is_flagged(self):
        m = linear_model(np.eye(2), np.ones((2, 1)), np.eye(2))
        hit = first_nonlinear_node(m)
        assert hit is not None
        assert hit[1] == "input contribution"

    def test_zero_input_matrix_does_not_flag(self):
        m = linear_model(np.eye(2), np.zeros((2, 1)), np.eye(2))
        assert first_nonlinear_node(m) is None

    def test_bias_is_flagged(self):
        b = GraphBuilder()
        g = b.build([b.vec_add(b.matvec("A", b.state_in()), b.const("b"))])
        ob = GraphBuilder()
        og = ob.build([ob.state_in()])
        m = StateSpaceModel(2, 1, 2, 1, np.zeros(2), g, og,
                            {"A": static(np.eye(2)),
                             "b": static(np.array([0.0, 0.5]))})
        hit = first_nonlinear_node(m)
        assert hit is not None
        assert hit[1] == "additive constant"

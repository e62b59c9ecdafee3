"""Optimization passes: fusion, multiplier pipelining, retiming, C-slow."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ss2rtl import (
    DelayModel,
    FixedPointFormat,
    GraphBuilder,
    ModelError,
    NetlistBuilder,
    NetlistError,
    ParamTable,
    RtlSim,
    StateSpaceModel,
    c_slow,
    critical_path,
    drive_streams,
    fuse_state_transition,
    latency,
    pipeline_multiplier,
    random_inputs,
    retime,
    simulate_reference,
)
from ss2rtl.passes import FUSED_TABLE
from ss2rtl.rtlsim import run as run_cycles

from conftest import (random_pipeline_netlist, random_stimulus,
                      reg_path_extremes)

Q = FixedPointFormat(16, 12)


def pure_linear_model(mats, out=None):
    """x[k+1] = A[k] x[k], y = C x. Input port is present but unused."""
    M = mats[0].shape[0]
    b = GraphBuilder()
    g = b.build([b.matvec("A", b.state_in())])
    ob = GraphBuilder()
    og = ob.build([ob.matvec("C", ob.state_in())])
    C = np.eye(M) if out is None else out
    return StateSpaceModel(
        M, 1, C.shape[0], len(mats), np.ones(M),
        g, og,
        {"A": ParamTable(tuple(np.asarray(a, float) for a in mats)),
         "C": ParamTable((np.asarray(C, float),), static=True)})


def rot90():
    return np.array([[0.0, -1.0], [1.0, 0.0]])


class TestFusion:
    def test_fused_tables_are_matrix_products(self):
        rng = np.random.default_rng(8)
        mats = [rng.normal(size=(3, 3)) for _ in range(4)]
        fused = fuse_state_transition(pure_linear_model(mats), 1)
        assert fused.horizon == 2
        t = fused.params[FUSED_TABLE]
        np.testing.assert_allclose(t.at(0), mats[1] @ mats[0], atol=1e-14)
        np.testing.assert_allclose(t.at(1), mats[3] @ mats[2], atol=1e-14)

    def test_identity_steps_fuse_to_identity(self):
        m = pure_linear_model([np.eye(2)] * 4)
        fused = fuse_state_transition(m, 3)
        np.testing.assert_array_equal(fused.params[FUSED_TABLE].at(0),
                                      np.eye(2))

    def test_quarter_turns_fuse_to_a_full_turn(self):
        m = pure_linear_model([rot90()] * 4)
        fused = fuse_state_transition(m, 3)
        assert fused.horizon == 1
        np.testing.assert_allclose(fused.params[FUSED_TABLE].at(0),
                                   np.eye(2), atol=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), j=st.integers(1, 5),
           runs=st.integers(1, 3), m_dim=st.integers(1, 6))
    def test_fusion_preserves_the_output_map(self, seed, j, runs, m_dim):
        rng = np.random.default_rng(seed)
        horizon = (j + 1) * runs
        # keep spectral radius moderate so outputs stay well-scaled
        mats = [rng.normal(size=(m_dim, m_dim)) / np.sqrt(m_dim)
                for _ in range(horizon)]
        m = pure_linear_model(mats, out=rng.normal(size=(2, m_dim)))
        fused = fuse_state_transition(m, j)
        u = np.zeros(1)
        ref = simulate_reference(m, u)
        got = simulate_reference(fused, u)
        scale = max(1.0, float(np.max(np.abs(ref))))
        assert np.max(np.abs(ref - got)) / scale < 1e-12

    def test_depth_zero_is_the_identity_pass(self):
        m = pure_linear_model([np.eye(2)] * 4)
        assert fuse_state_transition(m, 0) is m

    def test_run_length_must_tile_the_horizon(self):
        m = pure_linear_model([np.eye(2)] * 4)
        with pytest.raises(ModelError, match="3 does not divide horizon 4"):
            fuse_state_transition(m, 2)

    def test_activation_blocks_fusion_and_is_named(self, small_model):
        with pytest.raises(ModelError, match=r"node \d+: activation 'tanh'"):
            fuse_state_transition(small_model, 1)

    def test_input_contribution_blocks_fusion(self):
        b = GraphBuilder()
        s = b.vec_add(b.matvec("A", b.state_in()), b.matvec("B", b.input()))
        g = b.build([s])
        ob = GraphBuilder()
        og = ob.build([ob.state_in()])
        tbl = lambda a: ParamTable((np.asarray(a, float),), static=True)
        m = StateSpaceModel(2, 1, 2, 2, np.zeros(2), g, og,
                            {"A": tbl(np.eye(2)), "B": tbl(np.ones((2, 1)))})
        with pytest.raises(ModelError, match="input contribution"):
            fuse_state_transition(m, 1)

    def test_negative_depth_is_rejected(self):
        m = pure_linear_model([np.eye(2)] * 2)
        with pytest.raises(ModelError, match="must be >= 0"):
            fuse_state_transition(m, -1)

    def test_refusing_a_fused_model_is_rejected(self):
        m = pure_linear_model([np.eye(2)] * 4)
        fused = fuse_state_transition(m, 1)
        with pytest.raises(ModelError, match="already carries"):
            fuse_state_transition(fused, 1)


def mul_chain():
    """u*u -> +bias chain with the product on the output path."""
    b = NetlistBuilder()
    u = b.port("u", Q)
    m = b.add("mul", (u, u), FixedPointFormat(32, 24), name="m")
    s = b.add("add", (m, m), FixedPointFormat(33, 24), name="s")
    b.output("y", s)
    return b.build(), m


class TestPipelineMultiplier:
    def test_zero_stages_is_the_identity_pass(self):
        net, m = mul_chain()
        assert pipeline_multiplier(net, m, 0) is net

    def test_stages_add_registers_and_delay(self):
        net, m = mul_chain()
        piped = pipeline_multiplier(net, m, 2)
        assert piped.count("reg") == net.count("reg") + 2
        stim = [{"u": 3}, {"u": 0}, {"u": 0}, {"u": 0}]
        before = [o["y"] for o in run_cycles(net, stim)]
        after = [o["y"] for o in run_cycles(piped, stim)]
        assert before == [18, 0, 0, 0]
        assert after == [0, 0, 18, 0]   # same value, two cycles later

    def test_fanout_is_rewired_to_the_last_stage(self):
        net, m = mul_chain()
        piped = pipeline_multiplier(net, m, 3)
        last = len(piped.nodes) - 1
        consumers = [n for n in piped.nodes if last in n.args]
        assert piped.nodes[last].kind == "reg"
        # the add now reads the final stage on both operands
        assert any(n.kind == "add" and n.args == (last, last)
                   for n in piped.nodes)

    def test_only_multipliers_can_be_pipelined(self):
        net, _ = mul_chain()
        add_id = next(i for i, n in enumerate(net.nodes) if n.kind == "add")
        with pytest.raises(NetlistError, match="is a add, not a multiplier"):
            pipeline_multiplier(net, add_id, 1)

    def test_bad_node_id_and_stage_count(self):
        net, m = mul_chain()
        with pytest.raises(NetlistError, match="out of range"):
            pipeline_multiplier(net, 99, 1)
        with pytest.raises(NetlistError, match="stages must be >= 0"):
            pipeline_multiplier(net, m, -1)

    def test_metadata_records_the_depth(self, small_netlist):
        net, _ = small_netlist
        mid = next(i for i, n in enumerate(net.nodes) if n.kind == "mul")
        piped = pipeline_multiplier(net, mid, 2)
        assert piped.meta.mul_pipeline == 2


def unbalanced_chain():
    """mul feeding two adds with the lone register after the first add;
    pulling it back over the add shortens the longest segment."""
    wide = FixedPointFormat(64, 24)
    b = NetlistBuilder()
    a = b.port("a", Q)
    c = b.port("b", Q)
    m = b.add("mul", (a, c), wide, name="m")
    s1 = b.add("add", (m, m), wide, name="s1")
    r = b.add("reg", (s1,), wide, payload=0, name="r")
    s2 = b.add("add", (r, r), wide, name="s2")
    b.output("y", s2)
    return b.build()


class TestRetime:
    def test_moves_a_register_to_balance_the_chain(self):
        net = unbalanced_chain()
        assert critical_path(net) == 4   # mul(3) + add(1) before the register
        out = retime(net)
        assert critical_path(out) == 3   # register now follows the mul
        assert out.count("reg") == 2     # one per operand edge of the add

    def test_path_weights_are_preserved(self):
        net = unbalanced_chain()
        assert reg_path_extremes(retime(net)) == reg_path_extremes(net)

    def test_cycle_behavior_is_preserved_from_reset(self):
        net = unbalanced_chain()
        out = retime(net)
        stim = random_stimulus(net, 40, seed=1)
        assert run_cycles(net, stim) == run_cycles(out, stim)

    def test_balanced_pipeline_is_returned_unchanged(self):
        b = NetlistBuilder()
        u = b.port("u", Q)
        m = b.add("mul", (u, u), Q, name="m")
        r1 = b.add("reg", (m,), Q, payload=0)
        s = b.add("add", (r1, r1), Q)
        r2 = b.add("reg", (s,), Q, payload=0)
        b.output("y", r2)
        net = b.build()
        assert retime(net) is net

    def test_elaborated_design_is_a_fixed_point(self, small_netlist):
        # every register closes a hold loop, so nothing may move
        net, _ = small_netlist
        assert retime(net) is net

    def test_never_increases_the_critical_path(self):
        unit = DelayModel({k: 1 for k in ("mul", "cmul", "add", "rom",
                                          "lutaddr", "mux", "requant", "shl",
                                          "const", "ctrl", "fsm_next")}
                          | {"in": 0, "reg": 0})
        for seed in range(8):
            net = random_pipeline_netlist(seed, depth=6, width=3)
            out = retime(net, unit)
            assert critical_path(out, unit) <= critical_path(net, unit)
            assert reg_path_extremes(out) == reg_path_extremes(net)
            stim = random_stimulus(net, 30, seed=seed + 100)
            assert run_cycles(net, stim) == run_cycles(out, stim)


class TestCSlow:
    def test_factor_one_is_the_identity_pass(self, small_netlist):
        net, _ = small_netlist
        assert c_slow(net, 1) is net

    def test_factor_below_one_is_rejected(self, small_netlist):
        net, _ = small_netlist
        with pytest.raises(NetlistError, match="factor must be >= 1"):
            c_slow(net, 0)

    def test_register_count_scales_exactly(self, small_netlist):
        net, _ = small_netlist
        regs = net.count("reg")
        assert c_slow(net, 2).count("reg") == 2 * regs
        assert c_slow(net, 3).count("reg") == 3 * regs

    def test_latency_scales_with_the_factor(self, small_netlist):
        net, _ = small_netlist
        assert latency(c_slow(net, 2)) == 28
        assert latency(c_slow(net, 3)) == 42

    def test_two_streams_compute_independently(self, small_netlist):
        net, fixed = small_netlist
        doubled = c_slow(net, 2)
        ins_a = [fixed.quantize_input(u) for u in random_inputs(3, 6, seed=1)]
        ins_b = [fixed.quantize_input(u) for u in random_inputs(3, 6, seed=2)]
        res = drive_streams(doubled, {0: ins_a, 1: ins_b})
        assert [list(o) for o in res[0].outputs] == [fixed.run_raw(u)
                                                     for u in ins_a]
        assert [list(o) for o in res[1].outputs] == [fixed.run_raw(u)
                                                     for u in ins_b]
        assert res[0].latencies == [28] * 6
        assert res[1].latencies == [28] * 6

    def test_chain_registers_copy_the_reset_value(self):
        b = NetlistBuilder()
        u = b.port("u", Q)
        r = b.add("reg", (u,), Q, payload=-3, name="r")
        b.output("y", r)
        sim = RtlSim(c_slow(b.build(), 2))
        assert sim.step({"u": 9})["y"] == -3
        assert sim.step({})["y"] == -3
        assert sim.step({})["y"] == 9

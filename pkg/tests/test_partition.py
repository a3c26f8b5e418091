import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import layer, random_profile_chain
from oracles import brute_force_partition

from mmplan.layout import Layout, LayoutError, SimStage, chain_layout, inflight_microbatches
from mmplan.partition import PartitionError, estimate_memory, partition_stages


def simple_stage(param=1000, trainable=0, act=100):
    from mmplan.partition import Stage

    return Stage(
        layer_range=(0, 1),
        forward_ms=1.0,
        backward_ms=1.0,
        param_bytes=param,
        trainable_param_bytes=trainable,
        grad_bytes=trainable,
        optimizer_bytes=2 * trainable,
        activation_bytes_per_microbatch=act,
    )


class TestPartition:
    def test_symmetric_split(self):
        layers = [layer(1, 1, 1)] * 4
        plan = partition_stages(layers, [False] * 4, [True] * 4, 2, 1)
        assert plan.boundaries == (2,)
        assert [s.time_ms for s in plan.stages] == [6.0, 6.0]

    def test_frozen_dominant_layer(self):
        # all frozen, unreachable: backward contributes nothing, the heavy
        # forward layer gets its own stage
        layers = [layer(f, 9, 9) for f in (1, 1, 1, 5)]
        plan = partition_stages(layers, [True] * 4, [False] * 4, 2, 1)
        assert plan.boundaries == (3,)
        assert plan.max_stage_time_ms == 5.0

    def test_frozen_unaware_moves_the_boundary(self):
        layers = [layer(f, 5, 5) for f in (1, 1, 1, 5)]
        frozen = [True] * 4
        p = [False] * 4
        aware = partition_stages(layers, frozen, p, 2, 1)
        unaware = partition_stages(layers, frozen, p, 2, 1, frozen_unaware=True)
        assert aware.boundaries == (3,)
        # believed stage times [11, 11, 11, 15]: balance cuts earlier
        assert unaware.boundaries != aware.boundaries
        assert unaware.boundaries == (2,)

    def test_too_many_stages(self):
        with pytest.raises(PartitionError, match="exceeds layer count"):
            partition_stages([layer(1, 1, 1)], [False], [True], 2, 1)

    def test_unknown_tp(self):
        with pytest.raises(Exception, match="tp"):
            partition_stages([layer(1, 1, 1)], [False], [True], 1, 4)

    def test_respects_tp_scaling(self):
        layers = [layer(4, 4, 4, tp_degrees=(1, 2))] * 2
        plan = partition_stages(layers, [False] * 2, [True] * 2, 2, 2)
        assert plan.stages[0].forward_ms == 2.0
        assert plan.stages[0].backward_ms == 4.0

    def test_byte_accounting_ignores_unaware_flag(self):
        layers = [layer(1, 1, 1, param_bytes=100), layer(1, 1, 1, param_bytes=300)]
        frozen = [True, False]
        for flag in (False, True):
            plan = partition_stages(layers, frozen, [True, True], 1, 1,
                                    frozen_unaware=flag)
            stage = plan.stages[0]
            assert stage.param_bytes == 400
            assert stage.trainable_param_bytes == 300
            assert stage.grad_bytes == 300
            assert stage.optimizer_bytes == 600

    @settings(max_examples=120, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_matches_brute_force(self, seed):
        rng = random.Random(seed)
        n = rng.randint(1, 12)
        stages = rng.randint(1, min(4, n))
        layers, frozen, p = random_profile_chain(rng, n)
        plan = partition_stages(layers, frozen, p, stages, 1)
        times = [
            lyr.forward_time[1]
            + (0 if f else lyr.bwd_weight_time[1])
            + (lyr.bwd_data_time[1] if pp else 0)
            for lyr, f, pp in zip(layers, frozen, p)
        ]
        best_val, best_cuts = brute_force_partition(times, stages)
        assert plan.boundaries == best_cuts
        got_val = max(
            sum(times[lo:hi]) for lo, hi in (s.layer_range for s in plan.stages)
        )
        assert got_val == best_val

    def test_uniform_layers_divide_evenly(self):
        layers = [layer(2, 1, 1)] * 8
        plan = partition_stages(layers, [False] * 8, [True] * 8, 4, 1)
        assert all(s.time_ms == 8.0 for s in plan.stages)


class TestInflight:
    def test_chain_of_four(self):
        stages = [SimStage(f"s{i}", i, 1, 1) for i in range(4)]
        assert list(inflight_microbatches(chain_layout(stages)).values()) == [4, 3, 2, 1]

    def test_single_stage(self):
        assert inflight_microbatches(chain_layout([SimStage("s", 0, 1, 1)])) == {"s": 1}

    def test_two_encoder_graph(self):
        a = tuple(SimStage(f"a{i}", 10 + i, 1, 1) for i in range(2))
        b = (SimStage("b0", 20, 1, 1),)
        trunk = tuple(SimStage(f"l{i}", 30 + i, 1, 1) for i in range(2))
        k = inflight_microbatches(Layout(chains=(a, b), trunk=trunk))
        assert [k["a0"], k["a1"]] == [4, 3]
        assert k["b0"] == 3
        assert [k["l0"], k["l1"]] == [2, 1]

    def test_chain_strictly_decreasing(self):
        for n in (1, 3, 7):
            stages = [SimStage(f"s{i}", i, 1, 1) for i in range(n)]
            values = list(inflight_microbatches(chain_layout(stages)).values())
            assert values == list(range(n, 0, -1))

    def test_empty_layout_rejected(self):
        with pytest.raises(LayoutError):
            inflight_microbatches(Layout(chains=(), trunk=()))

    def test_chains_without_trunk_rejected(self):
        with pytest.raises(LayoutError, match="trunk"):
            inflight_microbatches(
                Layout(chains=((SimStage("a", 0, 1, 1),),), trunk=())
            )


class TestMemory:
    def test_fully_frozen_stage_is_params_only(self):
        est = estimate_memory(simple_stage(param=1000, trainable=0), 1)
        assert est.model_bytes == 1000

    def test_adam_style_multiplier(self):
        est = estimate_memory(simple_stage(param=1000, trainable=1000), 1,
                              optimizer_multiplier=2.0)
        assert est.model_bytes == 4000

    def test_data_bytes_scale_with_inflight(self):
        est = estimate_memory(simple_stage(act=100 * 1024 * 1024), 3)
        assert est.data_bytes == 300 * 1024 * 1024

    def test_k_if_must_be_positive(self):
        with pytest.raises(PartitionError):
            estimate_memory(simple_stage(), 0)

    @settings(max_examples=40, deadline=None)
    @given(k=st.integers(1, 64), act=st.integers(0, 1 << 24))
    def test_linear_in_k_if(self, k, act):
        stage = simple_stage(act=act)
        assert estimate_memory(stage, k).data_bytes == k * act

    def test_freezing_never_increases_model_bytes(self):
        frozen = estimate_memory(simple_stage(param=1000, trainable=0), 2)
        trainable = estimate_memory(simple_stage(param=1000, trainable=1000), 2)
        assert frozen.model_bytes <= trainable.model_bytes

import math

import numpy as np
import pytest

from wtanet.errors import ConfigurationError
from wtanet.network import Network, pack_sensory_steps, td_factor
from wtanet.params import CircuitParams, StdpParams, TdPolicy
from wtanet.topology import (
    CircuitSpec,
    NetworkTopology,
    SensoryPop,
    UpEdge,
    build_hierarchical,
)


def chain_topology(pop_size=4, K1=2, K2=3, top_down=False):
    """One sensory population -> circuit c1 -> circuit c2."""
    from wtanet.topology import DownEdge
    down = (DownEdge("c2", ("c1",)),) if top_down else ()
    return NetworkTopology(
        (SensoryPop("s", pop_size),),
        (CircuitSpec("c1", K1), CircuitSpec("c2", K2)),
        (UpEdge("c1", ("s",)), UpEdge("c2", ("c1",))),
        down,
    )


def make_net(topo, seed=0, policy=None, **params):
    return Network(
        topo,
        CircuitParams(**params) if params else CircuitParams(),
        StdpParams(),
        policy or TdPolicy(),
        init_rng=np.random.default_rng(seed),
        sampling_rng=np.random.default_rng(seed + 1000),
    )


def bernoulli_steps(topo, T, p, seed):
    rng = np.random.default_rng(seed)
    steps = []
    for _ in range(T):
        steps.append({
            pop.id: np.nonzero(rng.random(pop.size) < p)[0]
            for pop in topo.populations
        })
    return steps


class TestTdFactor:
    def test_off_is_one(self):
        assert td_factor(TdPolicy(mode="off"), 17) == 1.0

    def test_constant(self):
        assert td_factor(TdPolicy(mode="constant", factor=2.0), 0) == 2.0

    def test_adaptive_cap_interpretation(self):
        pol = TdPolicy(mode="adaptive")
        assert td_factor(pol, 0) == pytest.approx(1.5)
        assert td_factor(pol, 1) == pytest.approx(1.8)
        # 1.5 + 0.3 * 4^1.3 = 3.317... exceeds the cap
        assert td_factor(pol, 4) == pytest.approx(3.0)
        assert td_factor(pol, 50) == pytest.approx(3.0)

    def test_adaptive_literal_max_form(self):
        pol = TdPolicy(mode="adaptive", phi_literal_max=True)
        assert td_factor(pol, 0) == pytest.approx(3.0)
        assert td_factor(pol, 4) == pytest.approx(1.5 + 0.3 * 4.0 ** 1.3)

    def test_negative_s_rejected(self):
        with pytest.raises(ConfigurationError):
            td_factor(TdPolicy(), -1)


class TestStepContracts:
    def test_silent_input_fresh_network_stays_silent(self):
        net = make_net(chain_topology(), seed=3, K=2)
        net.reset_for_stimulus()
        total = 0
        for _ in range(500):
            out = net.step({})
            total += sum(v.size for v in out.values())
        assert total == 0

    def test_single_layer1_spike_reaches_layer2_exactly_one_step_later(self):
        topo = chain_topology(pop_size=4, K1=2, K2=3)
        net = make_net(topo, seed=1)
        net.state.wup_flat[:] = 0.0  # every weight at the ceiling
        net.reset_for_stimulus()
        out0 = net.step({"s": [0, 1, 2, 3]})
        # 4 coincident ceiling-weight spikes drive c1 to mu_max: fires surely
        assert out0["c1"].size == 2
        assert out0["c2"].size == 0          # never at t, sensory only feeds c1
        assert np.all(net.state.mu_of("c2") == 0.0)
        out1 = net.step({})
        assert out1["c2"].size == 3          # c1 spikes arrive at t+1
        assert np.all(net.state.mu_of("c1") == 0.0)  # lateral reset after firing

    def test_reset_completeness_and_trace_clearing(self):
        topo = chain_topology()
        net = make_net(topo, seed=2)
        net.state.wup_flat[:] = 0.0
        net.reset_for_stimulus()
        net.step({"s": [0, 1, 2, 3]})   # c1 fires
        net.step({"s": [0]})            # c1 resets this step; arrival dropped
        i = net.state.circ_index["c1"]
        lu = net.state.lastup_flat[net.state.lastup_off[i]:net.state.lastup_off[i + 1]]
        assert np.all(net.state.mu_of("c1") == 0.0)
        assert np.all(lu == -1)

    def test_determinism_bit_identical(self):
        topo = build_hierarchical(grid=(2, 2), K_h=4, K_o=5, image_shape=(4, 4),
                                  top_down=True)
        steps = bernoulli_steps(topo, 200, 0.3, seed=9)

        def run():
            net = make_net(topo, seed=5, policy=TdPolicy(mode="adaptive"), K=4)
            net.reset_for_stimulus()
            rasters = [net.step(s, learn=True) for s in steps]
            return rasters, net.state.wup_flat.copy(), net.state.wdn_flat.copy()

        r1, w1, d1 = run()
        r2, w2, d2 = run()
        assert all(
            all(np.array_equal(a[c], b[c]) for c in a)
            for a, b in zip(r1, r2)
        )
        assert np.array_equal(w1, w2)
        assert np.array_equal(d1, d2)

    def test_top_down_off_vs_on_layer1_identical_until_first_l2_spike(self):
        topo_off = chain_topology(pop_size=6, K1=3, K2=2, top_down=False)
        topo_on = chain_topology(pop_size=6, K1=3, K2=2, top_down=True)
        steps = bernoulli_steps(topo_off, 400, 0.5, seed=11)

        def run(topo, policy):
            net = Network(topo, CircuitParams(K=3), StdpParams(), policy,
                          init_rng=np.random.default_rng(21),
                          sampling_rng=np.random.default_rng(22))
            net.reset_for_stimulus()
            return [net.step(s, learn=False) for s in steps]

        r_off = run(topo_off, TdPolicy(mode="off"))
        r_on = run(topo_on, TdPolicy(mode="constant", factor=2.0))
        first_l2 = next(
            (t for t, r in enumerate(r_on) if r["c2"].size), len(steps)
        )
        assert first_l2 < len(steps)
        for t in range(first_l2 + 1):
            assert np.array_equal(r_off[t]["c1"], r_on[t]["c1"])

    def test_top_down_neutral_at_zero_factor(self):
        topo_off = chain_topology(pop_size=6, K1=3, K2=2, top_down=False)
        topo_on = chain_topology(pop_size=6, K1=3, K2=2, top_down=True)
        steps = bernoulli_steps(topo_off, 300, 0.5, seed=13)

        def run(topo, policy):
            net = Network(topo, CircuitParams(K=3), StdpParams(), policy,
                          init_rng=np.random.default_rng(31),
                          sampling_rng=np.random.default_rng(32))
            net.reset_for_stimulus()
            return [net.step(s, learn=False) for s in steps]

        # factor 0 is below TdPolicy's legal range as a config, so build the
        # policy object directly around the validator via constant factor ~0
        pol = TdPolicy(mode="constant", factor=1.0)
        object.__setattr__(pol, "factor", 0.0)
        r_off = run(topo_off, TdPolicy(mode="off"))
        r_zero = run(topo_on, pol)
        for a, b in zip(r_off, r_zero):
            assert np.array_equal(a["c1"], b["c1"])
            assert np.array_equal(a["c2"], b["c2"])


class TestPosterior:
    def test_fresh_network_uniform(self):
        net = make_net(chain_topology(), seed=4)
        net.reset_for_stimulus()
        post = net.joint_posterior()
        assert np.allclose(post["c1"], 0.5, atol=1e-12)
        assert np.allclose(post["c2"], 1.0 / 3.0, atol=1e-12)

    def test_per_circuit_normalization(self):
        net = make_net(chain_topology(), seed=4)
        net.reset_for_stimulus()
        for s in bernoulli_steps(net.topology, 50, 0.4, seed=14):
            net.step(s)
        for q in net.joint_posterior().values():
            assert abs(q.sum() - 1.0) < 1e-12

    def test_joint_is_product_of_marginals(self):
        # enumerate the joint over two small circuits: factorized by construction
        net = make_net(chain_topology(pop_size=4, K1=2, K2=3), seed=4)
        net.reset_for_stimulus()
        net.state.mu_of("c1")[:] = [1.0, 3.0]
        net.state.mu_of("c2")[:] = [0.5, 0.2, 2.0]
        post = net.joint_posterior()
        joint = np.outer(post["c1"], post["c2"])
        assert abs(joint.sum() - 1.0) < 1e-12
        for i in range(2):
            for j in range(3):
                assert joint[i, j] == pytest.approx(post["c1"][i] * post["c2"][j])


class TestHomeostasis:
    @pytest.mark.slow
    def test_output_rate_converges_to_target_band(self):
        topo = NetworkTopology(
            (SensoryPop("s", 50),),
            (CircuitSpec("c", 10),),
            (UpEdge("c", ("s",)),),
        )
        params = CircuitParams(K=10, target_rate=0.1)
        for seed, drive in ((0, 0.2), (1, 0.6)):
            net = Network(topo, params, StdpParams(), TdPolicy(),
                          init_rng=np.random.default_rng(seed),
                          sampling_rng=np.random.default_rng(seed + 50))
            net.reset_for_stimulus()
            steps = bernoulli_steps(topo, 20000, drive, seed=seed + 100)
            ptr, idx = pack_sensory_steps(
                net.state.pop_order, net.state.pop_sizes, steps)
            net.run_stimulus(ptr, idx, 20000, learn=False)
            ema = float(net.state.ema[0])
            assert 0.05 <= ema <= 0.2, f"ema {ema} outside [target/2, 2*target]"


class TestPackedLayout:
    def test_input_concatenation_order(self):
        topo = build_hierarchical(grid=(2, 2), K_h=3, K_o=4, image_shape=(4, 4))
        net = make_net(topo, seed=6, K=3)
        s = net.state
        i = s.circ_index["l2"]
        assert s.M[i] == 4 * 3
        # children appear in up-edge order with cumulative offsets
        entries = list(range(int(s.cptr[i]), int(s.cptr[i + 1])))
        offs = [int(s.coff[j]) for j in entries]
        assert offs == [0, 3, 6, 9]

    def test_policy_off_with_down_edges_rejected(self):
        topo = chain_topology(top_down=True)
        with pytest.raises(ConfigurationError):
            make_net(topo, seed=0, policy=TdPolicy(mode="off"))

    def test_weight_views_are_writable_views(self):
        net = make_net(chain_topology(), seed=7)
        w = net.w_up_of("c1") if hasattr(net, "w_up_of") else net.state.w_up_of("c1")
        w[0, 0] = -1.23
        assert net.state.wup_flat[0] == -1.23

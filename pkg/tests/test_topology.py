import pytest

from wtanet.errors import ConfigurationError, DataFormatError
from wtanet.topology import (
    CircuitSpec,
    DownEdge,
    ModelSpec,
    NetworkTopology,
    SensoryPop,
    UpEdge,
    build_from_model,
    build_hierarchical,
    build_integration,
    dumps_topology,
    extract_subnetwork,
    loads_topology,
)


class TestHierarchicalBuilder:
    def test_default_mnist_shape(self):
        t = build_hierarchical()
        assert len(t.circuits) == 17
        assert len(t.populations) == 16
        assert all(p.size == 98 for p in t.populations)
        l1_edges = [e for e in t.up_edges if e.target.startswith("l1")]
        assert len(l1_edges) == 16
        for e in l1_edges:
            assert (t.circuit_k()[e.target], t.input_dim(e.target)) == (38, 98)
        out = t.up_edge_of("l2")
        assert len(out.sources) == 16
        assert (t.circuit_k()["l2"], t.input_dim("l2")) == (99, 16 * 38)
        assert t.down_edges == ()

    def test_degenerate_single_tile(self):
        t = build_hierarchical(grid=(1, 1), K_h=1, K_o=1)
        assert len(t.circuits) == 2
        assert t.populations[0].size == 28 * 28 * 2
        assert t.input_dim(t.circuits[0].id) == 1568

    def test_indivisible_partition(self):
        with pytest.raises(ConfigurationError):
            build_hierarchical(grid=(5, 4))

    def test_top_down_mirrors_circuit_links(self):
        t = build_hierarchical(top_down=True)
        assert len(t.down_edges) == 1
        d = t.down_edges[0]
        assert d.parent == "l2"
        assert d.targets == t.up_edge_of("l2").sources


class TestIntegrationBuilder:
    def test_default_shapes(self):
        a = build_hierarchical(prefix="a.")
        b = build_hierarchical(prefix="b.")
        t = build_integration(a, b)
        assert len(t.circuits) == 35
        assert t.circuit_k()["top"] == 98
        assert t.input_dim("top") == 99 + 99
        assert t.up_edge_of("top").sources == ("a.l2", "b.l2")

    def test_single_neuron_integrator(self):
        a = build_hierarchical(grid=(1, 1), K_h=1, K_o=1, prefix="a.")
        b = build_hierarchical(grid=(1, 1), K_h=1, K_o=1, prefix="b.")
        t = build_integration(a, b, K_f=1)
        assert t.circuit_k()["top"] == 1

    def test_same_object_twice_rejected(self):
        a = build_hierarchical(prefix="a.")
        with pytest.raises(ConfigurationError):
            build_integration(a, a)

    def test_top_down_adds_only_top_mirror(self):
        a = build_hierarchical(prefix="a.", top_down=True)
        b = build_hierarchical(prefix="b.", top_down=True)
        t = build_integration(a, b, top_down=True)
        parents = sorted(d.parent for d in t.down_edges)
        assert parents == ["a.l2", "b.l2", "top"]


class TestModelBuilder:
    def test_three_variable_chain(self):
        spec = ModelSpec(
            variables=(("A", 3), ("B", 4), ("C", 2)),
            edges=(("A", "B"), ("B", "C")),
            bindings={"C": (("obs", 12),)},
        )
        t = build_from_model(spec, {"A": 3, "B": 4, "C": 2})
        assert [c.id for c in t.circuits] == ["A", "B", "C"]
        assert t.parent_of("C") == "B"
        assert t.parent_of("B") == "A"
        assert t.up_edge_of("C").sources == ("obs",)

    def test_single_variable_no_edges(self):
        spec = ModelSpec(variables=(("v", 1),))
        t = build_from_model(spec, {"v": 5})
        assert len(t.circuits) == 1
        assert t.up_edges == ()

    def test_cyclic_spec_rejected(self):
        spec = ModelSpec(
            variables=(("A", 2), ("B", 2)),
            edges=(("A", "B"), ("B", "A")),
        )
        with pytest.raises(ConfigurationError):
            build_from_model(spec, {"A": 2, "B": 2})

    def test_mnist_model_equals_hierarchical_builder(self):
        # the generative-model route and the direct builder must coincide
        n = 16
        l1 = [f"l1.{i:02d}" for i in range(n)]
        spec = ModelSpec(
            variables=tuple((v, 38) for v in l1) + (("l2", 99),),
            edges=tuple(("l2", v) for v in l1),
            bindings={v: ((f"cube.{i:02d}", 98),) for i, v in enumerate(l1)},
        )
        built = build_from_model(spec, {**{v: 38 for v in l1}, "l2": 99})
        assert built == build_hierarchical()
        built_td = build_from_model(spec, {**{v: 38 for v in l1}, "l2": 99},
                                    top_down=True)
        assert built_td == build_hierarchical(top_down=True)


class TestValidation:
    def test_fan_out_to_two_circuits_rejected(self):
        with pytest.raises(ConfigurationError):
            NetworkTopology(
                (SensoryPop("s", 4),),
                (CircuitSpec("a", 2), CircuitSpec("b", 2), CircuitSpec("c", 2)),
                (UpEdge("b", ("a",)), UpEdge("c", ("a", "s"))),
            )

    def test_cycle_rejected(self):
        with pytest.raises(ConfigurationError):
            NetworkTopology(
                (),
                (CircuitSpec("a", 2), CircuitSpec("b", 2)),
                (UpEdge("b", ("a",)), UpEdge("a", ("b",))),
            )

    def test_down_edge_must_mirror(self):
        with pytest.raises(ConfigurationError):
            NetworkTopology(
                (SensoryPop("s", 4),),
                (CircuitSpec("a", 2), CircuitSpec("b", 2)),
                (UpEdge("a", ("s",)), UpEdge("b", ("a",))),
                (DownEdge("a", ("b",)),),
            )

    def test_down_edge_into_sensory_only_edge_rejected(self):
        with pytest.raises(ConfigurationError):
            NetworkTopology(
                (SensoryPop("s", 4),),
                (CircuitSpec("a", 2),),
                (UpEdge("a", ("s",)),),
                (DownEdge("a", ()),),
            )

    def test_builders_pass_validator(self):
        # construction validates; re-validating is a no-op
        for t in (
            build_hierarchical(),
            build_hierarchical(top_down=True),
            build_integration(build_hierarchical(prefix="a."),
                              build_hierarchical(prefix="b."), top_down=False),
        ):
            t.validate()


class TestSerialization:
    def roundtrip(self, t):
        text = dumps_topology(t)
        again = loads_topology(text)
        assert dumps_topology(again) == text
        assert again == t

    def test_roundtrip_hierarchical(self):
        self.roundtrip(build_hierarchical())

    def test_roundtrip_integration_with_top_down(self):
        a = build_hierarchical(prefix="a.", top_down=True)
        b = build_hierarchical(prefix="b.", top_down=True)
        self.roundtrip(build_integration(a, b, top_down=True))

    def test_bad_header(self):
        with pytest.raises(DataFormatError):
            loads_topology("nope 9\n")

    def test_dimension_mismatch_detected(self):
        text = dumps_topology(build_hierarchical())
        text = text.replace("38x98", "38x99", 1)
        with pytest.raises(DataFormatError):
            loads_topology(text)

    def test_file_roundtrip(self, tmp_path):
        from wtanet.topology import load_topology, save_topology
        t = build_hierarchical(top_down=True)
        path = tmp_path / "topo.txt"
        save_topology(t, path)
        assert load_topology(path) == t
        save_topology(load_topology(path), path)
        assert load_topology(path) == t


class TestExtraction:
    def test_extract_hierarchy_from_integration(self):
        a = build_hierarchical(prefix="a.", top_down=True)
        b = build_hierarchical(prefix="b.", top_down=True)
        t = build_integration(a, b, top_down=True)
        sub = extract_subnetwork(t, "a.l2")
        assert sub == a

    def test_extract_unknown_circuit(self):
        with pytest.raises(ConfigurationError):
            extract_subnetwork(build_hierarchical(), "nope")

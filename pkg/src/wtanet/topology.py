"""Network topologies: circuits, sensory populations, and their wiring.

Bottom-up wiring is bundled per receiving circuit: each circuit has at most
one up-edge, an ordered list of source populations/circuits whose
concatenation forms its input space, with one weight matrix of shape
(K, total input size).  Up-edges form a forest (every circuit feeds forward
to at most one circuit).  Down-edges mirror the circuit-to-circuit part of an
up-edge, carrying separate weights of transposed shape; feedback never
reaches sensory populations.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigurationError, DataFormatError

_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


def _check_id(name: str):
    if not _ID_RE.match(name):
        raise ConfigurationError(f"bad identifier {name!r} (allowed: letters digits . _ -)")


@dataclass(frozen=True)
class SensoryPop:
    id: str
    size: int


@dataclass(frozen=True)
class CircuitSpec:
    id: str
    K: int


@dataclass(frozen=True)
class UpEdge:
    """Bundled feedforward edge: ordered sources -> one target circuit."""

    target: str
    sources: tuple


@dataclass(frozen=True)
class DownEdge:
    """Feedback from a parent circuit to the circuit children of its up-edge."""

    parent: str
    targets: tuple


@dataclass(frozen=True)
class NetworkTopology:
    populations: tuple
    circuits: tuple
    up_edges: tuple
    down_edges: tuple = ()

    def __post_init__(self):
        self.validate()

    # -- lookups ---------------------------------------------------------
    def pop_sizes(self) -> dict:
        return {p.id: p.size for p in self.populations}

    def circuit_k(self) -> dict:
        return {c.id: c.K for c in self.circuits}

    def source_size(self, name: str) -> int:
        sizes = self.pop_sizes()
        if name in sizes:
            return sizes[name]
        ks = self.circuit_k()
        if name in ks:
            return ks[name]
        raise ConfigurationError(f"unknown source {name!r}")

    def up_edge_of(self, circuit_id: str):
        for e in self.up_edges:
            if e.target == circuit_id:
                return e
        return None

    def input_dim(self, circuit_id: str) -> int:
        e = self.up_edge_of(circuit_id)
        return sum(self.source_size(s) for s in e.sources) if e else 0

    def parent_of(self, circuit_id: str):
        for e in self.up_edges:
            if circuit_id in e.sources:
                return e.target
        return None

    def circuit_children(self, circuit_id: str) -> tuple:
        e = self.up_edge_of(circuit_id)
        if e is None:
            return ()
        pops = set(self.pop_sizes())
        return tuple(s for s in e.sources if s not in pops)

    def has_down_edge(self, parent: str, child: str) -> bool:
        return any(d.parent == parent and child in d.targets for d in self.down_edges)

    def roots(self) -> tuple:
        fed_forward = {s for e in self.up_edges for s in e.sources}
        return tuple(c.id for c in self.circuits if c.id not in fed_forward)

    # -- validation ------------------------------------------------------
    def validate(self):
        ids = [p.id for p in self.populations] + [c.id for c in self.circuits]
        for name in ids:
            _check_id(name)
        if len(set(ids)) != len(ids):
            raise ConfigurationError("duplicate population/circuit ids")
        pop_ids = {p.id for p in self.populations}
        circ_ids = {c.id for c in self.circuits}
        for p in self.populations:
            if p.size < 1:
                raise ConfigurationError(f"population {p.id} size must be >= 1")
        for c in self.circuits:
            if c.K < 1:
                raise ConfigurationError(f"circuit {c.id} K must be >= 1")

        targets = [e.target for e in self.up_edges]
        if len(set(targets)) != len(targets):
            raise ConfigurationError("a circuit may have at most one up-edge")
        seen_sources = set()
        for e in self.up_edges:
            if e.target not in circ_ids:
                raise ConfigurationError(f"up-edge target {e.target!r} is not a circuit")
            if not e.sources:
                raise ConfigurationError(f"up-edge into {e.target} has no sources")
            for s in e.sources:
                if s not in pop_ids and s not in circ_ids:
                    raise ConfigurationError(f"up-edge source {s!r} unknown")
                if s in seen_sources:
                    raise ConfigurationError(
                        f"{s!r} feeds forward to more than one circuit"
                    )
                seen_sources.add(s)
            if e.target in e.sources:
                raise ConfigurationError(f"self-loop on {e.target}")

        # forest check: walking parents must terminate without revisits
        for c in self.circuits:
            seen = {c.id}
            cur = self.parent_of(c.id)
            while cur is not None:
                if cur in seen:
                    raise ConfigurationError("cycle among up-edges")
                seen.add(cur)
                cur = self.parent_of(cur)

        mirrors = {e.target: self.circuit_children(e.target) for e in self.up_edges}
        seen_parents = set()
        for d in self.down_edges:
            if d.parent in seen_parents:
                raise ConfigurationError(f"duplicate down-edge from {d.parent}")
            seen_parents.add(d.parent)
            if d.parent not in mirrors:
                raise ConfigurationError(f"down-edge parent {d.parent!r} has no up-edge")
            expected = mirrors[d.parent]
            if tuple(d.targets) != expected:
                raise ConfigurationError(
                    f"down-edge from {d.parent} must mirror the circuit sources "
                    f"{expected} of its up-edge"
                )
            if not d.targets:
                raise ConfigurationError(
                    f"down-edge from {d.parent} has no circuit children to reach"
                )


# -- builders -------------------------------------------------------------

def build_hierarchical(
    grid=(4, 4),
    K_h: int = 38,
    K_o: int = 99,
    image_shape=(28, 28),
    top_down: bool = False,
    prefix: str = "",
) -> NetworkTopology:
    """Two-layer network over a partitioned pair-coded image.

    The image is split into grid[0] x grid[1] tiles; each tile's 2-per-pixel
    sensory population drives one first-layer circuit with K_h neurons, and
    all first-layer circuits feed a single output circuit with K_o neurons.
    """
    rows, cols = image_shape
    gr, gc = grid
    if gr < 1 or gc < 1 or rows % gr or cols % gc:
        raise ConfigurationError(
            f"image {rows}x{cols} is not divisible by partition {gr}x{gc}"
        )
    tile = (rows // gr) * (cols // gc) * 2
    pops = []
    circuits = []
    up = []
    n = gr * gc
    width = max(2, len(str(n - 1)))
    l1_ids = []
    for i in range(n):
        pop_id = f"{prefix}cube.{i:0{width}d}"
        circ_id = f"{prefix}l1.{i:0{width}d}"
        pops.append(SensoryPop(pop_id, tile))
        circuits.append(CircuitSpec(circ_id, K_h))
        up.append(UpEdge(circ_id, (pop_id,)))
        l1_ids.append(circ_id)
    out_id = f"{prefix}l2"
    circuits.append(CircuitSpec(out_id, K_o))
    up.append(UpEdge(out_id, tuple(l1_ids)))
    down = (DownEdge(out_id, tuple(l1_ids)),) if top_down else ()
    return NetworkTopology(tuple(pops), tuple(circuits), tuple(up), down)


def build_integration(
    h_a: NetworkTopology,
    h_b: NetworkTopology,
    K_f: int = 98,
    top_down: bool = False,
    top_id: str = "top",
) -> NetworkTopology:
    """Join two disjoint networks under one integrating circuit with K_f neurons."""
    ids_a = {p.id for p in h_a.populations} | {c.id for c in h_a.circuits}
    ids_b = {p.id for p in h_b.populations} | {c.id for c in h_b.circuits}
    if ids_a & ids_b:
        raise ConfigurationError(
            f"sub-networks overlap on ids {sorted(ids_a & ids_b)[:5]}"
        )
    if top_id in ids_a | ids_b:
        raise ConfigurationError(f"top circuit id {top_id!r} already in use")
    roots_a, roots_b = h_a.roots(), h_b.roots()
    if len(roots_a) != 1 or len(roots_b) != 1:
        raise ConfigurationError("each sub-network must have exactly one root circuit")
    sources = (roots_a[0], roots_b[0])
    down = h_a.down_edges + h_b.down_edges
    if top_down:
        down = down + (DownEdge(top_id, sources),)
    return NetworkTopology(
        h_a.populations + h_b.populations,
        h_a.circuits + h_b.circuits + (CircuitSpec(top_id, K_f),),
        h_a.up_edges + h_b.up_edges + (UpEdge(top_id, sources),),
        down,
    )


@dataclass(frozen=True)
class ModelSpec:
    """Tree-structured generative model: hidden variables over observations.

    ``variables`` lists (name, cardinality) for the hidden causes; ``edges``
    are (parent, child) links in the generative direction; ``bindings`` map a
    leaf variable to the sensory populations encoding its observations, as a
    tuple of (population id, size).
    """

    variables: tuple
    edges: tuple = ()
    bindings: dict = field(default_factory=dict)

    def children_of(self, name: str) -> tuple:
        return tuple(c for p, c in self.edges if p == name)

    def validate(self):
        names = [n for n, _ in self.variables]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate variable names")
        known = set(names)
        parents = {}
        for p, c in self.edges:
            if p not in known or c not in known:
                raise ConfigurationError(f"edge ({p}, {c}) references unknown variable")
            if c in parents:
                raise ConfigurationError(f"variable {c} has two parents")
            parents[c] = p
        for name in names:
            seen = {name}
            cur = parents.get(name)
            while cur is not None:
                if cur in seen:
                    raise ConfigurationError("model edges contain a cycle")
                seen.add(cur)
                cur = parents.get(cur)
        leaves = {n for n in names if not self.children_of(n)}
        for name, card in self.variables:
            if name not in leaves and card < 2:
                raise ConfigurationError(
                    f"non-leaf variable {name} must have cardinality >= 2"
                )
        for name in self.bindings:
            if name not in known:
                raise ConfigurationError(f"binding references unknown variable {name}")
            if self.children_of(name):
                raise ConfigurationError(f"only leaf variables may bind sensory data ({name})")


def build_from_model(spec: ModelSpec, neurons_per_variable: dict,
                     top_down: bool = False) -> NetworkTopology:
    """One circuit per hidden variable; children feed parents bottom-up."""
    spec.validate()
    pops = []
    circuits = []
    up = []
    down = []
    for name, _card in spec.variables:
        if name not in neurons_per_variable:
            raise ConfigurationError(f"no neuron budget for variable {name}")
        circuits.append(CircuitSpec(name, neurons_per_variable[name]))
    for name, _card in spec.variables:
        sources = []
        for pop_id, size in spec.bindings.get(name, ()):
            pops.append(SensoryPop(pop_id, size))
            sources.append(pop_id)
        children = spec.children_of(name)
        sources.extend(children)
        if sources:
            up.append(UpEdge(name, tuple(sources)))
        if top_down and children:
            down.append(DownEdge(name, tuple(children)))
    return NetworkTopology(tuple(pops), tuple(circuits), tuple(up), tuple(down))


def extract_subnetwork(topology: NetworkTopology, root: str) -> NetworkTopology:
    """The subtree feeding ``root``: its circuits, populations, and edges."""
    if root not in topology.circuit_k():
        raise ConfigurationError(f"unknown circuit {root!r}")
    pops = set(topology.pop_sizes())
    keep_circ = set()
    keep_pop = set()
    stack = [root]
    while stack:
        cur = stack.pop()
        keep_circ.add(cur)
        e = topology.up_edge_of(cur)
        if e:
            for s in e.sources:
                if s in pops:
                    keep_pop.add(s)
                else:
                    stack.append(s)
    return NetworkTopology(
        tuple(p for p in topology.populations if p.id in keep_pop),
        tuple(c for c in topology.circuits if c.id in keep_circ),
        tuple(e for e in topology.up_edges if e.target in keep_circ),
        tuple(d for d in topology.down_edges if d.parent in keep_circ),
    )


# -- text serialization ----------------------------------------------------

FORMAT_HEADER = "wta-topology 1"


def dumps_topology(t: NetworkTopology) -> str:
    """Versioned text form; stable under write -> read -> write."""
    lines = [FORMAT_HEADER]
    for p in t.populations:
        lines.append(f"population {p.id} {p.size}")
    for c in t.circuits:
        lines.append(f"circuit {c.id} {c.K}")
    ks = t.circuit_k()
    for e in t.up_edges:
        dim = sum(t.source_size(s) for s in e.sources)
        lines.append(f"up {e.target} {ks[e.target]}x{dim} " + " ".join(e.sources))
    for d in t.down_edges:
        dim = sum(ks[c] for c in d.targets)
        lines.append(f"down {d.parent} {dim}x{ks[d.parent]} " + " ".join(d.targets))
    return "\n".join(lines) + "\n"


def loads_topology(text: str) -> NetworkTopology:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise DataFormatError(f"expected header {FORMAT_HEADER!r}")
    pops, circuits, up, down = [], [], [], []
    for ln in lines[1:]:
        parts = ln.split()
        kind = parts[0]
        try:
            if kind == "population":
                pops.append(SensoryPop(parts[1], int(parts[2])))
            elif kind == "circuit":
                circuits.append(CircuitSpec(parts[1], int(parts[2])))
            elif kind == "up":
                up.append((parts[1], parts[2], tuple(parts[3:])))
            elif kind == "down":
                down.append((parts[1], parts[2], tuple(parts[3:])))
            else:
                raise DataFormatError(f"unknown record {kind!r}")
        except (IndexError, ValueError) as exc:
            raise DataFormatError(f"bad topology line {ln!r}") from exc
    try:
        topo = NetworkTopology(
            tuple(pops),
            tuple(circuits),
            tuple(UpEdge(t, s) for t, _, s in up),
            tuple(DownEdge(p, s) for p, _, s in down),
        )
    except ConfigurationError as exc:
        raise DataFormatError(f"invalid topology: {exc}") from exc
    ks = topo.circuit_k()
    for target, dims, sources in up:
        expect = f"{ks[target]}x{sum(topo.source_size(s) for s in sources)}"
        if dims != expect:
            raise DataFormatError(f"up-edge {target} dimensions {dims} != {expect}")
    for parent, dims, targets in down:
        expect = f"{sum(ks[c] for c in targets)}x{ks[parent]}"
        if dims != expect:
            raise DataFormatError(f"down-edge {parent} dimensions {dims} != {expect}")
    return topo


def save_topology(t: NetworkTopology, path):
    with open(path, "w") as fh:
        fh.write(dumps_topology(t))


def load_topology(path) -> NetworkTopology:
    with open(path) as fh:
        return loads_topology(fh.read())

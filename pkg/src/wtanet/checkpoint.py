"""Versioned binary checkpoints: weights, counters, controller, RNG streams.

Layout: 8-byte magic "WTACKPT1", little-endian uint32 header length, a
canonical JSON header (sorted keys, compact separators), then the raw array
payload.  Arrays are little-endian, C-order, float64 for weights/psi and
int64 for spike counts, concatenated in the order listed in the header
manifest: every circuit's bottom-up matrix, every feedback matrix, lifetime
spike counts, then the psi vector.  The header embeds the topology text and
all dynamics parameters, so a checkpoint restores without the original
configuration files; the config hash guards against resuming under different
dynamics.  Writing is deterministic: identical state produces identical
bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CheckpointFormatError, CheckpointMismatchError
from .network import Network
from .params import CircuitParams, StdpParams, TdPolicy
from .topology import dumps_topology, loads_topology

MAGIC = b"WTACKPT1"
VERSION = 1


@dataclass
class Checkpoint:
    topology_text: str
    params: CircuitParams
    stdp: StdpParams
    policy: TdPolicy
    config_hash: str
    stimuli_seen: int
    arrays: dict                # name -> ndarray, in manifest order
    rng_states: dict            # stream name -> bit generator state


def _array_manifest(net: Network):
    """Canonical (name, array) list: up matrices, down matrices, counts, psi."""
    s = net.state
    out = []
    for cid in s.circ_order:
        i = s.circ_index[cid]
        if s.M[i]:
            out.append((f"w_up:{cid}", s.w_up_of(cid)))
    for cid in s.circ_order:
        if s.w_down_of(cid) is not None:
            out.append((f"w_down:{cid}", s.w_down_of(cid)))
    for cid in s.circ_order:
        out.append((f"counts:{cid}", s.counts_of(cid)))
    out.append(("psi", s.psi))
    return out


def rng_state_of(gen: np.random.Generator) -> dict:
    return gen.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    bg_name = state.get("bit_generator", "PCG64")
    cls = getattr(np.random, bg_name, None)
    if cls is None:
        raise CheckpointFormatError(f"unknown bit generator {bg_name!r}")
    bg = cls()
    bg.state = state
    return np.random.Generator(bg)


def save_checkpoint(path, net: Network, config_hash: str, stimuli_seen: int,
                    rng_states: dict):
    manifest = _array_manifest(net)
    header = {
        "version": VERSION,
        "config_hash": config_hash,
        "stimuli_seen": int(stimuli_seen),
        "topology": dumps_topology(net.topology),
        "params": asdict(net.params),
        "stdp": asdict(net.stdp),
        "policy": asdict(net.policy),
        "arrays": [[name, str(a.dtype), list(a.shape)] for name, a in manifest],
        "rng": {k: _jsonable_state(v) for k, v in rng_states.items()},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in manifest:
            dt = "<i8" if a.dtype.kind == "i" else "<f8"
            fh.write(np.ascontiguousarray(a, dtype=dt).tobytes())


def _jsonable_state(state: dict):
    def conv(x):
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        if isinstance(x, (np.integer,)):
            return int(x)
        return x
    return conv(state)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointFormatError(f"bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(hlen).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointFormatError(f"corrupt header: {exc}") from exc
        if header.get("version") != VERSION:
            raise CheckpointFormatError(f"unsupported version {header.get('version')}")
        arrays = {}
        for name, dtype, shape in header["arrays"]:
            dt = "<i8" if dtype.startswith("int") else "<f8"
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointFormatError(f"truncated payload at array {name}")
            arrays[name] = np.frombuffer(raw, dtype=dt).reshape(shape).copy()
        if fh.read(1):
            raise CheckpointFormatError("trailing bytes after payload")
    return Checkpoint(
        topology_text=header["topology"],
        params=CircuitParams(**header["params"]),
        stdp=StdpParams(**header["stdp"]),
        policy=TdPolicy(**header["policy"]),
        config_hash=header["config_hash"],
        stimuli_seen=header["stimuli_seen"],
        arrays=arrays,
        rng_states=header["rng"],
    )


def restore_network(ckpt: Checkpoint, backend: str = None) -> Network:
    """Rebuild a network from a checkpoint, including its sampling stream."""
    topo = loads_topology(ckpt.topology_text)
    net = Network(topo, ckpt.params, ckpt.stdp, ckpt.policy, backend=backend)
    load_state_into(net, ckpt)
    if "sampling" in ckpt.rng_states:
        net.rng = restore_rng(ckpt.rng_states["sampling"])
    return net


def load_state_into(net: Network, ckpt: Checkpoint):
    expected = _array_manifest(net)
    names = [n for n, _ in expected]
    if names != list(ckpt.arrays.keys()):
        raise CheckpointMismatchError("checkpoint arrays do not match the topology")
    for name, target in expected:
        src = ckpt.arrays[name]
        if src.shape != target.shape:
            raise CheckpointMismatchError(
                f"{name}: shape {src.shape} != expected {target.shape}"
            )
        target[...] = src


def extract_checkpoint(ckpt: Checkpoint, root: str) -> Checkpoint:
    """Carve the subtree feeding ``root`` out of a trained checkpoint.

    The sub-network keeps its weights, spike counts, and psi values, so it
    can run standalone (e.g. testing one hierarchy of an integration network
    in isolation).
    """
    from .topology import extract_subnetwork
    full = loads_topology(ckpt.topology_text)
    sub = extract_subnetwork(full, root)
    full_order = [c.id for c in full.circuits]
    sub_order = [c.id for c in sub.circuits]
    # expected manifest of the sub-network: the root's former feedback input
    # (from its removed parent) is dropped
    ordered = {}
    for cid in sub_order:
        if sub.up_edge_of(cid) is not None:
            ordered[f"w_up:{cid}"] = ckpt.arrays[f"w_up:{cid}"]
    for cid in sub_order:
        parent = sub.parent_of(cid)
        if parent is not None and sub.has_down_edge(parent, cid):
            ordered[f"w_down:{cid}"] = ckpt.arrays[f"w_down:{cid}"]
    for cid in sub_order:
        ordered[f"counts:{cid}"] = ckpt.arrays[f"counts:{cid}"]
    psi_idx = [full_order.index(cid) for cid in sub_order]
    ordered["psi"] = ckpt.arrays["psi"][psi_idx].copy()
    return Checkpoint(
        topology_text=dumps_topology(sub),
        params=ckpt.params,
        stdp=ckpt.stdp,
        policy=ckpt.policy,
        config_hash=f"{ckpt.config_hash}/sub:{root}",
        stimuli_seen=ckpt.stimuli_seen,
        arrays=ordered,
        rng_states=ckpt.rng_states,
    )

"""Receptive-field visualization: per-neuron grayscale maps as PGM files.

A first-layer neuron's map is, per pixel of its tile, the stroke-side weight
minus the background-side weight.  Higher-layer neurons composite the maps
of the neurons below, weighted by the (shifted, non-negative) connection
strengths: tile-shaped child maps assemble into the full image grid, and
image-shaped child maps (one per sub-network) concatenate horizontally.
Each PGM is linearly scaled to 8 bits with its exact min/max recorded in a
JSON sidecar, so weights are recoverable up to quantization.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .encoding import CubePartition
from .errors import ConfigurationError
from .network import Network


def tile_map(row: np.ndarray, tile_shape) -> np.ndarray:
    """Stroke minus background weight per pixel of one tile."""
    tr, tc = tile_shape
    if row.size != 2 * tr * tc:
        raise ConfigurationError(f"row of {row.size} weights does not tile {tr}x{tc}")
    pairs = row.reshape(tr * tc, 2)
    return (pairs[:, 0] - pairs[:, 1]).reshape(tr, tc)


def neuron_maps(net: Network, partition: CubePartition, circuit_id: str) -> np.ndarray:
    """Maps of all neurons of one circuit: (K, height, width)."""
    s = net.state
    topo = net.topology
    edge = topo.up_edge_of(circuit_id)
    if edge is None:
        raise ConfigurationError(f"circuit {circuit_id} has no bottom-up inputs")
    w = s.w_up_of(circuit_id)
    pops = set(topo.pop_sizes())
    if all(src in pops for src in edge.sources):
        if len(edge.sources) != 1:
            raise ConfigurationError("multi-population first-layer maps unsupported")
        return np.stack([tile_map(w[k], partition.tile_shape) for k in range(w.shape[0])])

    child_maps = []
    offsets = [0]
    for src in edge.sources:
        if src in pops:
            raise ConfigurationError(
                f"{circuit_id} mixes sensory and circuit sources; maps undefined"
            )
        child_maps.append(neuron_maps(net, partition, src))
        offsets.append(offsets[-1] + child_maps[-1].shape[0])

    ln_c = net.params.ln_c
    blocks_per_neuron = []
    for k in range(w.shape[0]):
        blocks = []
        for j, maps in enumerate(child_maps):
            coeff = w[k, offsets[j]:offsets[j + 1]] - ln_c
            total = coeff.sum()
            if total > 0:
                block = np.tensordot(coeff / total, maps, axes=(0, 0))
            else:
                block = np.zeros(maps.shape[1:])
            blocks.append(block)
        blocks_per_neuron.append(blocks)

    tile = child_maps[0].shape[1:] == partition.tile_shape
    if tile and len(child_maps) == partition.n_tiles:
        gr, gc = partition.grid
        tr, tc = partition.tile_shape
        out = np.zeros((w.shape[0], gr * tr, gc * tc))
        for k, blocks in enumerate(blocks_per_neuron):
            for j, block in enumerate(blocks):
                br, bc = divmod(j, gc)
                out[k, br * tr:(br + 1) * tr, bc * tc:(bc + 1) * tc] = block
        return out
    return np.stack([np.hstack(blocks) for blocks in blocks_per_neuron])


def write_pgm(path, image: np.ndarray, lo: float, hi: float):
    """8-bit binary PGM with the linear scale (lo, hi) mapped to (0, 255)."""
    if hi > lo:
        pix = np.rint((image - lo) / (hi - lo) * 255.0)
    else:
        pix = np.zeros_like(image)
    pix = np.clip(pix, 0, 255).astype(np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(pix.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ConfigurationError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    pix = np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
    return pix


def export_weight_maps(net: Network, partition: CubePartition, circuit_id: str,
                       out_dir) -> list:
    """One PGM + one min/max sidecar per neuron of the circuit."""
    os.makedirs(out_dir, exist_ok=True)
    maps = neuron_maps(net, partition, circuit_id)
    written = []
    safe = circuit_id.replace("/", "_")
    for k in range(maps.shape[0]):
        img = maps[k]
        lo, hi = float(img.min()), float(img.max())
        base = os.path.join(out_dir, f"{safe}_k{k:03d}")
        write_pgm(base + ".pgm", img, lo, hi)
        with open(base + ".json", "w") as fh:
            json.dump({"min": lo, "max": hi,
                       "height": img.shape[0], "width": img.shape[1]}, fh,
                      sort_keys=True)
            fh.write("\n")
        written.append(base + ".pgm")
    return written


def reconstruct_from_pgm(pgm_path, sidecar_path) -> np.ndarray:
    """Invert the linear 8-bit scaling using the sidecar min/max."""
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    pix = read_pgm(pgm_path).astype(np.float64)
    lo, hi = meta["min"], meta["max"]
    if hi > lo:
        return lo + pix / 255.0 * (hi - lo)
    return np.full_like(pix, lo)

"""MNIST loading and population-coded Poisson spike streams.

Every pixel is represented by a pair of sensory neurons, one for stroke and
one for background; exactly one of the pair is active per stimulus.  Active
neurons fire independently each 1 ms timestep with probability rate * dt
(the Bernoulli discretization of a Poisson process), inactive neurons stay
silent.  The image is partitioned into tiles, one sensory population per
tile, so a 28x28 image under a 4x4 grid yields 16 populations of 7*7*2 = 98
neurons with 49 active each.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    IdxCountMismatchError,
    IdxFormatError,
    IdxTruncatedError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

STROKE = 0      # local side index of the stroke neuron of a pixel pair
BACKGROUND = 1


@dataclass(frozen=True)
class MnistImage:
    pixels: np.ndarray      # (28, 28) uint8
    label: int


def _open_maybe_gzip(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, n, path):
    data = fh.read(n)
    if len(data) != n:
        raise IdxTruncatedError(f"{path}: expected {n} more bytes, got {len(data)}")
    return data


def load_idx(images_path, labels_path):
    """Read an MNIST IDX image/label file pair (gzip detected by suffix)."""
    with _open_maybe_gzip(images_path) as fh:
        magic, = struct.unpack(">I", _read_exact(fh, 4, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise IdxFormatError(
                f"{images_path}: bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
            )
        n, rows, cols = struct.unpack(">III", _read_exact(fh, 12, images_path))
        if (rows, cols) != (28, 28):
            raise IdxFormatError(f"{images_path}: expected 28x28 images, got {rows}x{cols}")
        payload = _read_exact(fh, n * rows * cols, images_path)
        extra = fh.read(1)
        if extra:
            raise IdxFormatError(f"{images_path}: trailing bytes after payload")
        images = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)
    with _open_maybe_gzip(labels_path) as fh:
        magic, = struct.unpack(">I", _read_exact(fh, 4, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise IdxFormatError(
                f"{labels_path}: bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
            )
        n_labels, = struct.unpack(">I", _read_exact(fh, 4, labels_path))
        labels = np.frombuffer(_read_exact(fh, n_labels, labels_path), dtype=np.uint8)
    if n_labels != n:
        raise IdxCountMismatchError(f"{n} images but {n_labels} labels")
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        raise IdxFormatError(f"label {labels[bad[0]]} out of range at item {bad[0]}")
    return [MnistImage(images[i], int(labels[i])) for i in range(n)]


def write_idx(images, labels, images_path, labels_path):
    """Write arrays as an IDX pair (testing and synthetic-data support)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with _open_maybe_gzip_write(images_path) as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with _open_maybe_gzip_write(labels_path) as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def _open_maybe_gzip_write(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "wb")
    return open(path, "wb")


def binarize(img: MnistImage, threshold: int = 1) -> np.ndarray:
    """Stroke mask: a pixel is stroke iff its intensity >= threshold."""
    if not 1 <= threshold <= 255:
        raise ConfigurationError(f"threshold must be in [1, 255], got {threshold}")
    return np.asarray(img.pixels) >= threshold


class CubePartition:
    """Tiling of the pair-coded image into per-tile sensory populations.

    Local neuron index inside a tile: (row_in_tile * tile_cols + col_in_tile) * 2
    + side, side 0 = stroke neuron, 1 = background neuron.
    """

    def __init__(self, grid=(4, 4), image_shape=(28, 28)):
        rows, cols = image_shape
        gr, gc = grid
        if gr < 1 or gc < 1 or rows % gr or cols % gc:
            raise ConfigurationError(
                f"image {rows}x{cols} is not divisible by partition {gr}x{gc}"
            )
        self.grid = (gr, gc)
        self.image_shape = (rows, cols)
        self.tile_shape = (rows // gr, cols // gc)
        self.n_tiles = gr * gc
        self.pixels_per_tile = self.tile_shape[0] * self.tile_shape[1]
        self.pop_size = 2 * self.pixels_per_tile

    def active_locals(self, mask: np.ndarray) -> np.ndarray:
        """Per tile, the active neuron of each pixel pair: (n_tiles, pixels_per_tile)."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.image_shape:
            raise ConfigurationError(
                f"mask shape {mask.shape} != image shape {self.image_shape}"
            )
        tr, tc = self.tile_shape
        gr, gc = self.grid
        tiles = mask.reshape(gr, tr, gc, tc).transpose(0, 2, 1, 3)
        tiles = tiles.reshape(self.n_tiles, self.pixels_per_tile)
        base = 2 * np.arange(self.pixels_per_tile, dtype=np.int64)
        return base[None, :] + np.where(tiles, STROKE, BACKGROUND)


@dataclass(frozen=True)
class StimulusStream:
    """Active-neuron assignment of one stimulus plus its timing parameters."""

    active: np.ndarray      # (n_tiles, pixels_per_tile) active local indices
    duration: int = 150
    rate_hz: float = 200.0
    dt_ms: float = 1.0

    @property
    def p_fire(self) -> float:
        return self.rate_hz * self.dt_ms / 1000.0


def encode(mask: np.ndarray, partition: CubePartition, duration: int = 150,
           rate_hz: float = 200.0, dt_ms: float = 1.0) -> StimulusStream:
    """Population-code a stroke mask; fails if rate * dt exceeds one."""
    p = rate_hz * dt_ms / 1000.0
    if p > 1.0:
        raise ConfigurationError(f"rate*dt = {p} exceeds 1 spike per timestep")
    if duration < 1:
        raise ConfigurationError("duration must be >= 1")
    return StimulusStream(partition.active_locals(mask), duration, rate_hz, dt_ms)


def sample_stream(stream: StimulusStream, rng: np.random.Generator,
                  pop_offset: int = 0, n_pops: int = None):
    """Draw one Bernoulli realization of a stimulus as a packed sensory block.

    Returns (sens_ptr, sens_idx) over ``n_pops`` populations (defaults to the
    stream's own tile count); the stream's tiles occupy population slots
    ``pop_offset`` onward.  Uniform draws are consumed as one
    (duration, n_tiles, pixels_per_tile) block in C order, so a seeded stream
    replays identically.
    """
    active = stream.active
    T = stream.duration
    n_tiles, per = active.shape
    if n_pops is None:
        n_pops = n_tiles
    draws = rng.random((T, n_tiles, per))
    fired = draws < stream.p_fire
    counts = np.zeros((T, n_pops), dtype=np.int64)
    counts[:, pop_offset:pop_offset + n_tiles] = fired.sum(axis=2)
    ptr = np.zeros(T * n_pops + 1, dtype=np.int64)
    np.cumsum(counts.ravel(), out=ptr[1:])
    t_i, tile_i, slot_i = np.nonzero(fired)
    idx = active[tile_i, slot_i]
    return ptr, idx.astype(np.int64)


def stack_streams(parts) -> StimulusStream:
    """Concatenate streams tile-wise into one stream over more populations.

    Used when a network has several input fields (e.g. the two sub-networks
    of an integration design): each part keeps its own tiles, all sampled
    independently from one block.  Durations, rates, and tile widths must
    match.
    """
    first = parts[0]
    for p in parts[1:]:
        if (p.duration, p.rate_hz, p.dt_ms) != (first.duration, first.rate_hz, first.dt_ms):
            raise ConfigurationError("streams differ in timing parameters")
        if p.active.shape[1] != first.active.shape[1]:
            raise ConfigurationError("streams differ in tile width")
    active = np.vstack([p.active for p in parts])
    return StimulusStream(active, first.duration, first.rate_hz, first.dt_ms)

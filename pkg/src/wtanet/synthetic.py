"""Synthetic handwritten-digit stand-in: jittered glyphs in MNIST geometry.

Ten 5x7 digit glyphs are upscaled to 15x21, placed on a 28x28 canvas with a
random shift, and salted with pixel flips.  The result matches the MNIST
container and intensity conventions (uint8, stroke bright on zero
background), so the whole pipeline runs unchanged where the real dataset is
unavailable.
"""

from __future__ import annotations

import os

import numpy as np

from .encoding import write_idx

_FONT = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

_SCALE = 3
_CANVAS = 28


def _glyph(digit: int) -> np.ndarray:
    rows = _FONT[digit]
    bitmap = np.array([[c == "1" for c in row] for row in rows], dtype=bool)
    return np.kron(bitmap, np.ones((_SCALE, _SCALE), dtype=bool))


_GLYPHS = {d: _glyph(d) for d in range(10)}


def _dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def make_glyphs(n: int, seed: int, jitter: int = 3, flip: float = 0.015,
                thick: bool = True):
    """n jittered glyph images with balanced random labels.

    Returns (images, labels): uint8 arrays of shape (n, 28, 28) and (n,).
    ``thick`` dilates the strokes one pixel, bringing ink coverage close to
    handwritten digits.
    """
    rng = np.random.default_rng(seed)
    gh, gw = _GLYPHS[0].shape
    y0 = (_CANVAS - gh) // 2
    x0 = (_CANVAS - gw) // 2
    labels = rng.integers(0, 10, size=n).astype(np.uint8)
    images = np.zeros((n, _CANVAS, _CANVAS), dtype=np.uint8)
    for i in range(n):
        dy, dx = rng.integers(-jitter, jitter + 1, size=2)
        canvas = np.zeros((_CANVAS, _CANVAS), dtype=bool)
        canvas[y0 + dy:y0 + dy + gh, x0 + dx:x0 + dx + gw] = _GLYPHS[int(labels[i])]
        if thick:
            canvas = _dilate(canvas)
        flips = rng.random((_CANVAS, _CANVAS)) < flip
        canvas ^= flips
        images[i] = np.where(canvas, 255, 0).astype(np.uint8)
    return images, labels


def write_glyph_idx(out_dir, n_train: int, n_test: int, seed: int = 0):
    """Write a glyph dataset under MNIST's standard IDX file names."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "train_images": os.path.join(out_dir, "train-images-idx3-ubyte"),
        "train_labels": os.path.join(out_dir, "train-labels-idx1-ubyte"),
        "test_images": os.path.join(out_dir, "t10k-images-idx3-ubyte"),
        "test_labels": os.path.join(out_dir, "t10k-labels-idx1-ubyte"),
    }
    tr_i, tr_l = make_glyphs(n_train, seed)
    te_i, te_l = make_glyphs(n_test, seed + 1)
    write_idx(tr_i, tr_l, paths["train_images"], paths["train_labels"])
    write_idx(te_i, te_l, paths["test_images"], paths["test_labels"])
    return paths

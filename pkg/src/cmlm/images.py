"""Deterministic stub image codec: 256x256 pixels to 256 discrete tokens.

Stands in for a learned vector-quantized codec behind a stable interface.
The image is resized so its shorter side is 256, cropped to 256x256
(random offsets in train mode, center in eval mode), partitioned into a
16x16 grid of 16x16 blocks in row-major order, and each block's mean color
is quantized to the nearest entry of a fixed 1024-color palette.
"""
from __future__ import annotations

import io

import numpy as np
from PIL import Image

IMAGE_SIDE = 256
GRID = 16
BLOCK = IMAGE_SIDE // GRID
NUM_TOKENS = GRID * GRID

# Palette: 1024 colors on an RGB lattice with 16 red, 8 green and 8 blue
# levels (4+3+3 bits). Level i of an n-level channel has value
# round(i*255/(n-1)); palette index is (r_idx*8 + g_idx)*8 + b_idx.
PALETTE_LEVELS = (16, 8, 8)


class ImageError(ValueError):
    pass


def _channel_levels(n: int) -> np.ndarray:
    return np.round(np.arange(n) * 255.0 / (n - 1)).astype(np.float64)


def build_palette() -> np.ndarray:
    """(1024, 3) uint8 palette in index order."""
    r, g, b = (_channel_levels(n) for n in PALETTE_LEVELS)
    grid = np.stack(np.meshgrid(r, g, b, indexing="ij"), axis=-1)
    return grid.reshape(-1, 3).astype(np.uint8)


PALETTE = build_palette()


def prepare(image_bytes: bytes, mode: str = "eval",
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Decode, shorter-side resize to 256, crop to 256x256x3 uint8.

    Train mode draws the crop x offset then the y offset from rng; eval
    mode center-crops.
    """
    if mode not in ("train", "eval"):
        raise ImageError(f"unknown mode {mode!r}")
    if mode == "train" and rng is None:
        raise ImageError("train mode requires an rng")
    try:
        img = Image.open(io.BytesIO(image_bytes))
        img.load()
    except Exception as e:
        raise ImageError(f"undecodable image: {e}") from e
    img = img.convert("RGB")
    w, h = img.size
    if min(w, h) < 1:
        raise ImageError("degenerate image size")
    if min(w, h) != IMAGE_SIDE:
        scale = IMAGE_SIDE / min(w, h)
        img = img.resize((max(IMAGE_SIDE, round(w * scale)),
                          max(IMAGE_SIDE, round(h * scale))),
                         resample=Image.BILINEAR)
    w, h = img.size
    if mode == "train":
        x = int(rng.integers(0, w - IMAGE_SIDE + 1))
        y = int(rng.integers(0, h - IMAGE_SIDE + 1))
    else:
        x = (w - IMAGE_SIDE) // 2
        y = (h - IMAGE_SIDE) // 2
    img = img.crop((x, y, x + IMAGE_SIDE, y + IMAGE_SIDE))
    arr = np.asarray(img, dtype=np.uint8)
    if arr.shape != (IMAGE_SIDE, IMAGE_SIDE, 3):
        raise ImageError(f"unexpected tensor shape {arr.shape}")
    return arr


def _nearest_palette(means: np.ndarray) -> np.ndarray:
    """Nearest lattice color per (N, 3) float mean; ties take the lowest index.

    The lattice is separable, so the per-channel nearest level minimizes
    Euclidean distance, and per-channel lower-level tie-breaking picks the
    lowest flat index (index order is lexicographic in r, g, b).
    """
    idx = np.zeros(means.shape[0], dtype=np.int64)
    for c, n in enumerate(PALETTE_LEVELS):
        levels = _channel_levels(n)
        dist = np.abs(means[:, c:c + 1] - levels[None, :])
        idx = idx * n + np.argmin(dist, axis=1)
    return idx


def tokenize(tensor: np.ndarray) -> list[int]:
    """256 palette indices for the 16x16 block grid, row-major."""
    if tensor.shape != (IMAGE_SIDE, IMAGE_SIDE, 3):
        raise ImageError(f"expected (256, 256, 3) tensor, got {tensor.shape}")
    blocks = tensor.astype(np.float64).reshape(GRID, BLOCK, GRID, BLOCK, 3)
    means = blocks.mean(axis=(1, 3)).reshape(-1, 3)
    return [int(i) for i in _nearest_palette(means)]


def detokenize(tokens) -> np.ndarray:
    tokens = list(tokens)
    if len(tokens) != NUM_TOKENS:
        raise ImageError(f"expected {NUM_TOKENS} tokens, got {len(tokens)}")
    for t in tokens:
        if not 0 <= t < len(PALETTE):
            raise ImageError(f"invalid image token index {t}")
    colors = PALETTE[np.asarray(tokens, dtype=np.int64)].reshape(GRID, GRID, 3)
    return np.repeat(np.repeat(colors, BLOCK, axis=0), BLOCK, axis=1)


def render_src(tokens) -> str:
    """`src` attribute value: 256 token spellings joined by single spaces."""
    tokens = list(tokens)
    if len(tokens) != NUM_TOKENS:
        raise ImageError(f"expected {NUM_TOKENS} tokens, got {len(tokens)}")
    return " ".join(f"IMG{int(t)}" for t in tokens)


def embed_in_src(node, tokens):
    """Replace an img node's src attribute with the rendered token string."""
    if node.tag != "img":
        raise ImageError(f"expected an img element, got <{node.tag}>")
    if "src" not in node.attrs or node.attrs["src"] is None:
        raise ImageError("img element has no src attribute")
    node.attrs["src"] = render_src(tokens)
    return node


def tokenize_file(path, mode: str = "eval",
                  rng: np.random.Generator | None = None) -> list[int]:
    with open(path, "rb") as fp:
        data = fp.read()
    return tokenize(prepare(data, mode=mode, rng=rng))

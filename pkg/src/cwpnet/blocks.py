"""Wavelet attention encoder/decoder blocks, the CNN block, and the degradation tap."""
from __future__ import annotations

import numpy as np

from .attention import CbamPair
from .frequency import SubbandSet, dwt2, idwt2
from .nn import ConfigError, Conv2d, Module
from .tensor import DimensionError, Tensor, add, concat, relu, split_channels

REP_GRID = 8
REP_DIM = REP_GRID * REP_GRID


class CnnBlock(Module):
    """x + conv(relu(conv(x)))."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv1 = Conv2d(channels, channels, 3, rng)
        self.conv2 = Conv2d(channels, channels, 3, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return add(x, self.conv2(relu(self.conv1(x))))


class Wae(Module):
    """Encoder wavelet attention: DWT, per-subband CA/SA, concat, 1x1 reduce."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        self.attn = {name: CbamPair(cin, rng) for name in ("ll", "lh", "hl", "hh")}
        self.reduce = Conv2d(4 * cin, cout, 1, rng)


class Wad(Module):
    """Decoder wavelet attention: 3x3 conv split into subbands, CA/SA, IDWT, 1x1 expand.

    The 3x3 conv maps C_in to 2 C_in so that each subband gets C_in / 2
    channels; the output has ``cout`` channels (C_in / 2 by default).
    """

    def __init__(self, cin: int, rng: np.random.Generator, cout: int | None = None):
        if cin % 2:
            raise ConfigError(f"WAD input channels must be even, got {cin}")
        band = cin // 2
        self.conv3 = Conv2d(cin, 4 * band, 3, rng)
        self.attn = {name: CbamPair(band, rng) for name in ("ll", "lh", "hl", "hh")}
        self.expand = Conv2d(band, cout or band, 1, rng)


def wae_forward(f: Tensor, p: Wae) -> tuple[Tensor, Tensor]:
    """Returns the half-resolution output and the LL spatial-attention gate."""
    h, w = f.dims[2:]
    if h % 2 or w % 2:
        raise DimensionError(f"WAE needs even spatial dims, got {h}x{w}")
    bands = dwt2(f)
    refined = []
    ll_gate = None
    for name, band in zip(("ll", "lh", "hl", "hh"), bands):
        out, gate = p.attn[name](band)
        refined.append(out)
        if name == "ll":
            ll_gate = gate
    return p.reduce(concat(refined, axis=1)), ll_gate


def wad_forward(f: Tensor, p: Wad) -> Tensor:
    mixed = p.conv3(f)
    if mixed.dims[1] % 4:
        raise ConfigError(f"WAD conv output of {mixed.dims[1]} channels cannot split into 4 subbands")
    groups = split_channels(mixed, 4)
    refined = [p.attn[name](g)[0] for name, g in zip(("ll", "lh", "hl", "hh"), groups)]
    return p.expand(idwt2(SubbandSet(*refined)))


def _bins(n_in: int, n_out: int) -> list[tuple[int, int]]:
    return [((i * n_in) // n_out, -((-(i + 1) * n_in) // n_out)) for i in range(n_out)]


def extract_degradation_rep(ll_gate: Tensor | np.ndarray, grid: int = REP_GRID) -> np.ndarray:
    """Adaptive average pool of the gate to grid x grid, flattened per sample.

    Returns an ``N x grid**2`` float64 array; the representation is not
    differentiated through.
    """
    g = ll_gate.data if isinstance(ll_gate, Tensor) else np.asarray(ll_gate)
    if g.ndim != 4 or g.shape[1] != 1:
        raise DimensionError(f"expected an N x 1 x H x W gate, got {g.shape}")
    h, w = g.shape[2:]
    if h < grid or w < grid:
        raise DimensionError(
            f"gate of {h}x{w} is smaller than the {grid}x{grid} pooling grid; use inputs of at least "
            f"{4 * grid}x{4 * grid}")
    g = g[:, 0].astype(np.float64)
    if h % grid == 0 and w % grid == 0:
        pooled = g.reshape(g.shape[0], grid, h // grid, grid, w // grid).mean(axis=(2, 4))
    else:
        pooled = np.empty((g.shape[0], grid, grid))
        for i, (r0, r1) in enumerate(_bins(h, grid)):
            for j, (c0, c1) in enumerate(_bins(w, grid)):
                pooled[:, i, j] = g[:, r0:r1, c0:c1].mean(axis=(1, 2))
    return pooled.reshape(g.shape[0], grid * grid)

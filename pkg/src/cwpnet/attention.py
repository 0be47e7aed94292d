"""Channel and spatial attention gates, applied per wavelet subband."""
from __future__ import annotations

import numpy as np

from .nn import ConfigError, Conv2d, Module
from .tensor import DimensionError, Tensor, amax, concat, global_avg_pool, mean, mul, relu, sigmoid

REDUCTION = 4
SPATIAL_KERNEL = 7


class ChannelAttention(Module):
    """gate = sigmoid(excite(relu(squeeze(GAP(f))))), shape N x C x 1 x 1."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = REDUCTION):
        if channels % reduction:
            raise ConfigError(f"reduction {reduction} does not divide {channels} channels")
        hidden = channels // reduction
        self.squeeze = Conv2d(channels, hidden, 1, rng)
        self.excite = Conv2d(hidden, channels, 1, rng)

    @property
    def channels(self) -> int:
        return self.squeeze.in_channels


class SpatialAttention(Module):
    """gate = sigmoid(conv_k([mean_c(f), max_c(f)])), shape N x 1 x H x W."""

    def __init__(self, rng: np.random.Generator, kernel: int = SPATIAL_KERNEL):
        if kernel % 2 == 0:
            raise ConfigError(f"spatial attention kernel must be odd, got {kernel}")
        self.conv = Conv2d(2, 1, kernel, rng)


def channel_attention(f: Tensor, p: ChannelAttention) -> tuple[Tensor, Tensor]:
    if f.dims[1] != p.channels:
        raise DimensionError(f"channel axis (1): features have {f.dims[1]}, attention expects {p.channels}")
    gate = sigmoid(p.excite(relu(p.squeeze(global_avg_pool(f)))))
    return mul(f, gate), gate


def spatial_attention(f: Tensor, p: SpatialAttention) -> tuple[Tensor, Tensor]:
    stats = concat([mean(f, axis=1, keepdims=True), amax(f, axis=1)], axis=1)
    gate = sigmoid(p.conv(stats))
    return mul(f, gate), gate


class CbamPair(Module):
    """CA followed by SA, one independent pair per subband."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = REDUCTION,
                 kernel: int = SPATIAL_KERNEL):
        self.ca = ChannelAttention(channels, rng, reduction)
        self.sa = SpatialAttention(rng, kernel)

    def __call__(self, f: Tensor) -> tuple[Tensor, Tensor]:
        g, _ = channel_attention(f, self.ca)
        return spatial_attention(g, self.sa)

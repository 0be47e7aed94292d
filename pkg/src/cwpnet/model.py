"""U-shaped CWP-Net with wavelet attention, prompt blocks on the skips, and MIMO heads."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .blocks import CnnBlock, Wad, Wae, extract_degradation_rep, wad_forward, wae_forward
from .clustering import ClusterModel
from .nn import ConfigError, Conv2d, Module
from .prompt import NUM_LL_CONVS, NUM_PROMPTS, Wpb, wpb_forward
from .tensor import DimensionError, Tensor, add, avg_pool2, no_record

NUM_OUTPUTS = 3


@dataclass
class ModelConfig:
    """Network hyperparameters.

    The full-scale network was trained on 224x224 crops; the defaults here are
    a desk-scale reduction (3 scales, 8 base channels).
    """

    scales: int = 3
    base_channels: int = 8
    num_prompts: int = NUM_PROMPTS
    num_clusters: int = 5
    conv_depth: int = NUM_LL_CONVS
    in_channels: int = 3
    seed: int = 0

    def validate(self) -> None:
        if self.scales < 2:
            raise ConfigError("scales must be >= 2 so the second-scale WAE exists")
        for key in ("base_channels", "num_prompts", "num_clusters", "conv_depth", "in_channels"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive")
        if self.base_channels % 4:
            raise ConfigError("base_channels must be a multiple of 4 (channel-attention reduction)")

    def to_dict(self) -> dict:
        return asdict(self)


class CwpNet(Module):
    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        s, c0 = cfg.scales, cfg.base_channels
        widths = [c0 * 2**k for k in range(s + 1)]
        self.embed = Conv2d(cfg.in_channels, c0, 3, rng)
        # MIMO input embeddings for encoder scales 2..S
        self.inject = [Conv2d(cfg.in_channels, widths[k], 3, rng) for k in range(1, s)]
        self.enc = [CnnBlock(widths[k], rng) for k in range(s)]
        self.wae = [Wae(widths[k], widths[k + 1], rng) for k in range(s)]
        self.bottleneck = CnnBlock(widths[s], rng)
        self.wad = [Wad(widths[k + 1], rng) for k in range(s)]
        self.dec = [CnnBlock(widths[k], rng) for k in range(s)]
        self.wpb = [Wpb(widths[k], cfg.num_clusters, rng, cfg.num_prompts, cfg.conv_depth) for k in range(s)]
        # output heads at resolutions 1, 1/2, 1/4; width of the stage at that resolution
        self.heads = [Conv2d(widths[k], cfg.in_channels, 3, rng) for k in range(NUM_OUTPUTS)]
        self.cluster = ClusterModel(k=cfg.num_clusters, seed=cfg.seed)

    @property
    def multiple(self) -> int:
        return 2 ** self.cfg.scales

    def weight_matrices(self):
        return [w.weights for w in self.wpb]


def input_pyramid(x: Tensor, levels: int) -> list[Tensor]:
    out = [x]
    for _ in range(levels - 1):
        out.append(avg_pool2(out[-1]))
    return out


def forward(x: Tensor, net: CwpNet, warmup: bool) -> tuple[list[Tensor], np.ndarray]:
    """Returns ([Y1, Y2, Y3], degradation representation N x 64)."""
    cfg = net.cfg
    s = cfg.scales
    n, c, h, w = x.dims
    if c != cfg.in_channels:
        raise DimensionError(f"channel axis (1): expected {cfg.in_channels}, got {c}")
    if h % net.multiple or w % net.multiple:
        raise DimensionError(
            f"input {h}x{w} is not a multiple of {net.multiple}; pad reflectively before forward")
    pyramid = input_pyramid(x, max(s, NUM_OUTPUTS))

    feat = net.embed(x)
    skips = []
    rep = None
    for k in range(s):
        if k > 0:
            feat = add(feat, net.inject[k - 1](pyramid[k]))
        feat = net.enc[k](feat)
        skips.append(feat)
        feat, gate = wae_forward(feat, net.wae[k])
        if k == 1:
            rep = extract_degradation_rep(gate)

    feat = net.bottleneck(feat)
    stages = {s: feat}
    for k in reversed(range(s)):
        feat = wad_forward(feat, net.wad[k])
        feat = add(feat, wpb_forward(skips[k], rep, net.wpb[k], net.cluster, warmup))
        feat = net.dec[k](feat)
        stages[k] = feat

    outputs = [add(pyramid[k], net.heads[k](stages[k])) for k in range(NUM_OUTPUTS)]
    return outputs, rep


def _reflect_pad(img: np.ndarray, multiple: int) -> tuple[np.ndarray, int, int]:
    h, w = img.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        img = np.pad(img, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")
    return img, h, w


def restore(x, net: CwpNet, warmup: bool | None = None) -> np.ndarray:
    """Pad, run forward, keep the full-resolution output, crop, clamp to [0, 1]."""
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    squeeze = arr.ndim == 3
    if squeeze:
        arr = arr[None]
    if warmup is None:
        warmup = not net.cluster.fitted
    padded, h, w = _reflect_pad(arr, net.multiple)
    with no_record():
        outputs, _ = forward(Tensor(padded), net, warmup)
    y = np.clip(outputs[0].data[:, :, :h, :w], 0.0, 1.0)
    return y[0] if squeeze else y


def degradation_rep(x, net: CwpNet) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    padded, _, _ = _reflect_pad(arr, net.multiple)
    with no_record():
        return second_scale_gate_rep(Tensor(padded), net)[1]


def second_scale_gate_rep(x: Tensor, net: CwpNet) -> tuple[Tensor, np.ndarray]:
    """Run only the encoder up to the second WAE; returns (LL gate, rep)."""
    pyramid = input_pyramid(x, 2)
    feat = net.embed(x)
    for k in range(2):
        if k > 0:
            feat = add(feat, net.inject[k - 1](pyramid[k]))
        feat = net.enc[k](feat)
        feat, gate = wae_forward(feat, net.wae[k])
    return gate, extract_degradation_rep(gate)

"""Wavelet prompt block (WPB) and its degradation-based weight estimator (DWE).

The block splits skip features into Haar subbands, refines LL with plain
convolutions, modulates each high-frequency subband with an input-conditioned
prompt through a spatial feature transform, scales it by the weight column
chosen for the sample's degradation cluster, and recombines with the IDWT.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import ClusterModel, NotFittedError, kmeans_assign
from .frequency import SubbandSet, dwt2, idwt2
from .nn import Conv2d, Module, param
from .tensor import (DimensionError, Tensor, add, einsum, getitem, global_avg_pool, mul, relu, reshape,
                     resize_bilinear, softmax, transpose)

HIGH_BANDS = ("lh", "hl", "hh")
NUM_PROMPTS = 5
PROMPT_BASE = 16
NUM_LL_CONVS = 4


class PromptBank(Module):
    """M learnable components per high-frequency subband, mixed by softmax weights."""

    def __init__(self, channels: int, rng: np.random.Generator, num_prompts: int = NUM_PROMPTS,
                 base: int = PROMPT_BASE):
        if num_prompts < 1:
            raise ValueError("need at least one prompt component")
        self.components = {
            j: param(rng.standard_normal((num_prompts, channels, base, base)) * 0.1) for j in HIGH_BANDS
        }
        self.alpha_conv = {j: Conv2d(channels, num_prompts, 1, rng) for j in HIGH_BANDS}
        self.refine = {j: Conv2d(channels, channels, 3, rng) for j in HIGH_BANDS}


class _SftBranch(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.first = Conv2d(channels, channels, 1, rng)
        self.second = Conv2d(channels, channels, 1, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.second(relu(self.first(x)))


class SftParams(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.gamma = {j: _SftBranch(channels, rng) for j in HIGH_BANDS}
        self.beta = {j: _SftBranch(channels, rng) for j in HIGH_BANDS}


class WeightMatrix(Module):
    """3 x K subband weights (rows LH, HL, HH), initialised to ones, kept in [0, 1]."""

    def __init__(self, k: int):
        self.w = param(np.ones((3, k)), name="W")

    @property
    def k(self) -> int:
        return self.w.dims[1]

    def clamp_(self) -> None:
        np.clip(self.w.data, 0.0, 1.0, out=self.w.data)


@dataclass
class PromptedSubbands:
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def as_subbands(self) -> SubbandSet:
        return SubbandSet(self.ll, self.lh, self.hl, self.hh)


def _band_index(j: str) -> int:
    try:
        return HIGH_BANDS.index(j)
    except ValueError:
        raise KeyError(f"prompts exist only for {HIGH_BANDS}, got {j!r}") from None


def prompt_weights(z_j: Tensor, bank: PromptBank, j: str) -> Tensor:
    """alpha_j = softmax over the M components, shape N x M."""
    logits = bank.alpha_conv[j](global_avg_pool(z_j))
    n, m = logits.dims[:2]
    return softmax(reshape(logits, (n, m)), axis=1)


def prompt_generate(z_j: Tensor, bank: PromptBank, j: str) -> Tensor:
    """L_j = Conv3(sum_c alpha_c * resize(L_c)) at the dims of ``z_j``."""
    _band_index(j)
    comps = bank.components[j]
    if comps.dims[1] != z_j.dims[1]:
        raise DimensionError(f"channel axis (1): features {z_j.dims[1]}, prompts {comps.dims[1]}")
    alpha = prompt_weights(z_j, bank, j)
    resized = resize_bilinear(comps, *z_j.dims[2:])
    mixed = einsum("nm,mchw->nchw", alpha, resized)
    return bank.refine[j](mixed)


def sft_interact(z_j: Tensor, l_j: Tensor, p: SftParams, j: str) -> Tensor:
    """gamma * z + beta + z, with gamma and beta predicted from the prompt."""
    if l_j.dims != z_j.dims:
        raise DimensionError(f"prompt dims {l_j.dims} differ from feature dims {z_j.dims}")
    gamma = p.gamma[j](l_j)
    beta = p.beta[j](l_j)
    return add(add(mul(gamma, z_j), beta), z_j)


def dwe_select(rep, model: ClusterModel, w: WeightMatrix, warmup: bool) -> Tensor:
    """Per-sample subband weights omega, shape N x 3 (or 3 for a single vector).

    During warmup the weights are the constant ones and W receives no gradient;
    afterwards the column of W for each sample's cluster is gathered, so only
    the selected columns are differentiated.
    """
    r = np.asarray(rep, dtype=np.float64)
    single = r.ndim == 1
    r = np.atleast_2d(r)
    if warmup:
        ones = np.ones((len(r), 3), dtype=w.w.dtype)
        return Tensor(ones[0] if single else ones, dtype=None)
    if not model.fitted:
        raise NotFittedError("DWE needs a fitted cluster model outside warmup")
    idx = np.asarray(kmeans_assign(model, r))
    omega = transpose(getitem(w.w, (slice(None), idx)), (1, 0))
    return getitem(omega, 0) if single else omega


class Wpb(Module):
    """Prompt bank, SFT heads, LL refinement convs and the per-level weight matrix."""

    def __init__(self, channels: int, k: int, rng: np.random.Generator, num_prompts: int = NUM_PROMPTS,
                 num_convs: int = NUM_LL_CONVS):
        self.ll_convs = [Conv2d(channels, channels, 3, rng) for _ in range(num_convs)]
        self.bank = PromptBank(channels, rng, num_prompts)
        self.sft = SftParams(channels, rng)
        self.weights = WeightMatrix(k)

    def refine_ll(self, z_ll: Tensor) -> Tensor:
        out = z_ll
        for i, conv in enumerate(self.ll_convs):
            out = conv(out)
            if i < len(self.ll_convs) - 1:
                out = relu(out)
        return out


def prompted_subbands(z: Tensor, rep, wpb: Wpb, model: ClusterModel, warmup: bool) -> PromptedSubbands:
    h, w = z.dims[2:]
    if h % 2 or w % 2:
        raise DimensionError(f"WPB needs even spatial dims, got {h}x{w}")
    bands = dwt2(z)
    omega = dwe_select(rep, model, wpb.weights, warmup)
    out = {"ll": wpb.refine_ll(bands.ll)}
    n = z.dims[0]
    for i, j in enumerate(HIGH_BANDS):
        z_j = bands[j]
        p_j = sft_interact(z_j, prompt_generate(z_j, wpb.bank, j), wpb.sft, j)
        w_j = reshape(getitem(omega, (slice(None), i)), (n, 1, 1, 1))
        out[j] = mul(p_j, w_j)
    return PromptedSubbands(**out)


def wpb_forward(z: Tensor, rep, wpb: Wpb, model: ClusterModel, warmup: bool) -> Tensor:
    return idwt2(prompted_subbands(z, rep, wpb, model, warmup).as_subbands())


def estimate_prompt_distribution(reps, model: ClusterModel, w: WeightMatrix) -> list[tuple[dict, float]]:
    """Empirical P(P = p_k): cluster frequencies, each tied to column k of W."""
    r = np.atleast_2d(np.asarray(reps, dtype=np.float64))
    if r.size == 0:
        raise ValueError("no representations to estimate from")
    if not model.fitted:
        raise NotFittedError("cluster model has not been fitted")
    idx = np.asarray(kmeans_assign(model, r))
    counts = np.bincount(idx, minlength=model.k)
    out = []
    for k in range(model.k):
        omega = tuple(float(v) for v in w.w.data[:, k])
        out.append(({"cluster": k, "omega": omega}, counts[k] / len(idx)))
    return out


def write_distribution_csv(dist: list[tuple[dict, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["cluster_index", "frequency", "omega_LH", "omega_HL", "omega_HH"])
        for desc, prob in dist:
            out.writerow([desc["cluster"], repr(float(prob)), *(repr(v) for v in desc["omega"])])

"""Losses, Adam with cosine annealing, and the training loop with delayed DWE update."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .clustering import kmeans_fit
from .frequency import fft2
from .metrics import psnr
from .model import CwpNet, forward, input_pyramid
from .nn import ConfigError
from .tensor import DimensionError, Tape, Tensor, absolute, add, backward, mean, scale, sub

log = logging.getLogger(__name__)

BETAS = (0.9, 0.999)
EPS = 1e-8


@dataclass
class TrainConfig:
    """Optimisation settings.

    Full-scale reference regime: 150 epochs, delayed update at epoch 100,
    batch 48, 224x224 crops, lr 2e-4 annealed to 1e-6, lambda 0.1.  The
    defaults below are the desk-scale reduction.
    """

    epochs: int = 30
    warmup_epochs: int = 20
    batch_size: int = 4
    lr0: float = 2e-4
    lr1: float = 1e-6
    lam: float = 0.1
    seed: int = 0
    augment: bool = False

    def validate(self) -> None:
        if not 0 < self.warmup_epochs < self.epochs:
            raise ConfigError(f"need 0 < warmup_epochs < epochs (got {self.warmup_epochs}, {self.epochs})")
        if not self.lr1 < self.lr0:
            raise ConfigError(f"need lr1 < lr0 (got {self.lr1}, {self.lr0})")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0 (got {self.lam})")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Losses


def truth_pyramid(truth, levels: int, dtype=np.float32) -> list[Tensor]:
    """Downsampled copies of ``truth``; raw arrays are wrapped in ``dtype``."""
    if isinstance(truth, (list, tuple)):
        return list(truth)
    return input_pyramid(truth if isinstance(truth, Tensor) else Tensor(truth, dtype=dtype), levels)


def _paired(outputs: Sequence[Tensor], truth) -> list[tuple[Tensor, Tensor]]:
    truths = truth_pyramid(truth, len(outputs), outputs[0].dtype)
    if len(truths) != len(outputs):
        raise DimensionError(f"{len(outputs)} outputs but {len(truths)} truth scales")
    for k, (y, t) in enumerate(zip(outputs, truths)):
        if y.dims != t.dims:
            raise DimensionError(f"scale {k + 1}: output dims {y.dims} vs truth dims {t.dims}")
    return list(zip(outputs, truths))


def loss_rec(outputs: Sequence[Tensor], truth) -> Tensor:
    """Sum over scales of the mean absolute error."""
    terms = [mean(absolute(sub(y, t))) for y, t in _paired(outputs, truth)]
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return total


def loss_fre(outputs: Sequence[Tensor], truth) -> Tensor:
    """Sum over scales of mean(|Re dF| + |Im dF|), dF the DFT of the difference."""
    total = None
    for y, t in _paired(outputs, truth):
        spec = fft2(sub(y, t))
        term = add(mean(absolute(spec.real)), mean(absolute(spec.imag)))
        total = term if total is None else add(total, term)
    return total


def loss_total(outputs: Sequence[Tensor], truth, lam: float) -> tuple[Tensor, Tensor, Tensor]:
    """Returns (rec + lam * fre, rec, fre)."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    truths = truth_pyramid(truth, len(outputs), outputs[0].dtype)
    rec = loss_rec(outputs, truths)
    fre = loss_fre(outputs, truths)
    return add(rec, scale(fre, lam)), rec, fre


# ---------------------------------------------------------------------------
# Optimisation


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    return cfg.lr1 + 0.5 * (cfg.lr0 - cfg.lr1) * (1 + math.cos(math.pi * epoch / (cfg.epochs - 1)))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def like(cls, params: Sequence[Tensor]) -> AdamState:
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState, lr: float,
              clamp: Sequence[Tensor] = ()) -> None:
    """Bias-corrected Adam update in place; tensors in ``clamp`` are projected onto [0, 1]."""
    b1, b2 = BETAS
    state.t += 1
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + EPS)
        p.data -= step.astype(p.dtype)
    for p in clamp:
        np.clip(p.data, 0.0, 1.0, out=p.data)


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class History:
    rows: list[dict] = field(default_factory=list)

    def write_csv(self, path: str | Path) -> None:
        cols = ["epoch", "lr", "loss_total", "loss_rec", "loss_fre", "mean_train_psnr"]
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(cols)
            for row in self.rows:
                out.writerow([row["epoch"]] + [repr(float(row[c])) for c in cols[1:]])


def _augment(pair: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if rng.random() < 0.5:
        pair = pair[..., ::-1]
    return np.rot90(pair, k=int(rng.integers(4)), axes=(-2, -1)).copy()


def as_pairs(data) -> tuple[np.ndarray, np.ndarray]:
    """Stack (degraded, clean) pairs or DegradationRecords into two N x C x H x W arrays."""
    deg, clean = [], []
    for item in data:
        if hasattr(item, "degraded"):
            deg.append(item.degraded)
            clean.append(item.clean)
        else:
            deg.append(item[0])
            clean.append(item[1])
    if not deg:
        raise ValueError("training data is empty")
    return np.stack(deg).astype(np.float32), np.stack(clean).astype(np.float32)


def train(net: CwpNet, data, cfg: TrainConfig,
          callback: Callable[[int, int, CwpNet], None] | None = None) -> tuple[CwpNet, History]:
    """Train in place.

    Epochs before ``warmup_epochs`` run with all subband weights at one; the
    representations of the last warmup epoch are clustered at the start of
    epoch ``warmup_epochs``, after which the weight matrices are learned.
    ``callback(step, epoch, net)`` runs after every optimiser step.
    """
    cfg.validate()
    degraded, clean = as_pairs(data)
    n = len(degraded)
    rng = np.random.default_rng(cfg.seed)
    params = net.parameters()
    clamp = [w.w for w in net.weight_matrices()]
    state = AdamState.like(params)
    history = History()
    buffer: list[np.ndarray] = []
    step = 0
    for epoch in range(cfg.epochs):
        warmup = epoch < cfg.warmup_epochs
        if epoch == cfg.warmup_epochs:
            reps = np.concatenate(buffer)
            net.cluster = kmeans_fit(reps, net.cfg.num_clusters, seed=cfg.seed)
            log.info("fitted %d clusters on %d representations", net.cfg.num_clusters, len(reps))
            buffer = []
        lr = cosine_lr(epoch, cfg)
        order = rng.permutation(n)
        sums = np.zeros(4)
        for lo in range(0, n, cfg.batch_size):
            idx = np.sort(order[lo : lo + cfg.batch_size])
            x, y = degraded[idx], clean[idx]
            if cfg.augment:
                both = _augment(np.stack([x, y]), rng)
                x, y = both[0], both[1]
            net.zero_grad()
            with Tape() as tape:
                outputs, rep = forward(Tensor(x), net, warmup)
                total, rec, fre = loss_total(outputs, Tensor(y), cfg.lam)
            backward(total, tape)
            adam_step(params, [p.grad for p in params], state, lr, clamp)
            if epoch == cfg.warmup_epochs - 1:
                buffer.append(rep)
            restored = np.clip(outputs[0].data, 0, 1)
            batch_psnr = np.mean([psnr(r, c, 1.0) for r, c in zip(restored, y)])
            sums += len(idx) * np.array([total.item(), rec.item(), fre.item(), batch_psnr])
            step += 1
            if callback is not None:
                callback(step, epoch, net)
        means = sums / n
        history.rows.append({"epoch": epoch, "lr": lr, "loss_total": means[0], "loss_rec": means[1],
                             "loss_fre": means[2], "mean_train_psnr": means[3]})
        log.info("epoch %d lr %.3g loss %.5f psnr %.2f", epoch, lr, means[0], means[3])
    return net, history

"""Central finite-difference oracle for tape gradients.

Tape gradients come from a float32 graph; the oracle re-evaluates the same
function on float64 copies, so the comparison measures the 32-bit gradient
error rather than finite-difference round-off.
"""
from __future__ import annotations

import numpy as np

from cwpnet.tensor import Tape, Tensor, backward, no_record

STEP = 1e-3


def tape_gradients(fn, arrays: dict, module=None) -> dict[str, np.ndarray]:
    leaves = {k: Tensor(np.asarray(v, dtype=np.float32), trainable=True) for k, v in arrays.items()}
    if module is not None:
        module.zero_grad()
    with Tape() as tape:
        loss = fn(leaves, module)
    backward(loss, tape)
    out = {k: t.grad.astype(np.float64) for k, t in leaves.items()}
    if module is not None:
        out.update({f"param:{n}": p.grad.astype(np.float64) for n, p in module.named_parameters()})
    return out


def _float64_targets(arrays: dict, module):
    inputs = {k: Tensor(np.asarray(v, dtype=np.float64), dtype=np.float64) for k, v in arrays.items()}
    mod64 = module.astype(np.float64) if module is not None else None
    targets = dict(inputs)
    if mod64 is not None:
        targets.update({f"param:{n}": p for n, p in mod64.named_parameters()})
    return inputs, mod64, targets


def _evaluate(fn, inputs, mod64) -> float:
    with no_record():
        return float(fn(inputs, mod64).data)


def fd_gradients(fn, arrays: dict, module=None, step: float = STEP, max_entries: int | None = None,
                 rng: np.random.Generator | None = None) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Central differences; returns name -> (flat indices checked, derivative values)."""
    rng = rng or np.random.default_rng(0)
    inputs, mod64, targets = _float64_targets(arrays, module)
    out = {}
    for name, t in targets.items():
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        vals = np.empty(len(idx))
        for i, j in enumerate(idx):
            keep = flat[j]
            flat[j] = keep + step
            up = _evaluate(fn, inputs, mod64)
            flat[j] = keep - step
            down = _evaluate(fn, inputs, mod64)
            flat[j] = keep
            vals[i] = (up - down) / (2 * step)
        out[name] = (idx, vals)
    return out


def relative_errors(fn, arrays: dict, module=None, **kw) -> dict[str, float]:
    """Norm-wise relative error per tensor, ||g_tape - g_fd|| / ||g_fd||.

    Tensors whose true gradient is tiny are measured against the overall
    gradient norm instead, so near-zero gradients do not divide by noise.
    """
    tape = tape_gradients(fn, arrays, module)
    fd = fd_gradients(fn, arrays, module, **kw)
    total = np.sqrt(sum(np.sum(v**2) for _, v in fd.values()))
    errs = {}
    for name, (idx, vals) in fd.items():
        diff = np.linalg.norm(tape[name].reshape(-1)[idx] - vals)
        errs[name] = diff / max(np.linalg.norm(vals), 1e-3 * total, 1e-12)
    return errs


def directional_errors(fn, arrays: dict, module, step: float = STEP, seed: int = 0) -> dict[str, float]:
    """Per parameter tensor, compare directional derivatives along the tape
    gradient and along a random direction with two-sided differences.

    Errors are relative to the tape gradient norm of that tensor (or the
    overall norm when the tensor's gradient vanishes).
    """
    rng = np.random.default_rng(seed)
    tape = tape_gradients(fn, arrays, module)
    inputs, mod64, targets = _float64_targets(arrays, module)
    total = np.sqrt(sum(np.sum(g**2) for g in tape.values()))
    errs = {}
    for name, t in targets.items():
        g = tape[name]
        gnorm = np.linalg.norm(g)
        dirs = [rng.standard_normal(g.shape)]
        if gnorm > 0:
            dirs.append(g / gnorm)
        worst = 0.0
        for v in dirs:
            v = v / np.linalg.norm(v)
            keep = t.data.copy()
            t.data = keep + step * v
            up = _evaluate(fn, inputs, mod64)
            t.data = keep - step * v
            down = _evaluate(fn, inputs, mod64)
            t.data = keep
            fd = (up - down) / (2 * step)
            worst = max(worst, abs(fd - float(np.sum(g * v))) / max(gnorm, 1e-3 * total, 1e-12))
        errs[name] = worst
    return errs

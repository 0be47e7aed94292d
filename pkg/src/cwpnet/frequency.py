"""One-level orthonormal Haar wavelet transform and 2-D discrete Fourier transform.

Subband naming: the second letter refers to the filter applied along rows
(the vertical direction).  For a 2x2 block ``[[a, b], [c, d]]``::

    LL = (a + b + c + d) / 2
    LH = (a + b - c - d) / 2    horizontal-edge detail
    HL = (a - b + c - d) / 2    vertical-edge detail
    HH = (a - b - c + d) / 2

The 4x4 analysis matrix is symmetric and orthogonal, so synthesis uses the
same sign table and each transform's adjoint is the other.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DimensionError, Tensor, getitem, make_op

SUBBANDS = ("ll", "lh", "hl", "hh")

# rows: subband; columns: block position a, b, c, d
_SIGNS = np.array([
    [1, 1, 1, 1],
    [1, 1, -1, -1],
    [1, -1, 1, -1],
    [1, -1, -1, 1],
], dtype=np.int8)
_POS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass
class SubbandSet:
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def __post_init__(self):
        dims = {t.dims for t in self}
        if len(dims) != 1:
            raise DimensionError(f"subbands must share dims, got {sorted(dims)}")

    def __iter__(self):
        return iter((self.ll, self.lh, self.hl, self.hh))

    def __getitem__(self, key: str) -> Tensor:
        return getattr(self, key)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.ll.dims


@dataclass
class Spectrum:
    real: Tensor
    imag: Tensor


def haar_analysis(x: np.ndarray) -> np.ndarray:
    """Plain-array DWT: returns an array stacked as (4, ..., H/2, W/2)."""
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise DimensionError(f"dwt2 needs even H and W, got {h}x{w}; pad the input first")
    blocks = [x[..., i::2, j::2] for i, j in _POS]
    half = x.dtype.type(0.5) if np.issubdtype(x.dtype, np.floating) else 0.5
    out = []
    for row in _SIGNS:
        acc = blocks[0] * row[0]
        for s, blk in zip(row[1:], blocks[1:]):
            acc = acc + blk if s > 0 else acc - blk
        out.append(acc * half)
    return np.stack(out)


def haar_synthesis(bands: np.ndarray) -> np.ndarray:
    """Inverse of :func:`haar_analysis` for a (4, ..., h, w) stack."""
    ll, lh, hl, hh = bands
    h, w = ll.shape[-2:]
    out = np.empty(ll.shape[:-2] + (2 * h, 2 * w), dtype=ll.dtype)
    half = ll.dtype.type(0.5)
    for col, (i, j) in enumerate(_POS):
        s = _SIGNS[:, col]
        out[..., i::2, j::2] = (ll * s[0] + lh * s[1] + hl * s[2] + hh * s[3]) * half
    return out


def dwt2(x: Tensor) -> SubbandSet:
    if x.ndim < 2:
        raise DimensionError(f"dwt2 needs at least 2 axes, got {x.dims}")
    stacked = haar_analysis(x.data)

    def band(k):
        def vjp(g):
            full = np.zeros_like(x.data)
            for (i, j), s in zip(_POS, _SIGNS[k]):
                full[..., i::2, j::2] = g * g.dtype.type(0.5 * s)
            return (full,)

        return make_op(stacked[k], (x,), vjp)

    return SubbandSet(*(band(k) for k in range(4)))


def idwt2(s: SubbandSet) -> Tensor:
    bands = tuple(s)
    dims = {b.dims for b in bands}
    if len(dims) != 1:
        raise DimensionError(f"idwt2 needs equal subband dims, got {sorted(dims)}")
    out = haar_synthesis(np.stack([b.data for b in bands]))
    return make_op(out, bands, lambda g: tuple(haar_analysis(g)))


# ---------------------------------------------------------------------------
# Fourier transform


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def _fft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if not _is_pow2(n):
        return x @ dft_matrix(n).T
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.int64)
    for i in range(n):
        rev[i] = int(format(i, f"0{bits}b")[::-1], 2) if bits else 0
    y = x[..., rev].astype(np.complex128)
    lead = y.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        y = y.reshape(lead + (n // size, size))
        even = y[..., :half]
        odd = y[..., half:] * tw
        y = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return y.reshape(lead + (n,))


def fft2_array(x: np.ndarray) -> np.ndarray:
    """Complex 2-D DFT over the last two axes (radix-2 where possible)."""
    y = _fft_last(np.asarray(x, dtype=np.complex128))
    return np.swapaxes(_fft_last(np.swapaxes(y, -1, -2)), -1, -2)


def fft2(x: Tensor) -> Spectrum:
    if x.ndim != 4:
        raise DimensionError(f"fft2 expects NCHW, got {x.dims}")
    spec = fft2_array(x.data)
    stacked = np.stack([spec.real, spec.imag]).astype(x.dtype)

    def vjp(g):
        # adjoint of a real-input DFT: Re(DFT(g_re - i g_im))
        return (fft2_array(g[0] - 1j * g[1]).real.astype(x.dtype),)

    both = make_op(stacked, (x,), vjp)
    return Spectrum(getitem(both, 0), getitem(both, 1))

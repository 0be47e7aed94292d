"""Binary PPM/PGM (P6/P5, maxval 255) reading and writing.

Images are float arrays on [0, 1]: 3 x H x W for colour, H x W for grey.
Writing quantises with round(v * 255).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


class PpmError(ValueError):
    pass


def _tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out = []
    pos = 0
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise PpmError(f"truncated header at byte {pos}")
        if buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        out.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise PpmError(f"missing whitespace after header at byte {pos}")
    return out, pos + 1


def decode_ppm(buf: bytes) -> np.ndarray:
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise PpmError(f"bad magic {magic!r} at byte 0 (expected P5 or P6)")
    tokens, offset = _tokens(buf[2:], 3)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise PpmError(f"non-numeric header field in {tokens!r}") from None
    if maxval != 255:
        raise PpmError(f"maxval {maxval} not supported (only 255)")
    if width < 1 or height < 1:
        raise PpmError(f"invalid size {width}x{height}")
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    raster = buf[offset : offset + need]
    if len(raster) < need:
        raise PpmError(f"truncated payload: expected {need} bytes from byte {offset}, got {len(raster)}")
    arr = np.frombuffer(raster, dtype=np.uint8).astype(np.float32) / 255.0
    if channels == 3:
        return arr.reshape(height, width, 3).transpose(2, 0, 1).copy()
    return arr.reshape(height, width)


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    try:
        return decode_ppm(data)
    except PpmError as exc:
        raise PpmError(f"{path}: {exc}") from None


def quantize(img) -> np.ndarray:
    return np.rint(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255).astype(np.uint8)


def encode_ppm(img) -> bytes:
    a = np.asarray(img)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    if a.ndim == 2:
        h, w = a.shape
        return f"P5\n{w} {h}\n255\n".encode() + quantize(a).tobytes()
    if a.ndim == 3 and a.shape[0] == 3:
        _, h, w = a.shape
        return f"P6\n{w} {h}\n255\n".encode() + quantize(a).transpose(1, 2, 0).tobytes()
    raise PpmError(f"cannot encode image of shape {a.shape}")


def write_ppm(img, path: str | Path) -> None:
    Path(path).write_bytes(encode_ppm(img))

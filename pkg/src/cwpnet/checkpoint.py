"""Binary checkpoint format.

Layout, all integers unsigned 32-bit little-endian::

    b"CWPN" | version
    tensor table:  count, then per tensor
                   name length | UTF-8 name | rank | dims... | float32 LE payload
    centroids:     rows | cols | float64 LE payload   (rows == 0 when unfitted)
    W matrices:    count, then per matrix rows | cols | float32 LE payload
    config echo:   byte length | UTF-8 key=value text
"""
from __future__ import annotations

import struct
from dataclasses import fields
from pathlib import Path

import numpy as np

from .clustering import ClusterModel
from .model import CwpNet, ModelConfig

MAGIC = b"CWPN"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


def _is_weight_matrix(name: str) -> bool:
    return name.startswith("wpb.") and name.endswith(".weights.w")


def _u32(v: int) -> bytes:
    return _U32.pack(v)


def _array_block(a: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(a, dtype=dtype).tobytes()


def encode_checkpoint(net: CwpNet, echo: str = "") -> bytes:
    out = [MAGIC, _u32(VERSION)]
    table = [(n, p) for n, p in net.named_parameters() if not _is_weight_matrix(n)]
    out.append(_u32(len(table)))
    for name, p in table:
        raw = name.encode("utf-8")
        out += [_u32(len(raw)), raw, _u32(p.data.ndim)]
        out += [_u32(d) for d in p.data.shape]
        out.append(_array_block(p.data, "<f4"))

    cent = net.cluster.centroids
    if cent is None:
        out += [_u32(0), _u32(0)]
    else:
        out += [_u32(cent.shape[0]), _u32(cent.shape[1]), _array_block(cent, "<f8")]

    mats = [w.w.data for w in net.weight_matrices()]
    out.append(_u32(len(mats)))
    for m in mats:
        out += [_u32(m.shape[0]), _u32(m.shape[1]), _array_block(m, "<f4")]

    text = model_echo(net.cfg) + echo
    raw = text.encode("utf-8")
    out += [_u32(len(raw)), raw]
    return b"".join(out)


def model_echo(cfg: ModelConfig) -> str:
    return "".join(f"model.{k}={v}\n" for k, v in cfg.to_dict().items())


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint reading {what} at byte {self.pos}")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def array(self, shape: tuple[int, ...], dtype: str, what: str) -> np.ndarray:
        size = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
        return np.frombuffer(self.take(size, what), dtype=dtype).reshape(shape)


def _model_config_from_echo(text: str) -> ModelConfig:
    cfg = ModelConfig()
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(ModelConfig)}
    for line in text.splitlines():
        key, _, value = line.partition("=")
        if key.startswith("model."):
            name = key[len("model."):]
            if name not in types:
                raise CheckpointError(f"unknown model key {name!r} in config echo")
            setattr(cfg, name, types[name](value))
    return cfg


def decode_checkpoint(buf: bytes) -> tuple[CwpNet, str]:
    """Rebuild the network; returns (net, config echo text)."""
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic at byte 0 (expected CWPN)")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")

    tensors = {}
    for _ in range(r.u32("tensor count")):
        name = r.take(r.u32("name length"), "name").decode("utf-8")
        rank = r.u32(f"rank of {name}")
        dims = tuple(r.u32(f"dims of {name}") for _ in range(rank))
        tensors[name] = r.array(dims, "<f4", f"payload of {name}")

    rows, cols = r.u32("centroid rows"), r.u32("centroid cols")
    centroids = r.array((rows, cols), "<f8", "centroids").astype(np.float64) if rows else None

    mats = []
    for i in range(r.u32("W count")):
        shape = (r.u32(f"W{i} rows"), r.u32(f"W{i} cols"))
        mats.append(r.array(shape, "<f4", f"W{i} payload"))
    echo = r.take(r.u32("echo length"), "echo").decode("utf-8")
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after checkpoint")

    cfg = _model_config_from_echo(echo)
    try:
        net = CwpNet(cfg)
    except ValueError as exc:
        raise CheckpointError(f"invalid model config in checkpoint: {exc}") from None
    table = [(n, p) for n, p in net.named_parameters() if not _is_weight_matrix(n)]
    if [n for n, _ in table] != list(tensors):
        raise CheckpointError("tensor table does not match the model layout")
    for name, p in table:
        if tensors[name].shape != p.data.shape:
            raise CheckpointError(f"{name}: shape {tensors[name].shape} != {p.data.shape}")
        p.data = tensors[name].astype(np.float32)
    wms = net.weight_matrices()
    if len(mats) != len(wms):
        raise CheckpointError(f"expected {len(wms)} W matrices, found {len(mats)}")
    for wm, m in zip(wms, mats):
        if m.shape != wm.w.data.shape:
            raise CheckpointError(f"W shape {m.shape} != {wm.w.data.shape}")
        wm.w.data = m.astype(np.float32)
    if centroids is not None:
        net.cluster = ClusterModel(k=centroids.shape[0], seed=cfg.seed, centroids=centroids)
    for p in net.parameters():
        p.grad = np.zeros_like(p.data)
    return net, echo


def save_checkpoint(net: CwpNet, path: str | Path, echo: str = "") -> None:
    Path(path).write_bytes(encode_checkpoint(net, echo))


def load_checkpoint(path: str | Path) -> tuple[CwpNet, str]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from None
    return decode_checkpoint(buf)

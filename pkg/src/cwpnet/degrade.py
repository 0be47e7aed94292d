"""Synthetic degradations (noise, rain, haze, low light, motion blur) and dataset assembly.

Images are float arrays of shape 3 x H x W on [0, 1].  Noise levels follow
the 0-255 convention and are divided by 255 at use.
"""
from __future__ import annotations

import shlex
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imageio import read_ppm


@dataclass(frozen=True)
class Noise:
    sigma: float = 25.0
    kind = "noise"


@dataclass(frozen=True)
class Rain:
    density: float = 4.0  # streaks per 1000 pixels
    angle: float = 90.0  # degrees from the horizontal axis; 90 = vertical
    length: float = 12.0
    intensity: float = 0.6
    width: float = 0.7  # std of the Gaussian cross-profile in pixels
    kind = "rain"


@dataclass(frozen=True)
class Haze:
    t: float = 0.5
    A: float = 0.8
    kind = "haze"


@dataclass(frozen=True)
class LowLight:
    gamma: float = 3.0
    kind = "lowlight"


@dataclass(frozen=True)
class Blur:
    kernel_id: int = 0
    size: int = 0  # 0 keeps the bundled kernel's own size
    kind = "blur"


DegradationKind = Union[Noise, Rain, Haze, LowLight, Blur]
KINDS = {cls.kind: cls for cls in (Noise, Rain, Haze, LowLight, Blur)}

PRESETS: dict[str, DegradationKind] = {
    "noise15": Noise(15.0),
    "noise25": Noise(25.0),
    "noise50": Noise(50.0),
    "rain": Rain(),
    "rain_heavy": Rain(density=12.0, length=16.0, intensity=0.8, width=1.0),
    "haze": Haze(0.5, 0.8),
    "lowlight": LowLight(3.0),
    "blur": Blur(3),
}


def kind_params(kind: DegradationKind) -> dict:
    return asdict(kind)


def _clip(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


def apply_noise(img, sigma: float, seed: int) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    img = np.asarray(img, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return _clip(img + rng.normal(0.0, sigma / 255.0, size=img.shape))


def rain_layer(shape: tuple[int, int], params: Rain, seed: int) -> np.ndarray:
    """Additive streak map: oriented segments with a Gaussian cross-profile."""
    h, w = shape
    rng = np.random.default_rng(seed)
    count = int(round(params.density * h * w / 1000.0))
    layer = np.zeros((h, w))
    if count == 0:
        return layer
    theta = np.deg2rad(params.angle)
    # image rows grow downwards; a positive angle tilts the streak upwards-right
    direction = np.array([-np.sin(theta), np.cos(theta)])
    normal = np.array([direction[1], -direction[0]])
    half = params.length / 2
    reach = int(np.ceil(half + 3 * params.width)) + 1
    for _ in range(count):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        lengths = half * rng.uniform(0.6, 1.0)
        strength = params.intensity * rng.uniform(0.5, 1.0)
        r0, r1 = max(int(cy) - reach, 0), min(int(cy) + reach + 1, h)
        c0, c1 = max(int(cx) - reach, 0), min(int(cx) + reach + 1, w)
        if r0 >= r1 or c0 >= c1:
            continue
        yy, xx = np.mgrid[r0:r1, c0:c1]
        dy, dx = yy + 0.5 - cy, xx + 0.5 - cx
        along = dy * direction[0] + dx * direction[1]
        across = dy * normal[0] + dx * normal[1]
        outside = np.maximum(np.abs(along) - lengths, 0.0)
        dist2 = across**2 + outside**2
        layer[r0:r1, c0:c1] += strength * np.exp(-dist2 / (2 * params.width**2))
    return layer


def apply_rain(img, params: Rain, seed: int, clip: bool = True) -> np.ndarray:
    if params.density < 0:
        raise ValueError("rain density must be >= 0")
    img = np.asarray(img, dtype=np.float64)
    out = img + rain_layer(img.shape[-2:], params, seed)
    return _clip(out) if clip else out


def apply_haze(img, t: float, A: float) -> np.ndarray:
    if not (0 <= t <= 1 and 0 <= A <= 1):
        raise ValueError("haze needs t and A in [0, 1]")
    img = np.asarray(img, dtype=np.float64)
    return img * t + A * (1 - t)


def apply_lowlight(img, gamma: float) -> np.ndarray:
    if gamma < 1:
        raise ValueError("low-light gamma must be >= 1")
    return np.power(np.asarray(img, dtype=np.float64), gamma)


def motion_kernel(length: int, angle: float, supersample: int = 8) -> np.ndarray:
    """Normalised linear-motion kernel of odd size ``length``."""
    if length % 2 == 0:
        raise ValueError("motion kernel length must be odd")
    k = np.zeros((length, length))
    c = (length - 1) / 2
    theta = np.deg2rad(angle)
    ts = np.linspace(-c, c, length * supersample)
    rows = np.clip(np.rint(c - ts * np.sin(theta)).astype(int), 0, length - 1)
    cols = np.clip(np.rint(c + ts * np.cos(theta)).astype(int), 0, length - 1)
    np.add.at(k, (rows, cols), 1.0)
    return k / k.sum()


# (length, angle) pairs for the eight bundled kernels
_KERNEL_SPECS = ((5, 0.0), (7, 45.0), (9, 90.0), (9, 135.0), (11, 20.0), (11, 70.0), (13, 110.0), (15, 160.0))
BLUR_KERNELS = tuple(motion_kernel(n, a) for n, a in _KERNEL_SPECS)


def blur_kernel(spec: Blur) -> np.ndarray:
    if not 0 <= spec.kernel_id < len(BLUR_KERNELS):
        raise ValueError(f"kernel_id must be in [0, {len(BLUR_KERNELS)})")
    k = BLUR_KERNELS[spec.kernel_id]
    if spec.size and spec.size != k.shape[0]:
        n, a = _KERNEL_SPECS[spec.kernel_id]
        k = motion_kernel(spec.size, a)
    return k


def apply_blur(img, kernel) -> np.ndarray:
    """Per-channel 2-D convolution with reflective boundary."""
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise ValueError(f"blur kernel must be square with odd size, got {k.shape}")
    if abs(k.sum() - 1.0) > 1e-6:
        raise ValueError(f"blur kernel must sum to 1 (sums to {k.sum():.6g})")
    img = np.asarray(img, dtype=np.float64)
    r = k.shape[0] // 2
    pad = [(0, 0)] * (img.ndim - 2) + [(r, r), (r, r)]
    padded = np.pad(img, pad, mode="reflect")
    win = sliding_window_view(padded, k.shape, axis=(-2, -1))
    return np.einsum("...ij,ij->...", win, k[::-1, ::-1])


def apply(img, kind: DegradationKind, seed: int = 0) -> np.ndarray:
    """Dispatch one degradation and clamp the result to [0, 1]."""
    if isinstance(kind, Noise):
        out = apply_noise(img, kind.sigma, seed)
    elif isinstance(kind, Rain):
        out = apply_rain(img, kind, seed)
    elif isinstance(kind, Haze):
        out = apply_haze(img, kind.t, kind.A)
    elif isinstance(kind, LowLight):
        out = apply_lowlight(img, kind.gamma)
    elif isinstance(kind, Blur):
        out = apply_blur(img, blur_kernel(kind))
    else:
        raise TypeError(f"unknown degradation {kind!r}")
    return _clip(out)


# ---------------------------------------------------------------------------
# Synthetic clean scenes


def synthetic_scene(size: int = 64, seed: int = 0) -> np.ndarray:
    """Deterministic colour test image: smooth shading, a few flat shapes, mild texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    img = np.empty((3, size, size))
    for c in range(3):
        a, b, d = rng.uniform(-0.3, 0.3, 3)
        img[c] = 0.45 + a * xx + b * yy + d * np.sin(2 * np.pi * (xx + yy) * rng.uniform(0.5, 1.5))
    for _ in range(int(rng.integers(3, 6))):
        color = rng.uniform(0.05, 0.95, 3)
        cy, cx = rng.uniform(0.1, 0.9, 2)
        if rng.random() < 0.5:
            rad = rng.uniform(0.08, 0.25)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < rad**2
        else:
            hy, hx = rng.uniform(0.06, 0.2, 2)
            mask = (np.abs(yy - cy) < hy) & (np.abs(xx - cx) < hx)
        img[:, mask] = color[:, None]
    # low-amplitude 1/f texture
    freq = np.fft.fftfreq(size)
    f = np.sqrt(freq[:, None] ** 2 + freq[None, :] ** 2)
    f[0, 0] = 1.0
    for c in range(3):
        spectrum = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / f
        tex = np.fft.ifft2(spectrum).real
        img[c] += 0.04 * tex / (tex.std() + 1e-12)
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Manifests and datasets


@dataclass
class DegradationRecord:
    clean: np.ndarray
    degraded: np.ndarray
    kind: DegradationKind
    source: str
    seed: int = 0


@dataclass
class ManifestEntry:
    clean_path: str
    kind: DegradationKind
    seed: int


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    regime: str = "balanced"
    base_dir: Path = field(default_factory=Path)


class ManifestError(ValueError):
    pass


def parse_kind(name: str, params: dict[str, str]) -> DegradationKind:
    if name in PRESETS and not params:
        return PRESETS[name]
    cls = KINDS.get(name)
    if cls is None:
        raise ManifestError(f"unknown degradation kind {name!r}")
    fields = cls.__dataclass_fields__
    kwargs = {}
    for key, raw in params.items():
        if key not in fields:
            raise ManifestError(f"{name}: unknown parameter {key!r}")
        value = float(raw)
        kwargs[key] = int(value) if fields[key].type == "int" else value
    return cls(**kwargs)


def format_entry(entry: ManifestEntry) -> str:
    params = [f"{k}={v!r}" for k, v in kind_params(entry.kind).items()]
    return " ".join([shlex.quote(entry.clean_path), entry.kind.kind, *params, str(entry.seed)])


def parse_manifest(text: str, base_dir: str | Path = ".") -> DatasetManifest:
    """One record per line: ``<clean_path> <kind> <key=value ...> <seed>``.

    Blank lines and ``#`` comments are ignored; ``# regime: imbalanced``
    sets the regime tag (default balanced).
    """
    entries = []
    regime = "balanced"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("regime:"):
                regime = body.split(":", 1)[1].strip()
                if regime not in ("balanced", "imbalanced"):
                    raise ManifestError(f"line {lineno}: unknown regime {regime!r}")
            continue
        if not line:
            continue
        parts = shlex.split(line)
        if len(parts) < 3:
            raise ManifestError(f"line {lineno}: expected '<clean_path> <kind> [key=value ...] <seed>'")
        path, name, *mid, seed = parts
        params = {}
        for tok in mid:
            if "=" not in tok:
                raise ManifestError(f"line {lineno}: parameter {tok!r} is not key=value")
            k, v = tok.split("=", 1)
            params[k] = v
        try:
            seed_val = int(seed)
        except ValueError:
            raise ManifestError(f"line {lineno}: seed {seed!r} is not an integer") from None
        try:
            kind = parse_kind(name, params)
        except (ManifestError, ValueError, TypeError) as exc:
            raise ManifestError(f"line {lineno}: {exc}") from None
        entries.append(ManifestEntry(path, kind, seed_val))
    return DatasetManifest(entries, regime, Path(base_dir))


def read_manifest(path: str | Path) -> DatasetManifest:
    p = Path(path)
    return parse_manifest(p.read_text(), p.parent)


def make_manifest(clean_paths: list[str], kinds: list[DegradationKind], regime: str = "balanced",
                  seed: int = 0) -> DatasetManifest:
    """Balanced: every kind on every clean source.  Imbalanced: disjoint pools per kind."""
    entries = []
    if regime == "balanced":
        for i, path in enumerate(clean_paths):
            for j, kind in enumerate(kinds):
                entries.append(ManifestEntry(path, kind, seed + i * len(kinds) + j))
    elif regime == "imbalanced":
        for i, path in enumerate(clean_paths):
            entries.append(ManifestEntry(path, kinds[i % len(kinds)], seed + i))
    else:
        raise ManifestError(f"unknown regime {regime!r}")
    return DatasetManifest(entries, regime)


def load_clean(path: str, base_dir: Path = Path(".")) -> np.ndarray:
    """Read a clean image; ``synthetic:<seed>[:<size>]`` yields a generated scene."""
    if path.startswith("synthetic:"):
        parts = path.split(":")
        size = int(parts[2]) if len(parts) > 2 else 64
        return synthetic_scene(size, int(parts[1]))
    p = Path(path)
    if not p.is_absolute():
        p = base_dir / p
    try:
        img = read_ppm(p)
    except OSError as exc:
        raise ManifestError(f"cannot read clean image {p}: {exc.strerror or exc}") from None
    return img if img.ndim == 3 else np.repeat(img[None], 3, axis=0)


def check_regime(manifest: DatasetManifest) -> None:
    pools: dict[str, set[str]] = {}
    for e in manifest.entries:
        pools.setdefault(e.kind.kind, set()).add(e.clean_path)
    if manifest.regime == "balanced":
        if len({frozenset(p) for p in pools.values()}) > 1:
            raise ManifestError("balanced regime needs the same clean pool for every kind")
    else:
        seen: set[str] = set()
        for pool in pools.values():
            if seen & pool:
                raise ManifestError(f"imbalanced regime shares clean images across kinds: {sorted(seen & pool)}")
            seen |= pool


def build_dataset(manifest: DatasetManifest) -> list[DegradationRecord]:
    check_regime(manifest)
    cache: dict[str, np.ndarray] = {}
    records = []
    for e in manifest.entries:
        if e.clean_path not in cache:
            cache[e.clean_path] = load_clean(e.clean_path, manifest.base_dir)
        clean = cache[e.clean_path]
        records.append(DegradationRecord(clean, apply(clean, e.kind, e.seed), e.kind, e.clean_path, e.seed))
    return records

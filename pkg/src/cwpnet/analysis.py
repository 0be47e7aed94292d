"""Per-subband distortion analysis of degraded images."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .frequency import SUBBANDS, haar_analysis
from .metrics import psnr

MILD_THRESHOLD_DB = 30.0
# one orthonormal Haar level doubles the amplitude of a constant signal in LL
HAAR_GAIN = 2.0


@dataclass
class SubbandReport:
    psnr: dict[str, float]

    def classification(self) -> dict[str, str]:
        return {k: ("mild" if v > MILD_THRESHOLD_DB else "severe") for k, v in self.psnr.items()}

    @property
    def mild(self) -> frozenset[str]:
        return frozenset(k for k, c in self.classification().items() if c == "mild")

    @property
    def worst(self) -> str:
        return min(self.psnr, key=self.psnr.get)

    def lines(self) -> list[str]:
        cls = self.classification()
        return [f"{k.upper()}: {cls[k]}, {format_db(v)} dB" for k, v in self.psnr.items()]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["subband", "psnr_db", "class"])
            for k, cls in self.classification().items():
                out.writerow([k.upper(), format_db(self.psnr[k]), cls])


def format_db(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.4f}"


def subband_distortion(clean, degraded, peak: float = 1.0) -> SubbandReport:
    """PSNR of each Haar subband of ``degraded`` against the same subband of ``clean``."""
    c = np.asarray(clean, dtype=np.float64)
    d = np.asarray(degraded, dtype=np.float64)
    if c.shape != d.shape:
        raise ValueError(f"dims differ {c.shape} vs {d.shape}")
    bc, bd = haar_analysis(c), haar_analysis(d)
    return SubbandReport({name: psnr(bc[i], bd[i], peak * HAAR_GAIN) for i, name in enumerate(SUBBANDS)})

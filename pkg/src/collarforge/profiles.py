"""Smooth one-dimensional profiles: the cutoff step and the collar stretch."""

from dataclasses import dataclass

import numpy as np

from collarforge.errors import InputError


def smooth_step(x: np.ndarray) -> np.ndarray:
    """
    The C^∞ step built from exp(-1/x): 0 for x <= 0, 1 for x >= 1 and strictly
    increasing in between.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    left = np.where(x > 0.0, x, 1.0)
    right = np.where(x < 1.0, 1.0 - x, 1.0)
    a = np.where(x > 0.0, np.exp(-1.0 / left), 0.0)
    b = np.where(x < 1.0, np.exp(-1.0 / right), 0.0)
    return a / (a + b)


@dataclass(frozen=True, kw_only=True)
class CutoffProfile:
    """χ(s) = 1 on (-∞, s0], 0 on [s1, ∞), smooth and decreasing in between."""

    s0: float
    s1: float

    def __post_init__(self):
        if not 0.0 < self.s0 < self.s1:
            raise InputError(f"cutoff needs 0 < s0 < s1, got {self.s0}, {self.s1}")

    def __call__(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return smooth_step((self.s1 - s) / (self.s1 - self.s0))

    def scaled(self, factor: float) -> CutoffProfile:
        return CutoffProfile(s0=self.s0 * factor, s1=self.s1 * factor)

    def to_document(self) -> dict[str, float]:
        return {"s0": self.s0, "s1": self.s1}


@dataclass(frozen=True, kw_only=True)
class StretchMap:
    """φ(r) = r / (1 - r/r2), a diffeomorphism from [0, r2) onto [0, ∞)."""

    r2: float

    def __post_init__(self):
        if self.r2 <= 0:
            raise InputError("stretch map needs r2 > 0")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(r < self.r2, r / (1.0 - r / self.r2), np.inf)

    def inverse(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return s / (1.0 + s / self.r2)

    def derivative(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return 1.0 / (1.0 - r / self.r2) ** 2

"""Footprint resampling kernels.

The cosine kernels are fixed four-decimal reference tables, whose weights are
proportional to ``cos(pi / (3h) * distance)`` with the rounding balanced so
each table sums to exactly one.  The unrounded profile is available from
:func:`analytic_cosine_weights`; it differs from the tables by up to 2.4e-4
(the 7x7 center).  The uniform kernel is the flat comparison baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from regsynth.grid import SUPPORTED_HALF_WIDTHS

SHAPES = ("cosine", "uniform")


@dataclass(frozen=True, eq=False)
class ResamplingKernel:
    half_width: int
    weights: np.ndarray
    shape: str = "cosine"

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        side = 2 * self.half_width + 1
        if w.shape != (side, side):
            raise ValueError(f"kernel weights must be {side}x{side}, got {w.shape}")
        if not np.all(w > 0):
            raise ValueError("kernel weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"kernel weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return 2 * self.half_width + 1

    def weight(self, dr: int, dc: int) -> float:
        h = self.half_width
        return float(self.weights[dr + h, dc + h])

    def offsets(self):
        """(dr, dc) pairs in kernel row-major order."""
        h = self.half_width
        return [(dr, dc) for dr in range(-h, h + 1) for dc in range(-h, h + 1)]


def _check_half_width(half_width) -> int:
    if half_width not in SUPPORTED_HALF_WIDTHS:
        raise ValueError(f"unsupported kernel half width {half_width!r}; expected one of {SUPPORTED_HALF_WIDTHS}")
    return int(half_width)


# upper-left quadrant (row-major, center last) of each reference table
_COSINE_QUADRANTS = {
    1: [[0.0267, 0.1489],
        [0.1489, 0.2976]],
    2: [[0.0069, 0.0302, 0.0388],
        [0.0302, 0.0573, 0.0672],
        [0.0388, 0.0672, 0.0776]],
    3: [[0.0032, 0.0111, 0.0163, 0.0181],
        [0.0111, 0.0199, 0.0257, 0.0277],
        [0.0163, 0.0257, 0.0318, 0.0340],
        [0.0181, 0.0277, 0.0340, 0.0364]],
}


def _unfold(quadrant) -> np.ndarray:
    q = np.array(quadrant, dtype=np.float64)
    top = np.hstack([q, q[:, -2::-1]])
    return np.vstack([top, top[-2::-1]])


def analytic_cosine_weights(half_width: int) -> np.ndarray:
    """Unrounded cosine profile ``cos(pi / (3h) * distance)``, normalized to sum one."""
    h = _check_half_width(half_width)
    angle = math.pi / (3 * h)
    off = np.arange(-h, h + 1, dtype=np.float64)
    dist = np.sqrt(off[:, None] ** 2 + off[None, :] ** 2)
    raw = np.cos(angle * dist)
    return raw / raw.sum()


def cosine_kernel(half_width: int) -> ResamplingKernel:
    h = _check_half_width(half_width)
    return ResamplingKernel(h, _unfold(_COSINE_QUADRANTS[h]), "cosine")


def uniform_kernel(half_width: int) -> ResamplingKernel:
    h = _check_half_width(half_width)
    side = 2 * h + 1
    return ResamplingKernel(h, np.full((side, side), 1.0 / side**2), "uniform")


def make_kernel(half_width: int, shape: str = "cosine") -> ResamplingKernel:
    if shape == "cosine":
        return cosine_kernel(half_width)
    if shape == "uniform":
        return uniform_kernel(half_width)
    raise ValueError(f"unknown kernel shape {shape!r}; expected one of {SHAPES}")


def half_width_from_size(size: int) -> int:
    """Map a CLI kernel size (3, 5, 7) to its half width."""
    if size not in (3, 5, 7):
        raise ValueError(f"kernel size must be 3, 5 or 7, got {size}")
    return (size - 1) // 2

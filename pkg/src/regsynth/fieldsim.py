"""Synthetic truth fields.

A standard-Gaussian field is simulated pixel by pixel in raster order, each
pixel conditioned on every earlier pixel closer than the variogram range.
Pixel values are then mapped through the normal CDF and the inverse Gamma
CDF to give Gamma-distributed marginals with the same rank structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from regsynth.errors import NumericalError
from regsynth.grid import ImageGrid
from regsynth.rng import RngSpec
from regsynth.special import gamma_ppf_from_normal

JITTER_START = 1e-10
JITTER_MAX = 1e-6


@dataclass(frozen=True)
class VariogramSpec:
    range: float

    def __post_init__(self):
        if not (math.isfinite(self.range) and self.range > 0):
            raise ValueError(f"variogram range must be positive and finite, got {self.range}")


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        for name in ("shape", "scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"Gamma {name} must be positive and finite, got {v}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale**2

    @property
    def skewness(self) -> float:
        return 2.0 / math.sqrt(self.shape)


def spherical_variogram(d, v: VariogramSpec):
    """Spherical model normalized to a unit sill; scalar or array ``d``."""
    d_arr = np.asarray(d, dtype=np.float64)
    if np.any(d_arr < 0) or np.any(np.isnan(d_arr)):
        raise ValueError("distance must be non-negative")
    t = d_arr / v.range
    out = np.where(d_arr >= v.range, 1.0, 1.5 * t - 0.5 * t**3)
    return float(out) if out.ndim == 0 else out


def pixel_correlation(d, v: VariogramSpec):
    """Correlation of two unit-variance pixels at distance ``d``."""
    out = 1.0 - np.asarray(spherical_variogram(d, v))
    return float(out) if out.ndim == 0 else out


def _neighbor_offsets(radius: float):
    """Raster-earlier offsets (dr, dc) with distance strictly below ``radius``."""
    k = int(math.ceil(radius))
    out = []
    for dr in range(-k, 1):
        for dc in range(-k, k + 1):
            if dr == 0 and dc >= 0:
                break
            if dr * dr + dc * dc < radius * radius:
                out.append((dr, dc))
    return out, k


def _conditional_weights(offsets, v: VariogramSpec):
    """Kriging weights and conditional variance for a neighbor pattern."""
    pts = np.asarray(offsets, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    cov_nn = pixel_correlation(np.sqrt((diff**2).sum(-1)), v)
    cov_nz = pixel_correlation(np.sqrt((pts**2).sum(-1)), v)
    jitter = 0.0
    while True:
        try:
            chol = np.linalg.cholesky(cov_nn + jitter * np.eye(len(pts)))
            break
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise NumericalError(
                    f"neighbor covariance of {len(pts)} pixels not positive definite "
                    f"even with jitter {JITTER_MAX:g}"
                ) from None
    tmp = np.linalg.solve(chol, cov_nz)
    weights = np.linalg.solve(chol.T, tmp)
    var = 1.0 - float(cov_nz @ weights)
    if not 0.0 < var <= 1.0:
        raise NumericalError(f"conditional variance {var!r} outside (0, 1]")
    return weights, var


def simulate_gaussian_field(rows: int, cols: int, v: VariogramSpec, rng: RngSpec) -> ImageGrid:
    """Sequential Gaussian simulation with standard-normal marginals.

    Neighbor patterns are cached by how far the pixel sits from the top,
    left and right borders (clipped at the search radius), so interior
    pixels share a single factorization.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"field dimensions must be positive, got {rows}x{cols}")
    offsets, k = _neighbor_offsets(v.range)
    z = rng.standard_normal(rows * cols)
    y = np.empty(rows * cols)
    cache = {}
    for r in range(rows):
        top = min(r, k)
        for c in range(cols):
            key = (top, min(c, k), min(cols - 1 - c, k))
            plan = cache.get(key)
            if plan is None:
                valid = [(dr, dc) for dr, dc in offsets if r + dr >= 0 and 0 <= c + dc < cols]
                if valid:
                    w, var = _conditional_weights(valid, v)
                    delta = np.array([dr * cols + dc for dr, dc in valid], dtype=np.int64)
                else:
                    w, var, delta = None, 1.0, None
                plan = (w, math.sqrt(var), delta)
                cache[key] = plan
            w, sd, delta = plan
            idx = r * cols + c
            mean = 0.0 if w is None else float(w @ y[idx + delta])
            y[idx] = mean + sd * z[idx]
    return ImageGrid(y.reshape(rows, cols), kind="field")


def gaussian_to_gamma(z, g: GammaParams):
    """Map standard-normal scores to Gamma(shape, scale) quantiles."""
    out = gamma_ppf_from_normal(z, g.shape, g.scale)
    return float(out) if np.ndim(out) == 0 else out


def simulate_field(rows: int, cols: int, v: VariogramSpec, g: GammaParams, rng: RngSpec) -> ImageGrid:
    gauss = simulate_gaussian_field(rows, cols, v, rng)
    return ImageGrid(gaussian_to_gamma(gauss.values, g), kind="field")

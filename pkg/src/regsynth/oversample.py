"""Oversampled observations from a truth field.

Each observation is the kernel-weighted average of its footprint plus one
independent Gaussian draw per footprint element, with standard deviation
``weight * noise_sd``.  Draws are consumed observation by observation in
raster order and, within a footprint, in kernel row-major order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from regsynth.design import SparseDesign, build_design
from regsynth.fieldsim import GammaParams
from regsynth.grid import ImageGrid
from regsynth.kernels import ResamplingKernel
from regsynth.rng import RngSpec


@dataclass(frozen=True)
class NoiseModel:
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"noise sd must be finite and non-negative, got {self.sigma}")

    @classmethod
    def from_snr(cls, g: GammaParams, snr_value: float) -> "NoiseModel":
        if not snr_value > 0:
            raise ValueError("SNR must be positive")
        return cls(math.sqrt(g.variance / snr_value))


class InfiniteSNR(ValueError):
    """Raised by :func:`snr` when the noise scale is zero."""


def snr(g: GammaParams, noise: NoiseModel) -> float:
    """Field variance over squared noise scale."""
    if noise.sigma == 0:
        raise InfiniteSNR("noise sd is zero; the signal-to-noise ratio is infinite")
    return g.variance / noise.sigma**2


def noise_vector(d: SparseDesign, noise: NoiseModel, rng: RngSpec) -> np.ndarray:
    """Per-observation noise sums drawn element by element."""
    if noise.sigma == 0:
        return np.zeros(d.n)
    z = rng.standard_normal(d.nnz)
    return np.add.reduceat(z * d.data * noise.sigma, d.indptr[:-1])


def oversample(
    field: ImageGrid,
    kernel: ResamplingKernel,
    noise: NoiseModel,
    rng: RngSpec,
    design: SparseDesign | None = None,
) -> ImageGrid:
    if field.kind != "field":
        raise ValueError(f"oversample expects a field grid, got kind={field.kind!r}")
    if design is None:
        design = build_design(field.rows, field.cols, kernel)
    y = design.matvec(field.flat()) + noise_vector(design, noise, rng)
    return ImageGrid(y.reshape(design.obs_shape), kind="observations", kernel_half_width=kernel.half_width)

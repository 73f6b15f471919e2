"""Super-resolution of oversampled images by regression decomposition and synthesis."""

from regsynth.design import SparseDesign, build_design, col_support, row_support
from regsynth.errors import FormatError, NumericalError, RegsynthError
from regsynth.fieldsim import (
    GammaParams,
    VariogramSpec,
    gaussian_to_gamma,
    pixel_correlation,
    simulate_field,
    simulate_gaussian_field,
    spherical_variogram,
)
from regsynth.grid import ImageGrid, PixelIndex, linear_index, read_grid, write_grid
from regsynth.kernels import ResamplingKernel, analytic_cosine_weights, cosine_kernel, make_kernel, uniform_kernel
from regsynth.local import LocalEstimate, LocalScope, local_scope, scaled_design, solve_local, weight_matrix
from regsynth.metrics import DiffMetrics, MetricsSummary, ScenarioConfig, benchmark_table, diff_metrics, run_scenario
from regsynth.oversample import NoiseModel, oversample, snr
from regsynth.rng import RNG_ALGORITHM, RngSpec
from regsynth.synthesis import (
    Reconstructor,
    cross_covariance,
    leading_eigenvector,
    reconstruct,
    synthesize,
)

__version__ = "0.1.0"

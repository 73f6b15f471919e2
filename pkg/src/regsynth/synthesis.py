"""Regression synthesis: pool local estimates of each pixel into one.

Every local estimate is a linear function of the independent per-element
noise draws.  Writing estimate ``a`` as ``sum_e v_a[e] * z_e`` over noise
elements ``e`` (stored design entries), its covariance with estimate ``b``
is ``sum_e v_a[e] v_b[e]``, where ``v_a[e] = phi P[p, k] x_e`` for elements
inside the scope of ``a`` and zero elsewhere.  This is the shared-row,
shared-pixel double sum of the local model, evaluated as a Gram matrix.

The pooled estimate of a pixel weights its local estimates by the leading
eigenvector of their correlation matrix, normalized to sum to one.  None of
this depends on the observations, so a :class:`Reconstructor` computes the
weights once per design and then applies them to any number of images.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from regsynth.design import SparseDesign, build_design, col_support
from regsynth.errors import NumericalError
from regsynth.grid import ImageGrid
from regsynth.kernels import ResamplingKernel
from regsynth.local import (
    LocalEstimate,
    apply_projection,
    local_scope,
    scaled_design,
    solve_local,
    weight_matrix,
    wls_projection,
)

log = logging.getLogger(__name__)

TIE_TOL = 1e-10
DEGENERATE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GammaVector:
    """Local estimates of pixel ``j``: ``entries`` are (observation, position in c, value)."""

    j: int
    entries: list

    @property
    def values(self) -> np.ndarray:
        return np.array([e[2] for e in self.entries], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class SynthesisWeights:
    eta: np.ndarray
    weights: np.ndarray
    degenerate_fallback: bool = False
    tie: bool = False


def cross_covariance(a: LocalEstimate, b: LocalEstimate, j_pos: int, jp_pos: int, d: SparseDesign,
                     sigma: float = 1.0) -> float:
    """Covariance of ``a.beta_hat[j_pos]`` and ``b.beta_hat[jp_pos]`` under the local noise model.

    Direct double sum over observations shared by both scopes and pixels
    shared by both footprints.
    """
    sa, sb = a.scope, b.scope
    if not (0 <= j_pos < len(sa.c) and 0 <= jp_pos < len(sb.c)):
        raise IndexError("estimate position out of range")
    shared, ka, kb = np.intersect1d(sa.r, sb.r, assume_unique=True, return_indices=True)
    if len(shared) == 0:
        return 0.0
    common_cols = np.intersect1d(sa.c, sb.c, assume_unique=True)
    total = 0.0
    for o, k, kp in zip(shared, ka, kb):
        sl = d.row_entries(int(o))
        inside = np.isin(d.indices[sl], common_cols, assume_unique=True)
        sq = float(np.sum(d.data[sl][inside] ** 2))
        total += sa.phi[k] * sb.phi[kp] * a.projection[j_pos, k] * b.projection[jp_pos, kp] * sq
    return sigma**2 * total


def noise_loadings(est: LocalEstimate, d: SparseDesign) -> np.ndarray:
    """Loadings of each estimate on the in-scope noise elements, shape (|c|, |entries|)."""
    s = est.scope
    scale = s.phi[s.entry_row] * d.data[s.entries]
    return est.projection[:, s.entry_row] * scale[None, :]


def _covariance_from_loadings(rows, elements) -> np.ndarray:
    union = np.unique(np.concatenate(elements))
    dense = np.zeros((len(rows), len(union)))
    for a, (vec, elem) in enumerate(zip(rows, elements)):
        dense[a, np.searchsorted(union, elem)] = vec
    return dense @ dense.T


def covariance_to_correlation(cov: np.ndarray) -> np.ndarray:
    var = np.diag(cov)
    if np.any(var <= 0):
        raise NumericalError("local estimate with zero variance")
    sd = np.sqrt(var)
    corr = cov / sd[:, None] / sd[None, :]
    if np.any(np.abs(corr) > 1.0 + 1e-9):
        raise NumericalError("correlation outside [-1, 1] beyond rounding")
    corr = np.clip(0.5 * (corr + corr.T), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def gamma_vector(j: int, estimates, d: SparseDesign) -> GammaVector:
    entries = []
    for i in col_support(d, j):
        est = estimates[i]
        if est is None:
            continue
        k = int(np.searchsorted(est.scope.c, j))
        entries.append((int(i), k, float(est.beta_hat[k])))
    return GammaVector(j, entries)


def covariance_matrix(g: GammaVector, estimates, d: SparseDesign, sigma: float = 1.0) -> np.ndarray:
    rows, elems = [], []
    for i, k, _ in g.entries:
        est = estimates[i]
        rows.append(noise_loadings(est, d)[k])
        elems.append(est.scope.entries)
    return sigma**2 * _covariance_from_loadings(rows, elems)


def correlation_matrix(g: GammaVector, estimates, d: SparseDesign, sigma: float = 1.0) -> np.ndarray:
    return covariance_to_correlation(covariance_matrix(g, estimates, d, sigma))


def leading_eigenvector(m: np.ndarray):
    """Largest eigenpair of a symmetric matrix.

    If the top eigenvalue is repeated, the vector is the normalized
    projection of ``1/sqrt(n)`` onto its eigenspace.  The sign makes
    ``sum(v) > 0`` whenever that sum is not negligibly small.
    Returns ``(eigenvalue, vector, tie)``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix must be finite")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ValueError("matrix must be symmetric")
    n = m.shape[0]
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigen-decomposition failed for {n}x{n} matrix "
                             f"(cond ~ {np.linalg.cond(m):.3g}): {exc}") from None
    top = vals[-1]
    tied = vals >= top - TIE_TOL * max(1.0, abs(top))
    tie = int(tied.sum()) > 1
    v = vecs[:, -1]
    if tie:
        basis = vecs[:, tied]
        proj = basis @ (basis.T @ np.full(n, 1.0 / np.sqrt(n)))
        norm = np.linalg.norm(proj)
        if norm > DEGENERATE_TOL:
            v = proj / norm
    resid = np.linalg.norm(m @ v - top * v)
    if resid > 1e-10 * max(np.linalg.norm(m, 2), 1e-300):
        raise NumericalError(f"eigenvector residual {resid:.3g} too large")
    s = v.sum()
    if abs(s) > DEGENERATE_TOL and s < 0:
        v = -v
    return float(top), v, tie


def synthesize(gamma, m: np.ndarray, variances=None):
    """Pool local estimates ``gamma`` with eigenvector weights of correlation ``m``.

    When the eigenvector's entries sum to (almost) zero the normalization is
    undefined; inverse-variance weights are used instead and flagged.
    """
    values = gamma.values if isinstance(gamma, GammaVector) else np.asarray(gamma, dtype=np.float64)
    if len(values) == 0:
        raise ValueError("no local estimates to synthesize")
    if len(values) == 1:
        w = SynthesisWeights(np.ones(1), np.ones(1))
        return float(values[0]), w
    _, eta, tie = leading_eigenvector(m)
    total = eta.sum()
    if abs(total) <= DEGENERATE_TOL:
        var = np.ones(len(values)) if variances is None else np.asarray(variances, dtype=np.float64)
        inv = 1.0 / var
        w = SynthesisWeights(eta, inv / inv.sum(), degenerate_fallback=True, tie=tie)
    else:
        w = eta / total
        # a small total amplifies rounding; a second pass restores the unit sum
        w = SynthesisWeights(eta, w / w.sum(), tie=tie)
    return float(w.weights @ values), w


@dataclass
class PixelFailure:
    pixel: int
    reason: str


@dataclass
class ReconstructionPlan:
    """Observation-independent parts of a reconstruction.

    ``gamma_obs``/``gamma_pos`` list, per pixel, the observations and their
    position in ``c`` whose estimates are pooled; ``weights`` holds the
    matching synthesis weights.
    """

    design: SparseDesign
    scopes: list
    projections: list
    regularized: np.ndarray
    gamma_obs: list
    gamma_pos: list
    weights: list
    flags: list
    failures: list = field(default_factory=list)
    solve_failures: list = field(default_factory=list)


class Reconstructor:
    """Reusable reconstruction for one design.

    Building the plan does all local projections and per-pixel syntheses;
    :meth:`apply` is then a pair of gathers and a weighted sum.
    """

    def __init__(self, design: SparseDesign, sigma: float = 1.0):
        self.design = design
        self.sigma = sigma
        self.plan = self._build()
        self._pack()

    def _build(self) -> ReconstructionPlan:
        d = self.design
        scopes, projs, loads = [], [], []
        regularized = np.zeros(d.n, dtype=bool)
        failures, solve_failures = [], []
        for i in range(d.n):
            s = local_scope(d, i)
            try:
                p, reg = wls_projection(scaled_design(d, s), weight_matrix(d, s))
            except NumericalError as exc:
                solve_failures.append((i, str(exc)))
                log.warning("local solve %d failed: %s", i, exc)
                scopes.append(s)
                projs.append(None)
                loads.append(None)
                continue
            regularized[i] = reg
            scopes.append(s)
            projs.append(p)
            loads.append(p[:, s.entry_row] * (s.phi[s.entry_row] * d.data[s.entries])[None, :])
        if regularized.any():
            log.warning("%d of %d local solves needed ridge regularization", regularized.sum(), d.n)

        gamma_obs, gamma_pos, weights, flags = [], [], [], []
        for j in range(d.m):
            obs = [int(i) for i in col_support(d, j) if projs[i] is not None]
            pos = [int(np.searchsorted(scopes[i].c, j)) for i in obs]
            gamma_obs.append(np.array(obs, dtype=np.int64))
            gamma_pos.append(np.array(pos, dtype=np.int64))
            if not obs:
                failures.append(PixelFailure(j, "no local estimates cover this pixel"))
                weights.append(np.zeros(0))
                flags.append("missing")
                continue
            try:
                cov = self.sigma**2 * _covariance_from_loadings(
                    [loads[i][k] for i, k in zip(obs, pos)], [scopes[i].entries for i in obs]
                )
                corr = covariance_to_correlation(cov)
                _, sw = synthesize(np.zeros(len(obs)), corr, variances=np.diag(cov))
                weights.append(sw.weights)
                flags.append("fallback" if sw.degenerate_fallback else ("tie" if sw.tie else ""))
            except NumericalError as exc:
                failures.append(PixelFailure(j, str(exc)))
                weights.append(np.full(len(obs), 1.0 / len(obs)))
                flags.append("failed")
        for f in failures:
            log.warning("reconstruction: pixel %d: %s", f.pixel, f.reason)
        return ReconstructionPlan(
            d, scopes, projs, regularized, gamma_obs, gamma_pos, weights, flags, failures, solve_failures
        )

    def _pack(self):
        plan = self.plan
        d = self.design
        cmax = max(len(s.c) for s in plan.scopes)
        rmax = max(len(s.r) for s in plan.scopes)
        self._cmax = cmax
        pstack = np.zeros((d.n, cmax, rmax))
        rpad = np.zeros((d.n, rmax), dtype=np.int64)
        for i, (s, p) in enumerate(zip(plan.scopes, plan.projections)):
            rpad[i, : len(s.r)] = s.r
            if p is not None:
                pstack[i, : p.shape[0], : p.shape[1]] = p
        self._pstack = pstack
        self._rpad = rpad
        pix = np.repeat(np.arange(d.m), [len(o) for o in plan.gamma_obs])
        self._pix = pix
        self._flat = np.concatenate(plan.gamma_obs) * cmax + np.concatenate(plan.gamma_pos)
        self._w = np.concatenate(plan.weights)
        self._missing = np.array([j for j, f in enumerate(plan.flags) if f == "missing"], dtype=np.int64)

    def local_betas(self, y) -> np.ndarray:
        """All local estimates, padded to shape (n, max |c|)."""
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if y.shape != (self.design.n,):
            raise ValueError(f"expected {self.design.n} observations, got {y.size}")
        # centered on each scope's own observation, see local.apply_projection
        ref = y[:, None]
        return ref + np.einsum("ncr,nr->nc", self._pstack, y[self._rpad] - ref)

    def apply(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        betas = self.local_betas(y).reshape(-1)
        out = np.bincount(self._pix, weights=self._w * betas[self._flat], minlength=self.design.m)
        for j in self._missing:
            out[j] = float(np.mean(y[col_support(self.design, int(j))]))
        return out

    def estimates(self, y) -> list:
        """LocalEstimate objects for observation vector ``y`` (None where the solve failed)."""
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        out = []
        for s, p in zip(self.plan.scopes, self.plan.projections):
            if p is None:
                out.append(None)
            else:
                out.append(LocalEstimate(s, apply_projection(p, y[s.r], y[s.i]), p, bool(self.plan.regularized[s.i])))
        return out

    def weight_records(self, y):
        """Per-pixel provenance and weights, one dict per pixel."""
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        betas = self.local_betas(y)
        recon = self.apply(y)
        cols = self.design.field_shape[1]
        for j in range(self.design.m):
            obs, pos = self.plan.gamma_obs[j], self.plan.gamma_pos[j]
            yield {
                "pixel": j,
                "row": j // cols,
                "col": j % cols,
                "value": float(recon[j]),
                "gamma": [[int(i), int(k), float(betas[i, k])] for i, k in zip(obs, pos)],
                "weights": [float(w) for w in self.plan.weights[j]],
                "flag": self.plan.flags[j],
            }


@functools.lru_cache(maxsize=16)
def _cached(rows: int, cols: int, h: int, shape: str, key: bytes) -> Reconstructor:
    kernel = ResamplingKernel(h, np.frombuffer(key).reshape(2 * h + 1, 2 * h + 1), shape)
    return Reconstructor(build_design(rows, cols, kernel))


def reconstructor_for(field_rows: int, field_cols: int, kernel: ResamplingKernel) -> Reconstructor:
    return _cached(field_rows, field_cols, kernel.half_width, kernel.shape, kernel.weights.tobytes())


def check_observations(obs: ImageGrid, kernel: ResamplingKernel) -> None:
    if obs.kind != "observations":
        raise ValueError(f"expected an observations grid, got kind={obs.kind!r}")
    if obs.kernel_half_width != kernel.half_width:
        raise ValueError(
            f"kernel mismatch: observations were made with half width {obs.kernel_half_width}, "
            f"but a {kernel.size}x{kernel.size} kernel (half width {kernel.half_width}) was requested"
        )


def reconstruct(obs: ImageGrid, kernel: ResamplingKernel) -> ImageGrid:
    check_observations(obs, kernel)
    h = kernel.half_width
    rec = reconstructor_for(obs.rows + 2 * h, obs.cols + 2 * h, kernel)
    values = rec.apply(obs.flat()).reshape(rec.design.field_shape)
    return ImageGrid(values, kind="reconstruction", kernel_half_width=h)


def estimate_design(d: SparseDesign, y) -> np.ndarray:
    """Reconstruct the coefficient vector for an arbitrary design."""
    return Reconstructor(d).apply(y)


def local_estimates(d: SparseDesign, y) -> list:
    """Local estimate for every observation of ``d`` (direct, unpacked route)."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    out = []
    for i in range(d.n):
        s = local_scope(d, i)
        out.append(solve_local(y[s.r], scaled_design(d, s), weight_matrix(d, s), scope=s))
    return out

"""Regression decomposition into per-footprint weighted least squares problems.

For observation ``i`` the local scope keeps the pixels of its footprint
(``c``) and every observation touching any of those pixels (``r``).  Rows of
the restricted design are rescaled by ``phi`` to sum to one again, and each
row is weighted by the inverse of its modeled noise variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from regsynth.design import SparseDesign, row_support
from regsynth.errors import NumericalError

RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LocalScope:
    """Local scope of observation ``i``.

    ``entries`` are positions into the design's ``data`` for the in-scope
    elements (rows in ``r``, columns in ``c``); ``entry_row``/``entry_col``
    give their positions within ``r`` and ``c``.
    """

    i: int
    c: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    entries: np.ndarray
    entry_row: np.ndarray
    entry_col: np.ndarray

    @property
    def self_pos(self) -> int:
        return int(np.searchsorted(self.r, self.i))


@dataclass(frozen=True, eq=False)
class LocalEstimate:
    scope: LocalScope
    beta_hat: np.ndarray
    projection: np.ndarray
    regularized: bool = False


def local_scope(d: SparseDesign, i: int) -> LocalScope:
    c = row_support(d, i)
    pos = np.concatenate([d.col_entry[d.col_ptr[j]:d.col_ptr[j + 1]] for j in c])
    rows = d.row_of[pos]
    order = np.lexsort((d.indices[pos], rows))
    pos = pos[order]
    rows = rows[order]
    r = np.unique(rows)
    entry_row = np.searchsorted(r, rows)
    entry_col = np.searchsorted(c, d.indices[pos])

    mass = np.bincount(entry_row, weights=d.data[pos], minlength=len(r))
    phi = 1.0 / mass
    # rows lying wholly inside the scope need no rescaling
    inside = np.bincount(entry_row, minlength=len(r)) == np.diff(d.indptr)[r]
    phi[inside] = 1.0
    if np.any(phi < 1.0 - 1e-12):
        raise NumericalError(f"scope {i}: in-scope mass exceeds one")
    return LocalScope(i, c, r, phi, pos, entry_row, entry_col)


def scaled_design(d: SparseDesign, s: LocalScope) -> np.ndarray:
    x = np.zeros((len(s.r), len(s.c)))
    x[s.entry_row, s.entry_col] = s.phi[s.entry_row] * d.data[s.entries]
    return x


def weight_matrix(d: SparseDesign, s: LocalScope) -> np.ndarray:
    """Diagonal of W as a vector, in units where the noise constant is one."""
    sq = np.bincount(s.entry_row, weights=d.data[s.entries] ** 2, minlength=len(s.r))
    if np.any(sq <= 0):
        raise NumericalError(f"scope {s.i}: row with no in-scope mass")
    return 1.0 / (s.phi**2 * sq)


def wls_projection(x: np.ndarray, w: np.ndarray):
    """Return ``(P, regularized)`` with ``P = (X'WX)^-1 X'W``.

    Solved through a QR factorization of ``sqrt(W) X``.  If that factor is
    numerically rank deficient, a ridge of ``1e-10 * trace / p`` is added to
    the normal equations instead.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 2 or w.shape != (x.shape[0],):
        raise ValueError("X must be (rows, cols) with one weight per row")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")
    p = x.shape[1]
    sw = np.sqrt(w)
    if x.shape[0] >= p:
        q, rfac = np.linalg.qr(sw[:, None] * x)
        diag = np.abs(np.diag(rfac))
        if diag.min() > RANK_TOL * diag.max():
            proj = np.linalg.solve(rfac, q.T) * sw[None, :]
            # cosine-kernel scopes reach cond ~1e8; refinement keeps P in the
            # row space of X'W while squaring the residual of P X = I
            eye = np.eye(p)
            for _ in range(2):
                proj = proj + (eye - proj @ x) @ proj
            return proj, False

    gram = x.T @ (w[:, None] * x)
    ridge = 1e-10 * np.trace(gram) / p
    reg = gram + ridge * np.eye(p)
    if np.linalg.cond(reg) > 1.0 / np.finfo(float).eps:
        raise NumericalError("normal equations singular even after ridge regularization")
    return np.linalg.solve(reg, x.T * w[None, :]), True


def apply_projection(proj: np.ndarray, y_scope: np.ndarray, ref: float) -> np.ndarray:
    """``proj @ y_scope`` evaluated as ``ref + proj @ (y_scope - ref)``.

    Equal in exact arithmetic when the design rows sum to one (then
    ``proj @ 1 == 1``), but immune to the drift of the computed ``proj @ 1``
    on ill-conditioned scopes, so constant scenes come back exactly.
    """
    return ref + proj @ (y_scope - ref)


def solve_local(y_scope, x, w, scope: LocalScope | None = None) -> LocalEstimate:
    proj, regularized = wls_projection(x, w)
    y = np.asarray(y_scope, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if np.all(np.abs(x.sum(axis=1) - 1.0) <= 1e-12):
        ref = y[scope.self_pos] if scope is not None else float(np.mean(y))
        beta = apply_projection(proj, y, ref)
    else:
        beta = proj @ y
    return LocalEstimate(scope, beta, proj, regularized)


def local_estimate(d: SparseDesign, i: int, y) -> LocalEstimate:
    """Scope, scale, weight and solve the local regression of observation ``i``."""
    s = local_scope(d, i)
    return solve_local(np.asarray(y)[s.r], scaled_design(d, s), weight_matrix(d, s), scope=s)

"""Sparse design matrix linking observations to pixel radiances.

Row ``i`` holds the footprint weights of observation ``i``; column ``j`` is a
pixel of the high-resolution grid.  Storage is compressed by row with an
explicit column index so supports can be queried in both directions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from regsynth.errors import FormatError
from regsynth.grid import format_float
from regsynth.kernels import ResamplingKernel

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SparseDesign:
    """n x m design matrix in CSR form plus a CSC-style column index.

    ``col_entry[col_ptr[j]:col_ptr[j+1]]`` are positions into ``data`` (and
    ``row_of``) for the entries of column ``j``, ordered by row.  Each stored
    entry is also a noise element in the generative model, so its position
    doubles as the noise element id.
    """

    n: int
    m: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    obs_shape: tuple
    field_shape: tuple
    kernel_half_width: int

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        data = np.asarray(self.data, dtype=np.float64)
        if indptr.shape != (self.n + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise ValueError("inconsistent row pointer array")
        if len(indices) != len(data):
            raise ValueError("indices and data lengths differ")
        if np.any(np.diff(indptr) <= 0):
            raise ValueError("design has an empty row")
        if np.any(data <= 0) or not np.all(np.isfinite(data)):
            raise ValueError("design entries must be finite and strictly positive")
        if len(indices) and (indices.min() < 0 or indices.max() >= self.m):
            raise ValueError("column index out of range")
        row_of = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(indptr))
        for i in range(self.n):
            cols = indices[indptr[i]:indptr[i + 1]]
            if np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {i} columns not strictly increasing")
        sums = np.add.reduceat(data, indptr[:-1])
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if len(bad):
            raise ValueError(f"row {bad[0]} weights sum to {sums[bad[0]]!r}, not 1")

        # stable sort by column keeps rows ascending within each column
        order = np.argsort(indices, kind="stable")
        counts = np.bincount(indices, minlength=self.m)
        if np.any(counts == 0):
            raise ValueError(f"design column {int(np.flatnonzero(counts == 0)[0])} is empty")
        col_ptr = np.concatenate([[0], np.cumsum(counts)])

        for name, arr in (("indptr", indptr), ("indices", indices), ("data", data)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name, arr in (("row_of", row_of), ("col_entry", order), ("col_ptr", col_ptr)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def nnz(self) -> int:
        return len(self.data)

    def row_entries(self, i: int) -> slice:
        return slice(int(self.indptr[i]), int(self.indptr[i + 1]))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.m))
        out[self.row_of, self.indices] = self.data
        return out

    def matvec(self, beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=np.float64)
        return np.add.reduceat(self.data * beta[self.indices], self.indptr[:-1])


def build_design(field_rows: int, field_cols: int, kernel: ResamplingKernel) -> SparseDesign:
    """Design for footprints centered on every pixel at least ``h`` from the border."""
    h = kernel.half_width
    if field_rows <= 2 * h or field_cols <= 2 * h:
        raise ValueError(
            f"field {field_rows}x{field_cols} too small for a {kernel.size}x{kernel.size} kernel"
        )
    obs_rows, obs_cols = field_rows - 2 * h, field_cols - 2 * h
    n = obs_rows * obs_cols
    k = kernel.size**2
    # observation (orow, ocol) is centered at pixel (orow + h, ocol + h); its
    # footprint's top-left pixel is therefore (orow, ocol)
    orow, ocol = np.divmod(np.arange(n), obs_cols)
    dr, dc = np.divmod(np.arange(k), kernel.size)
    cols = (orow[:, None] + dr[None, :]) * field_cols + (ocol[:, None] + dc[None, :])
    data = np.tile(kernel.weights.reshape(-1), n)
    indptr = np.arange(n + 1, dtype=np.int64) * k
    return SparseDesign(
        n=n,
        m=field_rows * field_cols,
        indptr=indptr,
        indices=cols.reshape(-1),
        data=data,
        obs_shape=(obs_rows, obs_cols),
        field_shape=(field_rows, field_cols),
        kernel_half_width=h,
    )


def row_support(d: SparseDesign, i: int) -> np.ndarray:
    if not 0 <= i < d.n:
        raise IndexError(f"row {i} out of range [0, {d.n})")
    return d.indices[d.row_entries(i)].copy()


def col_support(d: SparseDesign, j: int) -> np.ndarray:
    if not 0 <= j < d.m:
        raise IndexError(f"column {j} out of range [0, {d.m})")
    return d.row_of[d.col_entry[d.col_ptr[j]:d.col_ptr[j + 1]]].copy()


def write_design(d: SparseDesign, path) -> None:
    lines = ["RRDESIGN 1", f"{d.n} {d.m} {d.kernel_half_width}"]
    for i in range(d.n):
        sl = d.row_entries(i)
        pairs = " ".join(f"{c} {format_float(w)}" for c, w in zip(d.indices[sl], d.data[sl]))
        lines.append(f"{sl.stop - sl.start} {pairs}")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def read_design(path) -> SparseDesign:
    """Load an RRDESIGN file; rows and columns are validated like built designs."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].split() != ["RRDESIGN", "1"]:
        raise FormatError("expected header 'RRDESIGN 1'", 1)
    if len(lines) < 2:
        raise FormatError("missing dimension line", 2)
    try:
        n, m, h = (int(t) for t in lines[1].split())
    except ValueError:
        raise FormatError("malformed dimension line, expected '<n> <m> <h>'", 2) from None
    if n < 1 or m < 1:
        raise FormatError("n and m must be positive", 2)
    if len(lines) - 2 != n:
        raise FormatError(f"expected {n} rows, found {len(lines) - 2}", min(len(lines), n + 2) + 1)
    indptr = [0]
    indices, data = [], []
    for i, line in enumerate(lines[2:]):
        lineno = i + 3
        toks = line.split()
        try:
            count = int(toks[0])
            cols = [int(t) for t in toks[1::2]]
            weights = [float(t) for t in toks[2::2]]
        except (ValueError, IndexError):
            raise FormatError("malformed row", lineno) from None
        if len(toks) != 1 + 2 * count or len(cols) != count:
            raise FormatError(f"row declares {count} entries but has {(len(toks) - 1) / 2:g}", lineno)
        s = sum(weights)
        if abs(s - 1.0) > ROW_SUM_TOL:
            raise FormatError(f"row weights sum to {s!r}, not 1", lineno)
        order = np.argsort(cols, kind="stable")
        indices.extend(cols[o] for o in order)
        data.extend(weights[o] for o in order)
        indptr.append(len(indices))
    try:
        return SparseDesign(
            n=n, m=m, indptr=np.array(indptr), indices=np.array(indices, dtype=np.int64),
            data=np.array(data), obs_shape=(1, n), field_shape=(1, m), kernel_half_width=h,
        )
    except ValueError as exc:
        raise FormatError(str(exc)) from None

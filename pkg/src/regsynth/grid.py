"""Image container and the RRGRID text format.

Grids are row-major with the top-left pixel at (0, 0).  Values are written
with ``repr(float)``, which is the shortest decimal string that round-trips
to the same double, so ``read_grid(write_grid(g))`` is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from regsynth.errors import FormatError

KINDS = ("field", "observations", "reconstruction")
SUPPORTED_HALF_WIDTHS = (1, 2, 3)
FORMAT_VERSION = 1


class PixelIndex(NamedTuple):
    row: int
    col: int


def linear_index(p: PixelIndex, cols: int) -> int:
    """Row-major offset of pixel ``p`` in a grid with ``cols`` columns."""
    return p[0] * cols + p[1]


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Immutable 2-D array of finite pixel values with kind metadata.

    ``kernel_half_width`` is required for observation and reconstruction
    grids and must be ``None`` for truth fields.
    """

    values: np.ndarray
    kind: str = "field"
    kernel_half_width: Optional[int] = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"grid values must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid values must be finite")
        if self.kind not in KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        h = self.kernel_half_width
        if self.kind == "field":
            if h is not None:
                raise ValueError("field grids carry no kernel_half_width")
        else:
            if h is None:
                raise ValueError(f"{self.kind} grids require kernel_half_width")
            if self.kind == "observations" and h not in SUPPORTED_HALF_WIDTHS:
                raise ValueError(f"kernel_half_width must be one of {SUPPORTED_HALF_WIDTHS}, got {h}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.kernel_half_width == other.kernel_half_width
            and self.shape == other.shape
            and np.array_equal(self.values.view(np.uint64), other.values.view(np.uint64))
        )

    __hash__ = None


def format_float(v: float) -> str:
    return repr(float(v))


def write_grid(g: ImageGrid, path) -> None:
    lines = [f"RRGRID {FORMAT_VERSION}", f"{g.rows} {g.cols}", f"kind {g.kind}"]
    if g.kind != "field":
        lines.append(f"kernel_half_width {g.kernel_half_width}")
    for row in g.values:
        lines.append(" ".join(format_float(v) for v in row))
    data = "\n".join(lines) + "\n"
    Path(path).write_bytes(data.encode("utf-8"))


def _parse_int(tok: str, line: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise FormatError(f"{what} is not an integer: {tok!r}", line) from None


def read_grid(path) -> ImageGrid:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty file", 1)

    head = lines[0].split()
    if len(head) != 2 or head[0] != "RRGRID":
        raise FormatError("malformed header, expected 'RRGRID <version>'", 1)
    if head[1] != str(FORMAT_VERSION):
        raise FormatError(f"unsupported RRGRID version {head[1]!r}", 1)

    if len(lines) < 3:
        raise FormatError("truncated header", len(lines) + 1)
    dims = lines[1].split()
    if len(dims) != 2:
        raise FormatError("malformed dimensions, expected '<rows> <cols>'", 2)
    rows = _parse_int(dims[0], 2, "rows")
    cols = _parse_int(dims[1], 2, "cols")
    if rows < 1 or cols < 1:
        raise FormatError(f"dimensions must be positive, got {rows}x{cols}", 2)

    kind_tok = lines[2].split()
    if len(kind_tok) != 2 or kind_tok[0] != "kind" or kind_tok[1] not in KINDS:
        raise FormatError(f"malformed kind line {lines[2]!r}", 3)
    kind = kind_tok[1]

    h = None
    body_start = 3
    if kind != "field":
        if len(lines) < 4:
            raise FormatError("missing kernel_half_width line", 4)
        hw = lines[3].split()
        if len(hw) != 2 or hw[0] != "kernel_half_width":
            raise FormatError(f"malformed kernel_half_width line {lines[3]!r}", 4)
        h = _parse_int(hw[1], 4, "kernel_half_width")
        body_start = 4

    body = lines[body_start:]
    if len(body) != rows:
        raise FormatError(
            f"dimension mismatch: header declares {rows} rows, found {len(body)}",
            body_start + min(len(body), rows) + 1,
        )
    values = np.empty((rows, cols), dtype=np.float64)
    for r, line in enumerate(body):
        lineno = body_start + r + 1
        toks = line.split()
        if len(toks) != cols:
            raise FormatError(f"dimension mismatch: expected {cols} values, found {len(toks)}", lineno)
        for c, tok in enumerate(toks):
            try:
                v = float(tok)
            except ValueError:
                raise FormatError(f"non-numeric token {tok!r}", lineno) from None
            if not np.isfinite(v):
                raise FormatError(f"non-finite value {tok!r}", lineno)
            values[r, c] = v
    try:
        return ImageGrid(values, kind=kind, kernel_half_width=h)
    except ValueError as exc:
        raise FormatError(str(exc), 4 if h is not None else 3) from None


def write_pgm(g: ImageGrid, path) -> None:
    """16-bit binary PGM for eyeballing only; min maps to 0 and max to 65535."""
    v = g.values
    lo, hi = float(v.min()), float(v.max())
    if hi > lo:
        scaled = np.rint((v - lo) / (hi - lo) * 65535.0)
    else:
        scaled = np.zeros_like(v)
    header = f"P5\n{g.cols} {g.rows}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + scaled.astype(">u2").tobytes())

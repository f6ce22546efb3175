"""Binary sampling masks, the source-receiver matricization and mask file I/O.

A mask is stored as two sorted index arrays (row-major order), which keeps
equality bit-exact and makes the sparse products used by the spectral code
cheap.  Masks are immutable; every generator returns a new one.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, TextIO, Union

import numpy as np
import scipy.sparse as sp

from .errors import (
    DomainError,
    EntryCountMismatch,
    IndexOutOfRange,
    InputError,
    MalformedHeader,
    MaskFormatError,
)

MASK_MAGIC = "sg-mask v1"

PathOrStream = Union[str, os.PathLike, TextIO]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.setflags(write=False)
    return a


class SamplingMask:
    """Sparse binary ``n x m`` matrix of observed entries.

    Construct through :func:`from_coords`, :meth:`from_dense` or
    :meth:`from_flat`; the bare constructor assumes canonical input.
    """

    __slots__ = ("_n", "_m", "_rows", "_cols", "_csr")

    def __init__(self, n: int, m: int, rows: np.ndarray, cols: np.ndarray):
        self._n = int(n)
        self._m = int(m)
        self._rows = _frozen(rows)
        self._cols = _frozen(cols)
        self._csr = None

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_dense(cls, array) -> "SamplingMask":
        a = np.asarray(array)
        if a.ndim != 2:
            raise InputError(f"mask array must be 2-D, got shape {a.shape}")
        rows, cols = np.nonzero(a)
        return cls(a.shape[0], a.shape[1], rows, cols)

    @classmethod
    def from_flat(cls, n: int, m: int, flat) -> "SamplingMask":
        """Mask from linear (row-major) indices; duplicates are collapsed."""
        _check_dims(n, m)
        flat = np.unique(np.asarray(flat, dtype=np.int64))
        if flat.size and (flat[0] < 0 or flat[-1] >= n * m):
            raise InputError(f"flat index out of range for a {n}x{m} mask")
        return cls(n, m, flat // m, flat % m)

    @classmethod
    def full(cls, n: int, m: int) -> "SamplingMask":
        return cls.from_flat(n, m, np.arange(n * m))

    @classmethod
    def identity(cls, n: int) -> "SamplingMask":
        idx = np.arange(n)
        return cls(n, n, idx, idx)

    # -- basic properties -------------------------------------------------
    @property
    def n(self) -> int:
        return self._n

    @property
    def m(self) -> int:
        return self._m

    @property
    def shape(self) -> tuple[int, int]:
        return (self._n, self._m)

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    @property
    def cols(self) -> np.ndarray:
        return self._cols

    @property
    def nnz(self) -> int:
        return int(self._rows.size)

    def __len__(self) -> int:
        return self.nnz

    def __eq__(self, other) -> bool:
        if not isinstance(other, SamplingMask):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self._rows, other._rows)
            and np.array_equal(self._cols, other._cols)
        )

    def __hash__(self) -> int:
        return hash((self.shape, self._rows.tobytes(), self._cols.tobytes()))

    def __repr__(self) -> str:
        return f"SamplingMask({self._n}x{self._m}, nnz={self.nnz})"

    def entries(self) -> list[tuple[int, int]]:
        return list(zip(self._rows.tolist(), self._cols.tolist()))

    @property
    def flat(self) -> np.ndarray:
        return self._rows * self._m + self._cols

    # -- conversions ------------------------------------------------------
    def to_csr(self) -> sp.csr_matrix:
        """0/1 float64 CSR matrix (cached)."""
        if self._csr is None:
            data = np.ones(self.nnz)
            self._csr = sp.csr_matrix((data, (self._rows, self._cols)), shape=self.shape)
        return self._csr

    def to_dense(self, dtype=float) -> np.ndarray:
        out = np.zeros(self.shape, dtype=dtype)
        out[self._rows, self._cols] = 1
        return out

    def transpose(self) -> "SamplingMask":
        order = np.lexsort((self._rows, self._cols))
        return SamplingMask(self._m, self._n, self._cols[order], self._rows[order])

    T = property(transpose)

    def row_counts(self) -> np.ndarray:
        return np.bincount(self._rows, minlength=self._n)

    def col_counts(self) -> np.ndarray:
        return np.bincount(self._cols, minlength=self._m)

    def is_regular(self) -> bool:
        """True when all row sums are equal and all column sums are equal."""
        if self.nnz == 0:
            return False
        rc, cc = self.row_counts(), self.col_counts()
        return bool(np.all(rc == rc[0]) and np.all(cc == cc[0]))

    def trim_empty(self) -> "SamplingMask":
        """Drop all-zero rows and columns.

        Nonzero singular values are unchanged by this; the dimensions (and so
        the sampling percentage and dimension-dependent bounds) are not.
        """
        if self.nnz == 0:
            raise DomainError("cannot trim an empty mask")
        keep_r = np.flatnonzero(self.row_counts())
        keep_c = np.flatnonzero(self.col_counts())
        rmap = np.full(self._n, -1)
        rmap[keep_r] = np.arange(keep_r.size)
        cmap = np.full(self._m, -1)
        cmap[keep_c] = np.arange(keep_c.size)
        return SamplingMask(keep_r.size, keep_c.size, rmap[self._rows], cmap[self._cols])

    def permute(self, row_perm=None, col_perm=None) -> "SamplingMask":
        """Relabel rows/cols: entry (i, j) moves to (row_perm[i], col_perm[j])."""
        r = self._rows if row_perm is None else np.asarray(row_perm)[self._rows]
        c = self._cols if col_perm is None else np.asarray(col_perm)[self._cols]
        return SamplingMask.from_flat(self._n, self._m, r * self._m + c)


def _check_dims(n, m):
    if int(n) < 1 or int(m) < 1:
        raise InputError(f"mask dimensions must be positive, got {n}x{m}")


class Built(NamedTuple):
    mask: SamplingMask
    duplicates: int


def from_coords(n: int, m: int, coords: Iterable[Sequence[int]]) -> Built:
    """Canonical mask from ``(row, col)`` pairs; duplicates collapse and are counted."""
    _check_dims(n, m)
    arr = np.asarray(list(coords), dtype=np.int64).reshape(-1, 2)
    bad = (arr[:, 0] < 0) | (arr[:, 0] >= n) | (arr[:, 1] < 0) | (arr[:, 1] >= m)
    if bad.any():
        i, j = arr[np.argmax(bad)]
        raise InputError(f"coordinate ({i}, {j}) out of range for a {n}x{m} mask")
    flat = arr[:, 0] * m + arr[:, 1]
    uniq = np.unique(flat)
    return Built(SamplingMask(n, m, uniq // m, uniq % m), int(flat.size - uniq.size))


# -- matricization --------------------------------------------------------


@dataclass(frozen=True)
class MatricizationMap:
    """src-rec form: ``row = sx * n_rec_x + rx``, ``col = sy * n_rec_y + ry``."""

    n_src_x: int
    n_rec_x: int
    n_src_y: int
    n_rec_y: int

    def __post_init__(self):
        for name in ("n_src_x", "n_rec_x", "n_src_y", "n_rec_y"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"{name} must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_src_x * self.n_rec_x, self.n_src_y * self.n_rec_y)

    def to_matrix(self, sx, rx, sy, ry):
        return (
            np.asarray(sx) * self.n_rec_x + np.asarray(rx),
            np.asarray(sy) * self.n_rec_y + np.asarray(ry),
        )

    def from_matrix(self, row, col):
        sx, rx = np.divmod(np.asarray(row), self.n_rec_x)
        sy, ry = np.divmod(np.asarray(col), self.n_rec_y)
        return sx, rx, sy, ry


@dataclass(frozen=True)
class GridSpec:
    """Regular output grid; node ``k`` on an axis sits at ``origin + k * spacing`` (meters)."""

    origins: tuple[float, ...]
    spacings: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "origins", tuple(float(o) for o in self.origins))
        object.__setattr__(self, "spacings", tuple(float(s) for s in self.spacings))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if not (len(self.origins) == len(self.spacings) == len(self.counts)):
            raise InputError("grid origins, spacings and counts must have the same length")
        if any(not np.isfinite(s) or s <= 0 for s in self.spacings):
            raise InputError("grid spacing must be > 0")
        if any(c < 1 for c in self.counts):
            raise DomainError("empty grid: every axis needs at least one node")

    @classmethod
    def covering(cls, lower, upper, spacings) -> "GridSpec":
        """Smallest grid anchored at ``lower`` whose nodes reach ``upper`` on every axis."""
        counts = [int(np.floor((u - lo) / s + 1e-9)) + 1 for lo, u, s in zip(lower, upper, spacings)]
        return cls(tuple(lower), tuple(spacings), tuple(counts))

    @property
    def ndim(self) -> int:
        return len(self.counts)

    def coordinate(self, axis: int, k):
        return self.origins[axis] + np.asarray(k) * self.spacings[axis]


def _axis_set(values, size: int, name: str) -> np.ndarray:
    idx = np.unique(np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.int64))
    if idx.size == 0:
        raise DomainError(f"degenerate axis: no {name} kept")
    if idx[0] < 0 or idx[-1] >= size:
        raise InputError(f"{name} index out of range [0, {size})")
    return idx


def src_rec_mask(mmap: MatricizationMap, kept_src_x, kept_rec_x, kept_src_y, kept_rec_y) -> SamplingMask:
    """Mask with an entry wherever all four constituent indices are kept.

    The result is an outer product of a row indicator and a column indicator,
    so it is always rank one.
    """
    sx = _axis_set(kept_src_x, mmap.n_src_x, "src_x")
    rx = _axis_set(kept_rec_x, mmap.n_rec_x, "rec_x")
    sy = _axis_set(kept_src_y, mmap.n_src_y, "src_y")
    ry = _axis_set(kept_rec_y, mmap.n_rec_y, "rec_y")
    rows = (sx[:, None] * mmap.n_rec_x + rx[None, :]).ravel()
    cols = (sy[:, None] * mmap.n_rec_y + ry[None, :]).ravel()
    n, m = mmap.shape
    mask = SamplingMask(n, m, np.repeat(rows, cols.size), np.tile(cols, rows.size))
    assert mask.nnz == sx.size * rx.size * sy.size * ry.size
    return mask


def receiver_layout_mask(
    mmap: MatricizationMap, receivers, kept_src_x=None, kept_src_y=None
) -> SamplingMask:
    """Mask for a fixed receiver array recorded by every kept source.

    ``receivers`` is an ``n_rec_x x n_rec_y`` boolean array (or anything
    :class:`SamplingMask` accepts) marking active receiver positions.  Entry
    ``((sx, rx), (sy, ry))`` is observed iff receiver ``(rx, ry)`` is active
    and both source indices are kept.  Unlike :func:`src_rec_mask` the
    receiver set need not be a product of per-axis selections.
    """
    if isinstance(receivers, SamplingMask):
        rec = receivers
    else:
        rec = SamplingMask.from_dense(np.asarray(receivers, dtype=bool))
    if rec.shape != (mmap.n_rec_x, mmap.n_rec_y):
        raise InputError(f"receiver grid shape {rec.shape} does not match map")
    if rec.nnz == 0:
        raise DomainError("degenerate axis: no receivers kept")
    sx = np.arange(mmap.n_src_x) if kept_src_x is None else _axis_set(kept_src_x, mmap.n_src_x, "src_x")
    sy = np.arange(mmap.n_src_y) if kept_src_y is None else _axis_set(kept_src_y, mmap.n_src_y, "src_y")
    # enumerate (sx, sy, receiver) triples; canonical order restored by from_flat
    SX, SY, K = np.meshgrid(sx, sy, np.arange(rec.nnz), indexing="ij")
    rows, cols = mmap.to_matrix(SX.ravel(), rec.rows[K.ravel()], SY.ravel(), rec.cols[K.ravel()])
    n, m = mmap.shape
    return SamplingMask.from_flat(n, m, rows * m + cols)


def per_source_receiver_mask(mmap: MatricizationMap, selections) -> SamplingMask:
    """Mask where each source records its own receiver set.

    ``selections[s]`` lists active receivers of source ``s = sx * n_src_y + sy``
    as raster indices ``rx * n_rec_y + ry``.  Entry ``((sx, rx), (sy, ry))``
    is observed iff source ``(sx, sy)`` recorded receiver ``(rx, ry)``.
    """
    n_sources = mmap.n_src_x * mmap.n_src_y
    n_pos = mmap.n_rec_x * mmap.n_rec_y
    if len(selections) != n_sources:
        raise InputError(f"expected {n_sources} receiver selections, got {len(selections)}")
    src = np.concatenate([np.full(len(sel), s, dtype=np.int64) for s, sel in enumerate(selections)])
    rec = np.concatenate([np.asarray(sel, dtype=np.int64).ravel() for sel in selections])
    if rec.size == 0:
        raise DomainError("degenerate axis: no receivers kept")
    if rec.min() < 0 or rec.max() >= n_pos:
        raise InputError("receiver index out of range")
    rows, cols = mmap.to_matrix(src // mmap.n_src_y, rec // mmap.n_rec_y, src % mmap.n_src_y, rec % mmap.n_rec_y)
    n, m = mmap.shape
    return SamplingMask.from_flat(n, m, rows * m + cols)


# -- statistics -----------------------------------------------------------


def sampling_percentage(mask: SamplingMask) -> float:
    """Fraction of observed entries, in [0, 1]."""
    return mask.nnz / (mask.n * mask.m)


class GapStats(NamedTuple):
    max_gap: int
    mean_gap: float
    row_max: int
    row_mean: float
    col_max: int
    col_mean: float


def _interior_runs(major: np.ndarray, minor: np.ndarray) -> np.ndarray:
    # entries sorted by (major, minor); a gap is the count of missing cells
    # strictly between two consecutive observed cells on the same line
    same = major[1:] == major[:-1]
    d = minor[1:] - minor[:-1] - 1
    d = d[same]
    return d[d > 0]


def gap_stats(mask: SamplingMask) -> GapStats:
    """Lengths of runs of unobserved entries between observed ones.

    Runs are measured along rows and along columns.  Leading and trailing
    runs (before the first or after the last sample of a line) are not gaps
    between samples and are ignored, so a full mask gives zeros.
    """
    if mask.nnz == 0:
        raise DomainError("gap statistics are undefined for an empty mask")
    row_runs = _interior_runs(mask.rows, mask.cols)
    t = mask.transpose()
    col_runs = _interior_runs(t.rows, t.cols)

    def stats(r):
        return (int(r.max()), float(r.mean())) if r.size else (0, 0.0)

    rmax, rmean = stats(row_runs)
    cmax, cmean = stats(col_runs)
    amax, amean = stats(np.concatenate([row_runs, col_runs]))
    return GapStats(amax, amean, rmax, rmean, cmax, cmean)


def selection_gaps(selection) -> np.ndarray:
    """Missing-run lengths between consecutive indices of a 1-D selection."""
    s = np.unique(np.asarray(selection, dtype=np.int64))
    d = np.diff(s) - 1
    return d[d > 0]


# -- file I/O -------------------------------------------------------------


def dumps_mask(mask: SamplingMask) -> str:
    buf = io.StringIO()
    buf.write(f"{MASK_MAGIC}\n{mask.n} {mask.m} {mask.nnz}\n")
    if mask.nnz:
        body = np.column_stack([mask.rows, mask.cols])
        np.savetxt(buf, body, fmt="%d")
    return buf.getvalue()


def write_mask(mask: SamplingMask, destination: PathOrStream) -> None:
    text = dumps_mask(mask)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def loads_mask(text: str) -> SamplingMask:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != MASK_MAGIC:
        raise MalformedHeader(f"malformed header: expected '{MASK_MAGIC}'")
    if len(lines) < 2:
        raise MalformedHeader("malformed header: missing dimension line")
    try:
        n, m, k = (int(t) for t in lines[1].split())
    except ValueError:
        raise MalformedHeader(f"malformed header: bad dimension line {lines[1]!r}") from None
    if n < 1 or m < 1 or k < 0:
        raise MalformedHeader(f"malformed header: invalid dimensions {n} {m} {k}")
    body = [ln for ln in lines[2:] if ln.strip()]
    if len(body) != k:
        raise EntryCountMismatch(f"entry count mismatch: header declares {k}, found {len(body)}")
    if k == 0:
        return SamplingMask(n, m, np.empty(0, np.int64), np.empty(0, np.int64))
    try:
        arr = np.array([ln.split() for ln in body], dtype=np.int64)
    except ValueError:
        raise MaskFormatError("malformed entry line") from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise MaskFormatError("malformed entry line: expected two integers")
    bad = (arr[:, 0] < 0) | (arr[:, 0] >= n) | (arr[:, 1] < 0) | (arr[:, 1] >= m)
    if bad.any():
        i, j = arr[np.argmax(bad)]
        raise IndexOutOfRange(f"index out of range: ({i}, {j}) in a {n}x{m} mask")
    built = from_coords(n, m, arr)
    if built.duplicates:
        raise EntryCountMismatch(f"entry count mismatch: {built.duplicates} duplicate entries")
    return built.mask


def read_mask(source: PathOrStream) -> SamplingMask:
    if hasattr(source, "read"):
        return loads_mask(source.read())
    with open(source, encoding="utf-8") as fh:
        return loads_mask(fh.read())

"""Sampling-design generators.

Selections are sorted 1-D ``int64`` index arrays over a line of positions
(receivers along an axis, or receivers of a 2-D array in raster order).
Every random generator takes an :class:`RngSeed` so a design is a pure
function of its inputs and ``(base_seed, stream_id)``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InputError, MaskFormatError
from .mask import GridSpec, PathOrStream, SamplingMask

POINTS_MAGIC = "sg-points v1"


@dataclass(frozen=True)
class RngSeed:
    """Counter-based seed: identical ``(base_seed, stream_id)`` gives identical draws."""

    base_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for v in (self.base_seed, self.stream_id):
            if not 0 <= int(v) < 2**64:
                raise InputError("seed components must be 64-bit unsigned integers")

    def generator(self, *purpose: int) -> np.random.Generator:
        """Independent generator for this stream; ``purpose`` splits sub-streams."""
        ss = np.random.SeedSequence(int(self.base_seed), spawn_key=(int(self.stream_id), *purpose))
        return np.random.Generator(np.random.PCG64(ss))


def _as_seed(seed) -> RngSeed:
    return seed if isinstance(seed, RngSeed) else RngSeed(int(seed))


def periodic_selection(n_points: int, keep_every: int, offset: int = 0) -> np.ndarray:
    """``{offset, offset + k, ...}`` within ``[0, n_points)``."""
    if keep_every < 1:
        raise InputError("keep_every must be >= 1")
    if keep_every > n_points:
        raise InputError("keep_every cannot exceed n_points")
    if not 0 <= offset < keep_every:
        raise InputError("offset must satisfy 0 <= offset < keep_every")
    return np.arange(offset, n_points, keep_every, dtype=np.int64)


def relocate_random(selection, universe_size: int, p: float, seed) -> np.ndarray:
    """Move ``floor(p * |selection|)`` selected indices to unselected slots.

    The indices to remove and the slots to fill are both drawn uniformly
    without replacement; the fill slots come from the complement of the
    original selection, so a removed index is never re-drawn.
    """
    if not 0.0 <= p <= 1.0:
        raise InputError("p must lie in [0, 1]")
    sel = np.unique(np.asarray(selection, dtype=np.int64))
    if sel.size and (sel[0] < 0 or sel[-1] >= universe_size):
        raise InputError("selection outside [0, universe_size)")
    count = int(math.floor(p * sel.size + 1e-12))
    if count == 0:
        return sel
    free = np.setdiff1d(np.arange(universe_size, dtype=np.int64), sel, assume_unique=True)
    if free.size < count:
        raise DomainError(f"only {free.size} free slots for {count} relocations")
    rng = _as_seed(seed).generator()
    removed = rng.choice(sel, size=count, replace=False)
    added = rng.choice(free, size=count, replace=False)
    out = np.union1d(np.setdiff1d(sel, removed, assume_unique=True), added)
    assert out.size == sel.size
    return out


@dataclass(frozen=True)
class JitterConfig:
    """Jittered subsampling: one sample per interval of ``interval_len`` slots.

    With ``restrict_alternate_only`` the restricted draw (first
    ``ceil(rho * L)`` slots) applies to intervals 1, 3, 5, ...; otherwise to
    all intervals.  ``partial_tail`` admits a final short interval when
    ``n_points`` is not a multiple of ``L``; it is off by default.
    """

    n_points: int
    interval_len: int = 5
    rho: float = 1.0
    restrict_alternate_only: bool = True
    partial_tail: bool = False

    def __post_init__(self):
        if self.n_points < 1 or self.interval_len < 1:
            raise InputError("n_points and interval_len must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise InputError("rho must lie in (0, 1]")
        if self.n_points % self.interval_len and not self.partial_tail:
            raise InputError(
                f"n_points={self.n_points} is not divisible by interval_len={self.interval_len}"
            )

    @property
    def restricted_slots(self) -> int:
        return max(1, math.ceil(self.rho * self.interval_len - 1e-12))

    @property
    def n_intervals(self) -> int:
        return -(-self.n_points // self.interval_len)


def jittered_selections(config: JitterConfig, seed, count: int) -> np.ndarray:
    """``count`` independent jittered selections as a ``(count, n_intervals)`` array.

    Row ``i`` holds one index per interval, so every row is sorted and
    has exactly ``n_intervals`` entries.
    """
    if count < 1:
        raise InputError("count must be >= 1")
    L = config.interval_len
    starts = np.arange(config.n_intervals, dtype=np.int64) * L
    lengths = np.minimum(L, config.n_points - starts)
    if config.restrict_alternate_only:
        restricted = (np.arange(starts.size) % 2) == 1
    else:
        restricted = np.ones(starts.size, dtype=bool)
    width = np.where(restricted, np.minimum(config.restricted_slots, lengths), lengths)
    rng = _as_seed(seed).generator()
    return starts + np.floor(rng.random((count, starts.size)) * width).astype(np.int64)


def jittered_selection(config: JitterConfig, seed) -> np.ndarray:
    """One sample per interval; see :class:`JitterConfig` for the restriction rule."""
    return jittered_selections(config, seed, 1)[0]


def uniform_random_selection(universe_size: int, count: int, seed) -> np.ndarray:
    if not 0 <= count <= universe_size:
        raise InputError(f"count={count} outside [0, {universe_size}]")
    rng = _as_seed(seed).generator()
    return np.sort(rng.choice(universe_size, size=count, replace=False)).astype(np.int64)


def raster_mask(n: int, m: int, selection) -> SamplingMask:
    """Lay a 1-D selection over an ``n x m`` grid in row-major (raster) order."""
    return SamplingMask.from_flat(n, m, selection)


# -- off-grid binning -----------------------------------------------------


class BinResult(NamedTuple):
    nodes: np.ndarray  # (k, ndim) unique node indices, lexicographically sorted
    dropped: int
    duplicates: int


def nearest_node(values, origin: float, spacing: float, count: int):
    """Nearest node index on one axis, ties to the lower index; -1 when outside."""
    t = (np.asarray(values, dtype=float) - origin) / spacing
    k = np.ceil(t - 0.5).astype(np.int64)
    inside = (t >= -0.5) & (t <= count - 0.5)
    k = np.clip(k, 0, count - 1)
    return np.where(inside, k, -1)


def bin_offgrid(points, grid: GridSpec) -> BinResult:
    """Assign each point to its nearest grid node.

    On a rectilinear grid the Euclidean nearest node is the per-axis nearest
    node, so ties break toward the lower index on each axis independently.
    Points more than half a spacing outside the grid are dropped.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != grid.ndim:
        raise InputError(f"points must be (N, {grid.ndim})")
    if not np.all(np.isfinite(pts)):
        raise InputError("point coordinates must be finite")
    idx = np.column_stack(
        [nearest_node(pts[:, a], grid.origins[a], grid.spacings[a], grid.counts[a]) for a in range(grid.ndim)]
    ) if pts.size else np.empty((0, grid.ndim), dtype=np.int64)
    ok = np.all(idx >= 0, axis=1)
    kept = idx[ok]
    nodes = np.unique(kept, axis=0) if kept.size else np.empty((0, grid.ndim), dtype=np.int64)
    return BinResult(nodes, int((~ok).sum()), int(kept.shape[0] - nodes.shape[0]))


def binned_mask(points, grid: GridSpec) -> tuple[SamplingMask, BinResult]:
    """2-D binning straight to a mask: axis 0 indexes rows, axis 1 columns."""
    if grid.ndim != 2:
        raise InputError("binned_mask needs a 2-axis grid")
    res = bin_offgrid(points, grid)
    n, m = grid.counts
    mask = SamplingMask(n, m, res.nodes[:, 0], res.nodes[:, 1]) if res.nodes.size else SamplingMask(
        n, m, np.empty(0, np.int64), np.empty(0, np.int64)
    )
    return mask, res


def coil_point_cloud(
    seed,
    extent: float = 10_000.0,
    n_circles: int = 9,
    radius: float = 2_500.0,
    point_spacing: float = 75.0,
    jitter: float = 10.0,
) -> np.ndarray:
    """Synthetic coil-like trace cloud: points along overlapping circles.

    Circle centres sit on a jittered lattice inside ``[0, extent]^2``;
    points are laid every ``point_spacing`` meters of arc with Gaussian
    positional noise of ``jitter`` meters, then clipped to the area.
    """
    rng = _as_seed(seed).generator()
    side = int(math.ceil(math.sqrt(n_circles)))
    cell = extent / side
    pts = []
    for c in range(n_circles):
        cx = (c % side + 0.5) * cell + rng.uniform(-0.2, 0.2) * cell
        cy = (c // side + 0.5) * cell + rng.uniform(-0.2, 0.2) * cell
        npts = max(8, int(2 * math.pi * radius / point_spacing))
        phase = rng.uniform(0, 2 * math.pi)
        th = phase + np.arange(npts) * 2 * math.pi / npts
        xy = np.column_stack([cx + radius * np.cos(th), cy + radius * np.sin(th)])
        pts.append(xy + rng.normal(0.0, jitter, xy.shape))
    out = np.concatenate(pts)
    inside = np.all((out >= 0) & (out <= extent), axis=1)
    return out[inside]


# -- point-cloud files ----------------------------------------------------


def write_points(points, destination: PathOrStream) -> None:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    lines = [POINTS_MAGIC] + [f"{x!r} {y!r}" for x, y in pts.tolist()]
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def read_points(source: PathOrStream) -> np.ndarray:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(os.fspath(source), encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != POINTS_MAGIC:
        raise MaskFormatError(f"malformed header: expected '{POINTS_MAGIC}'")
    try:
        pts = np.array([[float(t) for t in ln.split()] for ln in lines[1:]], dtype=float)
    except ValueError:
        raise MaskFormatError("malformed point line") from None
    if pts.size == 0:
        return np.empty((0, 2))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise MaskFormatError("malformed point line: expected 'x y'")
    return pts

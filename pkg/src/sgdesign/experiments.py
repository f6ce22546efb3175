"""Sweep drivers: receiver relocation, jittered subsampling and grid density.

Every sweep is a pure function of its configuration and ``base_seed``.
Trial ``t`` draws from ``RngSeed(base_seed, t)`` whatever the parameter
value, so the same trial index sees the same synthetic model at every grid
point (common random numbers), and cells can run in any order.  Results are
reduced in ``(parameter index, trial index)`` order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .completion import ObservedData, SolverOptions, generate_incoherent, snr, solve_nuclear_norm
from .designs import (
    JitterConfig,
    RngSeed,
    binned_mask,
    jittered_selection,
    jittered_selections,
    periodic_selection,
    relocate_random,
)
from .errors import DomainError, InputError
from .mask import (
    GridSpec,
    MatricizationMap,
    SamplingMask,
    gap_stats,
    per_source_receiver_mask,
    receiver_layout_mask,
    sampling_percentage,
)
from .spectral import top_two_singular_values

CSV_FIELDS = (
    "param_name",
    "param_value",
    "trials",
    "mean_sg_ratio",
    "std_sg_ratio",
    "mean_snr_db",
    "std_snr_db",
    "mean_max_gap",
    "sampling_pct",
    "excluded_trials",
)

CONVENTIONS = {
    "matricization": "row = src_x * n_rec_x + rec_x, col = src_y * n_rec_y + rec_y",
    "receiver_layout": "raster order on the receiver grid: index = rec_x * n_rec_y + rec_y",
    "source_index": "s = src_x * n_src_y + src_y",
    "jitter_alternation": "restricted draw on intervals 1, 3, 5, ... (0-based)",
    "binning_ties": "nearest node, ties to the lower index",
    "gaps": "interior runs only",
}


@dataclass(frozen=True)
class SweepRecord:
    param_name: str
    param_value: float | str
    trials: int
    mean_sg_ratio: float
    std_sg_ratio: float
    mean_snr_db: float | None
    std_snr_db: float | None
    mean_max_gap: float
    sampling_pct: float
    excluded_trials: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise InputError("a record needs at least one trial")
        if self.excluded_trials < 0:
            raise InputError("excluded_trials must be non-negative")


class TrialResult(NamedTuple):
    param_index: int
    trial: int
    sg_ratio: float
    snr_db: float | None
    converged: bool
    max_gap: float
    sampling_pct: float


@dataclass
class SweepResult:
    """Aggregated ``records`` plus per-trial ``pooled`` rows and run metadata."""

    records: list
    pooled: list = field(default_factory=list)
    trials: list = field(default_factory=list, repr=False)
    metadata: dict = field(default_factory=dict)

    def rows(self) -> list:
        return list(self.records) + list(self.pooled)


# -- statistics -----------------------------------------------------------


def spearman(xs, ys) -> float:
    """Spearman rank correlation with mid-ranks for ties."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise InputError("spearman needs two sequences of equal length")
    if x.size < 3:
        raise InputError("spearman needs at least 3 pairs")
    rx, ry = rankdata(x) - (x.size + 1) / 2, rankdata(y) - (y.size + 1) / 2
    den = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if den == 0:
        raise DomainError("undefined correlation: constant input")
    return float(np.clip(rx @ ry / den, -1.0, 1.0))


def _mean_std(values) -> tuple[float | None, float | None]:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return None, None
    return float(v.mean()), float(v.std())


def _map(fn, cells, threads: int) -> list:
    if threads <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, cells))


def _aggregate(name, value, results: Sequence[TrialResult]) -> SweepRecord:
    sg = np.array([r.sg_ratio for r in results])
    ok = [r.snr_db for r in results if r.snr_db is not None and r.converged]
    excluded = sum(1 for r in results if r.snr_db is not None and not r.converged)
    mean_snr, std_snr = _mean_std(ok)
    return SweepRecord(
        param_name=name,
        param_value=value,
        trials=len(results),
        mean_sg_ratio=float(sg.mean()),
        std_sg_ratio=float(sg.std()),
        mean_snr_db=mean_snr,
        std_snr_db=std_snr,
        mean_max_gap=float(np.mean([r.max_gap for r in results])),
        sampling_pct=float(np.mean([r.sampling_pct for r in results])),
        excluded_trials=excluded,
    )


# -- synthetic data -------------------------------------------------------


@dataclass(frozen=True)
class DataModel:
    """Rank-``rank`` incoherent matrix plus i.i.d. Gaussian noise.

    ``noise`` is the noise RMS relative to the signal RMS.  The solver's
    budget is ``eta = eta_factor * E||P_Omega(noise)||_F``; the default
    ``eta_factor = 0`` fits the observations exactly, so the recovery error
    reflects how the mask propagates the noise.  ``noise = 0`` gives exact
    low-rank data.
    """

    rank: int = 5
    noise: float = 0.05
    eta_factor: float = 0.0
    complex_valued: bool = False

    def __post_init__(self):
        if self.rank < 1:
            raise InputError("rank must be >= 1")
        if not (self.noise >= 0 and self.eta_factor >= 0):
            raise InputError("noise and eta_factor must be non-negative")

    def realize(self, shape, seed: RngSeed, mask: SamplingMask):
        """``(truth, observed data)`` for one trial."""
        n, m = shape
        X = generate_incoherent(n, m, min(self.rank, n, m), seed, self.complex_valued).matrix()
        if self.noise == 0:
            return X, ObservedData.observe(X, mask)
        sigma = self.noise * np.linalg.norm(X) / math.sqrt(n * m)
        E = seed.generator(0xE0).standard_normal(X.shape)
        if self.complex_valued:
            E = (E + 1j * seed.generator(0xE1).standard_normal(X.shape)) / math.sqrt(2)
        return X, ObservedData.observe(X + sigma * E, mask, eta=self.eta_factor * sigma * math.sqrt(mask.nnz))


def _recover(model: DataModel, mask: SamplingMask, seed: RngSeed, solver: SolverOptions):
    X, data = model.realize(mask.shape, seed, mask)
    rep = solve_nuclear_norm(data, solver)
    return snr(rep.estimate, X), rep.converged


# -- relocation sweep -----------------------------------------------------


@dataclass(frozen=True)
class RelocationGeometry:
    """``n_src`` sources and an ``n_rec x n_rec`` receiver grid per axis pair.

    The baseline keeps every ``keep_every``-th receiver in raster order; a
    stride coprime to ``n_rec`` gives a sheared lattice whose bipartite
    graph splits into ``keep_every`` nearly disconnected pieces.
    """

    n_src: int = 4
    n_rec: int = 64
    keep_every: int = 3

    def __post_init__(self):
        if self.n_src < 1 or self.n_rec < 2:
            raise DomainError("degenerate geometry: need n_src >= 1 and n_rec >= 2")
        if not 1 <= self.keep_every <= self.n_rec**2 // 2:
            raise DomainError("degenerate geometry: keep_every out of range")

    @property
    def mmap(self) -> MatricizationMap:
        return MatricizationMap(self.n_src, self.n_rec, self.n_src, self.n_rec)

    @property
    def n_positions(self) -> int:
        return self.n_rec**2

    def mask(self, selection) -> SamplingMask:
        grid = np.zeros(self.n_positions, dtype=bool)
        grid[np.asarray(selection, dtype=np.int64)] = True
        return receiver_layout_mask(self.mmap, grid.reshape(self.n_rec, self.n_rec))


DEFAULT_RELOCATION_SOLVER = SolverOptions(stage_tol=1e-4, tol=1e-8, max_iter=3000)


def relocation_sweep(
    geometry: RelocationGeometry,
    data_model: DataModel | None,
    p_grid: Sequence[float],
    trials: int = 20,
    base_seed: int = 0,
    solver: SolverOptions = DEFAULT_RELOCATION_SOLVER,
    threads: int = 1,
) -> SweepResult:
    """Relocate a fraction ``p`` of a periodic receiver array and measure.

    ``records`` holds one row per ``p`` (``param_name="p"``) and ``pooled``
    one row per (p, trial) (``param_name="p_pooled"``); both are sorted by
    SG ratio, descending.  With ``data_model=None`` only the SG ratio is
    computed.
    """
    p_grid = [float(p) for p in p_grid]
    if not p_grid or any(not 0.0 <= p <= 1.0 for p in p_grid):
        raise InputError("p_grid must be a non-empty subset of [0, 1]")
    if trials < 1:
        raise InputError("trials must be >= 1")
    base = periodic_selection(geometry.n_positions, geometry.keep_every)

    def cell(c):
        pi, t = c
        seed = RngSeed(base_seed, t)
        mask = geometry.mask(relocate_random(base, geometry.n_positions, p_grid[pi], seed))
        sg = top_two_singular_values(mask).sg_ratio
        s, conv = _recover(data_model, mask, seed, solver) if data_model else (None, True)
        return TrialResult(pi, t, sg, s, conv, gap_stats(mask).max_gap, sampling_percentage(mask))

    cells = [(pi, t) for pi in range(len(p_grid)) for t in range(trials)]
    results = _map(cell, cells, threads)
    records = [
        _aggregate("p", p_grid[pi], [r for r in results if r.param_index == pi]) for pi in range(len(p_grid))
    ]
    pooled = [
        _aggregate("p_pooled", p_grid[r.param_index], [r]) for r in results
    ]
    # stable sorts keep (p, trial) order among ties
    records.sort(key=lambda r: -r.mean_sg_ratio)
    pooled.sort(key=lambda r: -r.mean_sg_ratio)
    meta = {
        "sweep": "relocation",
        "base_seed": base_seed,
        "trials": trials,
        "p_grid": p_grid,
        "geometry": asdict(geometry),
        "mask_shape": list(geometry.mmap.shape),
        "data_model": asdict(data_model) if data_model else None,
        "solver": asdict(solver),
        "conventions": dict(CONVENTIONS, trim_empty=False),
        "correlation": _correlation(records),
        "reference_anchors": {
            "note": "published field-data values at 75% missing; different data and scale, not asserted",
            "points": [{"sg_ratio": 0.9828, "snr_db": 3.5}, {"sg_ratio": 0.1796, "snr_db": 20.7}],
        },
    }
    return SweepResult(records, pooled, results, meta)


def _correlation(records) -> dict:
    pairs = [(r.mean_sg_ratio, r.mean_snr_db) for r in records if r.mean_snr_db is not None]
    out = {"spearman_sg_snr": None, "pairs": len(pairs)}
    try:
        out["spearman_sg_snr"] = spearman([a for a, _ in pairs], [b for _, b in pairs])
    except (InputError, DomainError) as exc:
        out["error"] = str(exc)
    return out


# -- jitter sweep ---------------------------------------------------------


@dataclass(frozen=True)
class JitterGeometry:
    """``n_src`` sources per axis over an ``n_rec x n_rec`` receiver grid.

    Receivers are jittered along the raster order of the receiver grid.
    With ``per_source`` every source draws its own receiver set, so each
    row and column of the src-rec mask is sampled; otherwise one receiver
    array is shared by all sources.
    """

    n_src: int = 32
    n_rec: int = 32
    partial_tail: bool = True
    restrict_alternate_only: bool = True
    per_source: bool = True

    def __post_init__(self):
        if self.n_src < 1 or self.n_rec < 2:
            raise DomainError("degenerate geometry: need n_src >= 1 and n_rec >= 2")

    @property
    def mmap(self) -> MatricizationMap:
        return MatricizationMap(self.n_src, self.n_rec, self.n_src, self.n_rec)


def interval_for_missing(missing: float) -> int:
    """Interval length ``L`` with one kept sample per interval: ``1 - 1/L = missing``."""
    if not 0.0 <= missing < 1.0:
        raise InputError("missing fraction must lie in [0, 1)")
    L = 1.0 / (1.0 - missing)
    Li = int(round(L))
    if abs(L - Li) > 1e-9:
        raise InputError(f"missing fraction {missing} does not correspond to an integer interval")
    return Li


def jitter_sweep(
    geometry: JitterGeometry,
    rho_grid: Sequence[float],
    missing_fractions: Sequence[float],
    trials: int = 50,
    base_seed: int = 0,
    threads: int = 1,
) -> SweepResult:
    """SG ratio and maximum gap of jittered receiver arrays; no data involved.

    One record per ``(missing, rho)`` with ``param_name="rho@missing=<f>"``,
    ordered by missing fraction then ``rho`` as given.
    """
    rho_grid = [float(r) for r in rho_grid]
    missing_fractions = [float(f) for f in missing_fractions]
    if not rho_grid or any(not 0.0 < r <= 1.0 for r in rho_grid):
        raise InputError("rho_grid must be a non-empty subset of (0, 1]")
    if not missing_fractions:
        raise InputError("missing_fractions must be non-empty")
    if trials < 1:
        raise InputError("trials must be >= 1")
    n_pos = geometry.n_rec**2
    configs = []
    for f in missing_fractions:
        L = interval_for_missing(f)
        for r in rho_grid:
            configs.append(
                (f, r, JitterConfig(n_pos, L, r, geometry.restrict_alternate_only, geometry.partial_tail))
            )

    def cell(c):
        ci, t = c
        seed = RngSeed(base_seed, t)
        if geometry.per_source:
            sels = jittered_selections(configs[ci][2], seed, geometry.n_src**2)
            mask = per_source_receiver_mask(geometry.mmap, sels)
        else:
            grid = np.zeros(n_pos, dtype=bool)
            grid[jittered_selection(configs[ci][2], seed)] = True
            mask = receiver_layout_mask(geometry.mmap, grid.reshape(geometry.n_rec, geometry.n_rec))
        sg = top_two_singular_values(mask).sg_ratio
        return TrialResult(ci, t, sg, None, True, gap_stats(mask).max_gap, sampling_percentage(mask))

    cells = [(ci, t) for ci in range(len(configs)) for t in range(trials)]
    results = _map(cell, cells, threads)
    records = [
        _aggregate(f"rho@missing={configs[ci][0]:g}", configs[ci][1], [r for r in results if r.param_index == ci])
        for ci in range(len(configs))
    ]
    meta = {
        "sweep": "jitter",
        "base_seed": base_seed,
        "trials": trials,
        "rho_grid": rho_grid,
        "missing_fractions": missing_fractions,
        "geometry": asdict(geometry),
        "mask_shape": list(geometry.mmap.shape),
        "conventions": dict(CONVENTIONS, trim_empty=False),
        "trend": jitter_trend(records),
    }
    return SweepResult(records, [], results, meta)


def jitter_trend(records: Sequence[SweepRecord]) -> dict:
    """Per missing fraction: is rho = max the minimum, and how many inversions?

    An inversion is a step along increasing ``rho`` where the mean SG ratio
    goes up; it is "small" when the rise is below the larger of the two
    standard deviations.
    """
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault(r.param_name, []).append(r)
    out = {}
    for name, recs in groups.items():
        recs = sorted(recs, key=lambda r: float(r.param_value))
        means = [r.mean_sg_ratio for r in recs]
        inversions = []
        for a, b in zip(recs, recs[1:]):
            if b.mean_sg_ratio > a.mean_sg_ratio:
                inversions.append(
                    {
                        "from": a.param_value,
                        "to": b.param_value,
                        "rise": b.mean_sg_ratio - a.mean_sg_ratio,
                        "within_std": b.mean_sg_ratio - a.mean_sg_ratio < max(a.std_sg_ratio, b.std_sg_ratio),
                    }
                )
        out[name] = {
            "max_rho_is_min": means[-1] == min(means),
            "inversions": inversions,
            "passes": means[-1] == min(means)
            and len(inversions) <= 1
            and all(i["within_std"] for i in inversions),
        }
    return out


# -- periodic vs jittered on one 2-D grid ---------------------------------


def design_comparison(
    shape: tuple[int, int],
    keep_every: int,
    data_model: DataModel | None = None,
    trials: int = 3,
    base_seed: int = 0,
    solver: SolverOptions = DEFAULT_RELOCATION_SOLVER,
    threads: int = 1,
) -> SweepResult:
    """Periodic versus jittered raster decimation at the same sampling rate.

    Both designs keep one point in every ``keep_every`` along the row-major
    index of an ``n x m`` grid: the periodic one always the first, the
    jittered one a uniformly random slot (``rho = 1``).  SG ratios use the
    trim-empty convention.  Trial ``t`` uses the same synthetic model for
    both designs.  Records are ``design = periodic`` then ``jittered``.
    """
    n, m = (int(v) for v in shape)
    if n < 2 or m < 2:
        raise DomainError("degenerate axis: grid needs at least 2 x 2 points")
    if not 2 <= keep_every <= n * m // 2:
        raise InputError("keep_every must lie in [2, n*m/2]")
    if trials < 1:
        raise InputError("trials must be >= 1")
    cfg = JitterConfig(n * m, keep_every, 1.0, partial_tail=True)
    periodic = SamplingMask.from_flat(n, m, periodic_selection(n * m, keep_every))

    def cell(c):
        di, t = c
        seed = RngSeed(base_seed, t)
        mask = periodic if di == 0 else SamplingMask.from_flat(n, m, jittered_selection(cfg, seed))
        sg = top_two_singular_values(mask, trim_empty=True).sg_ratio
        s, conv = _recover(data_model, mask, seed, solver) if data_model else (None, True)
        return TrialResult(di, t, sg, s, conv, gap_stats(mask).max_gap, sampling_percentage(mask))

    cells = [(di, t) for di in range(2) for t in range(trials)]
    results = _map(cell, cells, threads)
    records = [
        _aggregate("design", name, [r for r in results if r.param_index == di])
        for di, name in enumerate(("periodic", "jittered"))
    ]
    meta = {
        "sweep": "design",
        "base_seed": base_seed,
        "trials": trials,
        "shape": [n, m],
        "keep_every": keep_every,
        "data_model": asdict(data_model) if data_model else None,
        "solver": asdict(solver) if data_model else None,
        "conventions": dict(CONVENTIONS, trim_empty=True),
        "reference_values": {
            "note": "published values from different data and solver, not asserted",
            "periodic": {"sg_ratio": 1.0, "snr_db": 20},
            "jittered": {"sg_ratio": 0.35, "snr_db": 24},
        },
    }
    return SweepResult(records, [], results, meta)


# -- density sweep --------------------------------------------------------


def density_sweep(
    point_cloud,
    spacing_grid: Sequence[tuple[float, float]],
    data_model: DataModel | None = None,
    base_seed: int = 0,
    bounds: tuple[tuple[float, float], tuple[float, float]] | None = None,
    solver: SolverOptions = DEFAULT_RELOCATION_SOLVER,
    threads: int = 1,
) -> SweepResult:
    """Bin an off-grid trace cloud at several ``(rec_spacing, src_spacing)`` pairs.

    Column 0 of ``point_cloud`` is the source coordinate (mask rows) and
    column 1 the receiver coordinate (mask columns).  The grid covers
    ``bounds`` (default: the cloud's bounding box).  A spacing pair whose
    binned mask is empty yields a record with NaN statistics and
    ``excluded_trials=1`` instead of an error.  Records keep the input
    order; ``metadata["ranking"]`` lists the valid pairs by SG ratio.
    """
    pts = np.asarray(point_cloud, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise InputError("point cloud must be a non-empty (N, 2) array")
    if not spacing_grid:
        raise InputError("spacing grid must be non-empty")
    lower = tuple(pts.min(axis=0)) if bounds is None else tuple(bounds[0])
    upper = tuple(pts.max(axis=0)) if bounds is None else tuple(bounds[1])
    pairs = [(float(a), float(b)) for a, b in spacing_grid]

    def cell(ci):
        rec_sp, src_sp = pairs[ci]
        grid = GridSpec.covering(lower, upper, (src_sp, rec_sp))
        mask, _ = binned_mask(pts, grid)
        if mask.nnz == 0:
            return TrialResult(ci, 0, float("nan"), None, False, float("nan"), 0.0), mask.shape
        sg = top_two_singular_values(mask).sg_ratio
        s, conv = _recover(data_model, mask, RngSeed(base_seed, 0), solver) if data_model else (None, True)
        return TrialResult(ci, 0, sg, s, conv, gap_stats(mask).max_gap, sampling_percentage(mask)), mask.shape

    out = _map(cell, range(len(pairs)), threads)
    records = []
    for (res, _), (rec_sp, src_sp) in zip(out, pairs):
        rec = _aggregate("rec_src_spacing", f"{rec_sp:g}x{src_sp:g}", [res])
        if np.isnan(res.sg_ratio):
            rec = SweepRecord(rec.param_name, rec.param_value, 1, float("nan"), float("nan"), None, None,
                              float("nan"), 0.0, 1)
        records.append(rec)
    valid = [r for r in records if not np.isnan(r.mean_sg_ratio)]
    ranking = [r.param_value for r in sorted(valid, key=lambda r: r.mean_sg_ratio)]
    meta = {
        "sweep": "density",
        "base_seed": base_seed,
        "spacing_grid": [list(p) for p in pairs],
        "bounds": [list(map(float, lower)), list(map(float, upper))],
        "n_points": int(pts.shape[0]),
        "mask_shapes": [list(s) for _, s in out],
        "data_model": asdict(data_model) if data_model else None,
        "solver": asdict(solver) if data_model else None,
        "conventions": dict(CONVENTIONS, trim_empty=False),
        "ranking": ranking,
        "reference_table": {
            "note": "published field-data values; proprietary data, not asserted",
            "rows": [
                {"rec_spacing": 100, "src_spacing": 200, "sg_ratio": 0.77, "snr_db": 10},
                {"rec_spacing": 50, "src_spacing": 100, "sg_ratio": 0.4, "snr_db": 16},
                {"rec_spacing": 50, "src_spacing": 50, "sg_ratio": 0.88, "snr_db": 8},
            ],
        },
    }
    return SweepResult(records, [], [r for r, _ in out], meta)


# -- serialization --------------------------------------------------------


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.6f}"
    return str(v)


def records_to_csv(records: Sequence[SweepRecord]) -> str:
    """Fixed-header CSV; floats at 6 decimals, absent values empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in records:
        w.writerow([_csv_cell(getattr(r, f)) for f in CSV_FIELDS])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.generic):
        return _json_safe(v.item())
    return v


def records_to_json(records: Sequence[SweepRecord]) -> str:
    """JSON mirror of the CSV at full precision (non-finite values become null)."""
    return json.dumps([_json_safe(asdict(r)) for r in records], indent=2) + "\n"


def metadata_to_json(metadata: dict) -> str:
    return json.dumps(_json_safe(metadata), indent=2, sort_keys=True) + "\n"


def write_outputs(result: SweepResult, prefix: str) -> dict:
    """Write ``<prefix>.csv``, ``<prefix>.json`` and ``<prefix>.meta.json``."""
    paths = {"csv": f"{prefix}.csv", "json": f"{prefix}.json", "meta": f"{prefix}.meta.json"}
    rows = result.rows()
    for key, text in (
        ("csv", records_to_csv(rows)),
        ("json", records_to_json(rows)),
        ("meta", metadata_to_json(result.metadata)),
    ):
        with open(paths[key], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return paths

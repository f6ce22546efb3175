"""Spectral-gap analysis and design of sampling masks for low-rank matrix completion."""

__version__ = "0.1.0"

from .errors import DomainError, InputError, MaskFormatError, SGError, SolverDivergence
from .mask import (
    GapStats,
    GridSpec,
    MatricizationMap,
    SamplingMask,
    from_coords,
    gap_stats,
    read_mask,
    receiver_layout_mask,
    sampling_percentage,
    src_rec_mask,
    write_mask,
)
from .spectral import SpectralSummary, connected_components, dense_svd_oracle, sg_ratio, top_two_singular_values
from .designs import (
    JitterConfig,
    RngSeed,
    bin_offgrid,
    binned_mask,
    coil_point_cloud,
    jittered_selection,
    periodic_selection,
    raster_mask,
    relocate_random,
    uniform_random_selection,
)
from .completion import (
    LowRankModel,
    ObservedData,
    SolveReport,
    SolverOptions,
    generate_incoherent,
    incoherence,
    snr,
    solve_factorized,
    solve_nuclear_norm,
    theorem_bound,
)
from .experiments import (
    DataModel,
    JitterGeometry,
    RelocationGeometry,
    SweepRecord,
    density_sweep,
    design_comparison,
    jitter_sweep,
    relocation_sweep,
    spearman,
)

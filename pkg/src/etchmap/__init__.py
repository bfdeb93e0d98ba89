"""Etch-map computation for ion beam figuring on bounded domains."""

from .beams import BeamSpec, autocorrelation, evaluate, fourier_magnitude_sq, l1_norm, l2sq_norm
from .core import (
    DiskSectorField,
    DomainGrid,
    DwellGrid,
    FieldMap,
    make_dwell_for_domain,
    make_interval_grids,
    make_rect_grids,
    make_stadium_mask,
    weighted_inner,
)
from .kernels import (
    KernelMatrix,
    assemble_cross_matrix,
    assemble_normal_matrix,
    autocorr_kernel,
    crossbeam_overlap,
    disk_sector_kernel,
    disk_sector_matrix,
    lattice_autocorr,
    overlap_gaussian_closed,
    overlap_quadrature,
)
from .solvers import (
    FitResult,
    MultiBeamSystem,
    SampleSet,
    assemble_multibeam,
    choose_truncation,
    dwell_from_coeffs,
    fit_truncated,
    multibeam_forward,
    multibeam_solve,
    pseudoinverse_apply,
    rbf_fit_nonnegative,
    reconstruct_filtered,
    rkhs_dwell,
    rkhs_fit,
    truncation_threshold,
)
from .spectral import (
    SpectralSystem,
    TensorSystem,
    apply_forward,
    asymptotic_eigenvalue,
    decompose,
    dispersion_table,
    fit_wavenumber,
    left_vectors,
    mode_parity,
    plane_wave_response,
    tensor_mode_order,
    trace_diagnostics,
)

__version__ = "0.1.0"

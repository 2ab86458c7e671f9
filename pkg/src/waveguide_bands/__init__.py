"""Band structure and gaps of thin periodic twisted waveguides.

Pipeline: tube geometry -> cross-section ground state and twist constant ->
effective 1D periodic operator (bands, gaps) -> full 3D fiber solves that
check the thin-tube limit.
"""
__version__ = "0.1.0"

from .cross_section import (Disk, Polygon, Rectangle, SectionError, SectionMask, SectionSpectrum,
                            angular_derivative, dirichlet_laplacian, disk, polygon,
                            rasterize_section, rectangle, solve_section, twist_coupling_constant)
from .effective1d import (BandStructure, EffectivePotential, FloquetMatrix, GapReport,
                          GapSlopeFit, assemble_floquet, compute_bands, compute_gaps,
                          effective_potential, first_open_gap, fourier_coefficients,
                          gap_slope_fit, locate_gap_by_fourier, solve_fiber_1d)
from .fiber3d import (FiberGrid, FiberProblem, ReductionReport, assemble_fiber, fiber_sweep,
                      solve_fiber_3d, spectrum_union, validate_reduction)
from .geometry import (GeometryError, PeriodicProfile, WaveguideGeometry, build_geometry,
                       frenet_from_curve, scale_geometry, twist_rate, validate_thickness)
from .numerics import SolverError, eig_sparse_smallest, eigh_dense, fft_periodic, ifft_periodic

__all__ = [name for name in dir() if not name.startswith("_")]

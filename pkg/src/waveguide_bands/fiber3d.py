"""Full 3D fiber operator of a thin periodic tube and the reduction check.

The fiber at quasimomentum ``theta`` is discretized through its quadratic form

    t(phi) = int (1/beta) |(D_s + a(s) Ang + i theta) phi|^2
             + (beta / eps^2) |grad_y phi|^2 + c beta |phi|^2,

with ``a = tau + alpha'``, ``Ang = y1 d/dy2 - y2 d/dy1`` and ``beta`` the
metric factor.  Unknowns live on ``N_s`` periodic slices times the interior
nodes of the section.  ``D_s`` is the Fourier spectral derivative on the
periodic slice grid; ``Ang`` and ``grad_y`` are the centered stencils shared
with :mod:`.cross_section`.  The pencil is ``A x = E M x`` with
``M = beta * vol``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cross_section import (SectionMask, SectionSpectrum, angular_derivative, dirichlet_laplacian,
                            solve_section, transverse_edges)
from .effective1d import (DEFAULT_HALF_WIDTH, effective_potential,
                          fiber_eigenvalues)
from .geometry import GeometryError, WaveguideGeometry, validate_thickness
from .numerics import HermitianPencil, SolverError, eig_sparse_smallest

MIN_SLICES = 16
MAX_LEVEL = 1e8
EXACT_TOL = 1e-8
MERGE_TOL = 1e-7


def spectral_derivative(n_s: int, period: float) -> np.ndarray:
    """Dense ``d/ds`` on ``n_s`` periodic samples.

    The Nyquist mode gets wavenumber ``-n_s/2`` so that ``D + i theta`` has
    no spurious low mode; ``D^H D`` then has eigenvalues ``(2 pi m / L)^2``.
    """
    k = 2 * np.pi / period * np.fft.fftfreq(n_s, 1.0 / n_s)
    f = np.fft.fft(np.eye(n_s), axis=0, norm="ortho")
    return f.conj().T @ (1j * k[:, None] * f)


@dataclass(frozen=True, eq=False)
class FiberGrid:
    """Slices ``s_i = i L / N_s`` times section nodes, with sampled coefficients.

    ``beta[i, j]`` is the metric factor at slice ``i`` and node ``j``;
    ``beta_edges[i, e]`` the same at the midpoint of transverse edge ``e``.
    """

    n_s: int
    mask: SectionMask
    epsilon: float
    theta: float
    s: np.ndarray
    twist: np.ndarray
    beta: np.ndarray
    beta_edges: np.ndarray

    @property
    def period(self) -> float:
        return float(self.s[1] - self.s[0]) * self.n_s

    @property
    def dim(self) -> int:
        return self.n_s * self.mask.n_interior

    @property
    def cell_volume(self) -> float:
        return self.period / self.n_s * self.mask.h ** 2


@dataclass(frozen=True, eq=False)
class FiberProblem:
    """Hermitian pencil of one fiber.

    ``offset`` is ``lambda0 / eps^2`` when the shifted form
    ``A - offset M`` was assembled and 0 otherwise; eigenvalues of the
    pencil plus ``offset`` are the fiber eigenvalues.
    """

    grid: FiberGrid
    a: sp.csr_matrix
    m: np.ndarray
    lambda0: float
    offset: float

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def pencil(self) -> HermitianPencil:
        return HermitianPencil(self.a, self.m)


def fiber_grid(g: WaveguideGeometry, mask: SectionMask, n_s: int, theta: float) -> FiberGrid:
    if n_s < MIN_SLICES or n_s % 2:
        raise ValueError(f"slice count must be even and >= {MIN_SLICES}, got {n_s}")
    L = g.period
    if abs(theta) > np.pi / L * (1 + 1e-12):
        raise ValueError(f"quasimomentum {theta} outside [-pi/L, pi/L]")
    if not validate_thickness(g, mask.radius):
        raise GeometryError(
            f"tube too thick: eps * max|k| * radius = {g.epsilon * g.k.max_abs() * mask.radius:.3f}")
    s = np.arange(n_s) * L / n_s
    y = mask.coordinates
    edges = transverse_edges(mask)
    beta = g.beta(s[:, None], y[None, :, 0], y[None, :, 1])
    beta_edges = g.beta(s[:, None], edges.mid[None, :, 0], edges.mid[None, :, 1])
    return FiberGrid(n_s, mask, float(g.epsilon), float(theta), s, g.twist_rate(s),
                     beta, beta_edges)


def _mixed_derivative(grid: FiberGrid, theta=None):
    """``D* = D_s + a(s) Ang + i theta`` as a sparse matrix, slice-major."""
    theta = grid.theta if theta is None else theta
    ny = grid.mask.n_interior
    d = sp.csr_matrix(spectral_derivative(grid.n_s, grid.period))
    ang = angular_derivative(grid.mask)
    eye = sp.identity(grid.dim, format="csr")
    return (sp.kron(d, sp.identity(ny)) + sp.kron(sp.diags(grid.twist), ang)
            + 1j * theta * eye).tocsr()


def assemble_fiber(g: WaveguideGeometry, mask: SectionMask, n_s: int, theta: float,
                   section: SectionSpectrum | None = None, shifted: bool = False) -> FiberProblem:
    """Stiffness and mass of the fiber form at quasimomentum ``theta``.

    ``section`` supplies ``lambda0`` for the shifted form and the default
    solver shift; it is computed from ``mask`` when omitted.
    """
    grid = fiber_grid(g, mask, n_s, theta)
    section = solve_section(mask) if section is None else section
    vol = grid.cell_volume
    ny = mask.n_interior
    w = (vol / grid.beta).ravel()
    dstar = _mixed_derivative(grid)
    a = dstar.conj().T @ sp.diags(w) @ dstar

    edges = transverse_edges(mask)
    gy = edges.gradient_matrix(ny, mask.h)
    blocks = [gy.T @ sp.diags(grid.beta_edges[i] * edges.weight * vol) @ gy
              for i in range(n_s)]
    a = a + sp.block_diag(blocks) / g.epsilon ** 2
    m = grid.beta.ravel() * vol
    a = a + sp.diags(g.c * m)
    offset = section.lambda0 / g.epsilon ** 2 if shifted else 0.0
    if shifted:
        a = a - sp.diags(offset * m)
    a = ((a + a.conj().T) / 2).tocsr()
    a.sum_duplicates()
    return FiberProblem(grid, a, m, float(section.lambda0), float(offset))


def solve_fiber_3d(p: FiberProblem, n_max: int, shift: float | None = None, seed: int = 0,
                   tol: float = 1e-8, vectors: bool = False):
    """The ``n_max`` smallest fiber eigenvalues ``E_n``, ascending.

    ``shift`` is in the unshifted frame and defaults to ``lambda0 / (2 eps^2)``.
    """
    eps = p.grid.epsilon
    if shift is None:
        shift = 0.5 * p.lambda0 / eps ** 2
    out = eig_sparse_smallest(p.a, p.m, n_max, shift - p.offset, seed=seed, tol=tol,
                              vectors=vectors)
    if vectors:
        w, v = out
        return w + p.offset, v
    return out + p.offset


def reference_levels(g: WaveguideGeometry, twist_constant: float, theta: float, n_max: int,
                     n_samples: int = 256, half_width: int = DEFAULT_HALF_WIDTH):
    """``kappa_1..kappa_nmax(theta)`` of the effective 1D operator."""
    v = effective_potential(g, twist_constant, n_samples)
    return fiber_eigenvalues(v, theta, n_max, half_width)


@dataclass(frozen=True)
class ReductionReport:
    """Fiber eigenvalues against ``lambda0/eps^2 + kappa_n(theta)``.

    ``rows`` hold ``(epsilon, theta, n, E, reference, deviation)``; the
    ablation arrays repeat the comparison with the twist term dropped from
    the reference.  ``deviation[e, t, n-1]`` indexes epsilons, thetas, levels.
    """

    epsilons: np.ndarray
    thetas: np.ndarray
    lambda0: float
    twist_constant: float
    energies: np.ndarray
    reference: np.ndarray
    deviation: np.ndarray
    reference_ablation: np.ndarray | None
    deviation_ablation: np.ndarray | None

    @property
    def n_max(self) -> int:
        return self.energies.shape[2]

    def rows(self):
        out = []
        for e, eps in enumerate(self.epsilons):
            for t, th in enumerate(self.thetas):
                for n in range(self.n_max):
                    out.append((float(eps), float(th), n + 1, float(self.energies[e, t, n]),
                                float(self.reference[e, t, n]), float(self.deviation[e, t, n])))
        return out

    def slopes(self):
        """Least-squares slope of ``log d`` against ``log eps`` per ``(theta, n)``,
        or ``None`` with fewer than two epsilons."""
        if self.epsilons.size < 2:
            return None
        x = np.log(self.epsilons)
        d = np.maximum(self.deviation, np.finfo(float).tiny)
        y = np.log(d).reshape(self.epsilons.size, -1)
        xc = x - x.mean()
        slope = xc @ (y - y.mean(axis=0)) / (xc @ xc)
        return slope.reshape(self.thetas.size, self.n_max)

    def decay_ratios(self, n: int = 1, ablation: bool = False):
        """``d_n(eps_i) / d_n(eps_{i+1})`` for consecutive epsilons, per theta."""
        d = self.deviation_ablation if ablation else self.deviation
        if d is None or self.epsilons.size < 2:
            return None
        col = d[:, :, n - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            return col[:-1] / col[1:]

    def max_deviation(self) -> float:
        return float(self.deviation.max())


def _solve_pair(args):
    g, mask, section, n_s, eps, theta, n_max, shift, seed, tol = args
    ge = g.with_epsilon(eps)
    p = assemble_fiber(ge, mask, n_s, theta, section=section, shifted=True)
    w = eig_sparse_smallest(p.a, p.m, n_max, shift, seed=seed, tol=tol)
    return w


def validate_reduction(g: WaveguideGeometry, mask: SectionMask, epsilons, thetas, n_max: int = 3,
                       n_s: int = MIN_SLICES, section: SectionSpectrum | None = None,
                       include_ablation: bool = True, seed: int = 0, workers: int = 1,
                       tol: float = 1e-8, half_width: int = DEFAULT_HALF_WIDTH) -> ReductionReport:
    """Solve the fibers on an ``(eps, theta)`` grid and compare with the 1D limit.

    The reference uses the discrete ``lambda0`` of ``mask`` and the twist
    constant of the discrete angular stencil on the same grid, so that only
    the thin-tube error remains.  Deviations are taken in the shifted frame.
    """
    eps = np.asarray(epsilons, dtype=float)
    th = np.asarray(thetas, dtype=float)
    if eps.size == 0 or th.size == 0:
        raise ValueError("need at least one epsilon and one theta")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("epsilons must be strictly descending")
    section = solve_section(mask, seed=seed) if section is None else section
    lam0 = section.lambda0
    if lam0 / eps.min() ** 2 > MAX_LEVEL:
        raise ValueError(f"lambda0/eps^2 = {lam0 / eps.min() ** 2:.3e} exceeds {MAX_LEVEL:.0e}")
    for e in eps:
        if not validate_thickness(g.with_epsilon(e), mask.radius):
            raise GeometryError(f"tube too thick at eps = {e}")
    c_disc = section.twist_constant_discrete
    v = effective_potential(g, c_disc)
    kappa = np.array([fiber_eigenvalues(v, t, n_max, half_width) for t in th])
    kappa_abl = None
    if include_ablation:
        v0 = effective_potential(g, 0.0)
        kappa_abl = np.array([fiber_eigenvalues(v0, t, n_max, half_width) for t in th])
    shift = float(v.samples.min()) - 1.0
    jobs = [(g, mask, section, n_s, e, t, n_max, shift, seed, tol) for e in eps for t in th]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_solve_pair, jobs))
    else:
        raw = [_solve_pair(j) for j in jobs]
    shifted = np.array(raw).reshape(eps.size, th.size, n_max)
    level = (lam0 / eps ** 2)[:, None, None]
    energies = shifted + level
    reference = kappa[None] + level
    deviation = np.abs(shifted - kappa[None])
    if not np.all(np.isfinite(deviation)):
        raise SolverError("non-finite deviation in reduction sweep")
    ref_abl = dev_abl = None
    if include_ablation:
        ref_abl = kappa_abl[None] + level
        dev_abl = np.abs(shifted - kappa_abl[None])
    return ReductionReport(eps, th, float(lam0), float(c_disc), energies, reference, deviation,
                           ref_abl, dev_abl)


def fiber_sweep(g: WaveguideGeometry, mask: SectionMask, thetas, n_max: int,
                n_s: int = MIN_SLICES, section: SectionSpectrum | None = None, seed: int = 0,
                workers: int = 1, tol: float = 1e-8):
    """``E[t, n-1] = E_n(eps, thetas[t])`` at the geometry's ``eps``."""
    section = solve_section(mask, seed=seed) if section is None else section
    v = effective_potential(g, section.twist_constant_discrete)
    shift = float(v.samples.min()) - 1.0
    jobs = [(g, mask, section, n_s, g.epsilon, t, n_max, shift, seed, tol) for t in thetas]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_solve_pair, jobs))
    else:
        raw = [_solve_pair(j) for j in jobs]
    return np.array(raw) + section.lambda0 / g.epsilon ** 2


@dataclass(frozen=True)
class SpectrumUnion:
    """Bands ``[min_theta E_n, max_theta E_n]``, their union and the gaps between."""

    bands: np.ndarray
    intervals: list
    gaps: list


def spectrum_union(energies, tol: float = MERGE_TOL) -> SpectrumUnion:
    """Merge per-level ranges of ``energies[theta, n]`` into disjoint sorted
    intervals; ranges closer than ``tol`` are joined."""
    e = np.asarray(energies, dtype=float)
    if e.ndim != 2 or e.size == 0:
        raise ValueError("energies must be a nonempty (theta, n) array")
    bands = np.column_stack([e.min(axis=0), e.max(axis=0)])
    order = np.argsort(bands[:, 0], kind="stable")
    merged = []
    for lo, hi in bands[order]:
        if merged and lo <= merged[-1][1] + tol:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    intervals = [(float(a), float(b)) for a, b in merged]
    gaps = [(intervals[i][1], intervals[i + 1][0]) for i in range(len(intervals) - 1)]
    return SpectrumUnion(bands, intervals, gaps)


def kronecker_reference(g: WaveguideGeometry, mask: SectionMask, n_s: int, theta: float,
                        section: SectionSpectrum | None = None):
    """``vol [ (D + i theta)^H (D + i theta) (x) I + I (x) Lap / eps^2 + c ]``.

    Equals the assembled stiffness for a straight untwisted tube.
    """
    ny = mask.n_interior
    h_s = g.period / n_s
    vol = h_s * mask.h ** 2
    d = spectral_derivative(n_s, g.period) + 1j * theta * np.eye(n_s)
    lon = sp.csr_matrix(d.conj().T @ d)
    lap = dirichlet_laplacian(mask)
    a = (sp.kron(lon, sp.identity(ny)) + sp.kron(sp.identity(n_s), lap) / g.epsilon ** 2
         + g.c * sp.identity(n_s * ny))
    return (vol * a).tocsr()

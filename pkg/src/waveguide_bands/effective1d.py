"""Effective 1D periodic operator: potential, Floquet fibers, bands and gaps.

The thin-tube limit is governed by

    T^theta w = (-i d/ds + theta)^2 w + V(s) w,   w(0) = w(L), w'(0) = w'(L),
    V(s) = C(S) (tau + alpha')^2 + c - k^2 / 4,

on ``0 <= s <= L``.  Fibers are discretized in the plane-wave basis
``exp(2 pi i n s / L) / sqrt(L)``, ``|n| <= N``, where the potential acts by
convolution with its Fourier coefficients

    V(s) = sum_n nu_n exp(2 pi i n s / L) / sqrt(L).

Band edges come from the periodic (``theta = 0``) and antiperiodic
(``theta = pi / L``) problems; gap ``n`` opens between eigenvalues ``n`` and
``n + 1`` of the antiperiodic problem for odd ``n`` and of the periodic
problem for even ``n``.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import WaveguideGeometry, scale_geometry
from .numerics import eigh_dense, fft_periodic, is_power_of_two

DEFAULT_SAMPLES = 256
DEFAULT_HALF_WIDTH = 64
DEFAULT_THETA_COUNT = 33
DEFAULT_N_MAX = 8
SPLIT_TOL = 1e-9
ALIAS_TOL = 1e-13


def fourier_coefficients(samples, period):
    """``nu_n`` for ``n = -M/2 .. M/2`` from ``M`` uniform samples on ``[0, L)``.

    ``nu_n = (1 / sqrt(L)) (L / M) sum_j V(s_j) exp(-2 pi i n s_j / L)``.
    The two Nyquist entries ``n = +-M/2`` hold the same aliased value.
    """
    v = np.asarray(samples, dtype=float)
    m = v.size
    c = fft_periodic(v) * np.sqrt(period)
    return np.concatenate([c[m // 2:], c[: m // 2 + 1]])


@dataclass(frozen=True, eq=False)
class EffectivePotential:
    """Uniform samples of a real ``L``-periodic potential and its coefficients."""

    period: float
    samples: np.ndarray
    coefficients: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.samples, dtype=float)
        if v.ndim != 1 or not is_power_of_two(v.size) or v.size < 64:
            raise ValueError(f"need a power-of-two sample count >= 64, got {v.size}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        object.__setattr__(self, "samples", v)
        object.__setattr__(self, "coefficients", fourier_coefficients(v, self.period))

    @classmethod
    def from_function(cls, f, period, n_samples=DEFAULT_SAMPLES):
        s = np.arange(n_samples) * period / n_samples
        return cls(float(period), np.broadcast_to(np.asarray(f(s), dtype=float), s.shape).copy())

    @property
    def n_samples(self) -> int:
        return self.samples.size

    @property
    def grid(self):
        return np.arange(self.n_samples) * self.period / self.n_samples

    @property
    def max_mode(self) -> int:
        return self.n_samples // 2

    def nu(self, n):
        """Coefficient ``nu_n``; zero beyond the stored range."""
        n = np.asarray(n)
        top = self.max_mode
        inside = np.abs(n) <= top
        out = np.zeros(n.shape, dtype=complex)
        out[inside] = self.coefficients[n[inside] + top]
        return out if out.ndim else complex(out)

    def tail_magnitude(self):
        """Largest ``|nu_n|`` over the upper quarter of the stored modes."""
        top = self.max_mode
        n = np.arange(-top, top + 1)
        return float(np.abs(self.coefficients[np.abs(n) > top // 2]).max())

    def shifted(self, a):
        return EffectivePotential(self.period, self.samples + a)

    def scaled(self, factor):
        return EffectivePotential(self.period, factor * self.samples)

    def without_mean(self):
        return EffectivePotential(self.period, self.samples - self.samples.mean())


def effective_potential(g: WaveguideGeometry, twist_constant: float,
                        n_samples: int = DEFAULT_SAMPLES) -> EffectivePotential:
    """``V(s) = C (tau + alpha')^2 + c - k^2/4`` on ``n_samples`` points."""
    if not is_power_of_two(n_samples) or n_samples < 64:
        raise ValueError(f"sample count must be a power of two >= 64, got {n_samples}")
    if twist_constant < 0:
        raise ValueError(f"twist constant must be nonnegative, got {twist_constant}")
    s = np.arange(n_samples) * g.period / n_samples
    v = twist_constant * g.twist_rate(s) ** 2 + g.c - g.curvature(s) ** 2 / 4
    if not v.min() > 0:
        raise ValueError(f"effective potential is not positive (min {v.min()})")
    return EffectivePotential(g.period, v)


@dataclass(frozen=True, eq=False)
class FloquetMatrix:
    """Plane-wave matrix of one fiber.

    Periodic: modes ``n = -N .. N`` with kinetic term ``(2 pi n / L + theta)^2``.
    Antiperiodic: modes ``(2m + 1) pi / L`` for ``m = -N .. N-1`` (a symmetric
    set of ``2N`` odd multiples), ``theta`` unused.
    """

    theta: float
    half_width: int
    bc: str
    period: float
    wavenumbers: np.ndarray
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def assemble_floquet(v: EffectivePotential, theta: float = 0.0,
                     half_width: int = DEFAULT_HALF_WIDTH, bc: str = "periodic") -> FloquetMatrix:
    L = v.period
    N = int(half_width)
    if N < 1:
        raise ValueError(f"basis half-width must be >= 1, got {N}")
    if bc == "periodic":
        if abs(theta) > np.pi / L * (1 + 1e-12):
            raise ValueError(f"quasimomentum {theta} outside [-pi/L, pi/L]")
        n = np.arange(-N, N + 1)
        k = 2 * np.pi * n / L + theta
    elif bc == "antiperiodic":
        theta = np.pi / L
        m = np.arange(-N, N)
        n = m  # index differences are what the potential sees
        k = (2 * m + 1) * np.pi / L
    else:
        raise ValueError(f"bc must be 'periodic' or 'antiperiodic', got {bc!r}")

    diff = n[:, None] - n[None, :]
    span = int(np.abs(diff).max())
    if span > v.max_mode and v.tail_magnitude() >= ALIAS_TOL:
        raise ValueError(
            f"basis needs Fourier modes up to {span} but only {v.max_mode} are stored and the "
            f"tail is not negligible ({v.tail_magnitude():.2e}); use more samples")
    h = v.nu(diff) / np.sqrt(L)
    # symmetrize the Nyquist alias so the matrix stays exactly Hermitian
    h = 0.5 * (h + h.conj().T)
    h[np.diag_indices_from(h)] = k ** 2 + v.nu(0).real / np.sqrt(L)
    return FloquetMatrix(float(theta), N, bc, L, k, h)


def solve_fiber_1d(m: FloquetMatrix, n_max: int):
    """The ``n_max`` smallest eigenvalues, ascending, with multiplicity."""
    if not 1 <= n_max <= m.dim:
        raise ValueError(f"n_max={n_max} outside 1..{m.dim}")
    return eigh_dense(m.matrix, n_max)


def fiber_eigenvalues(v, theta, n_max, half_width=DEFAULT_HALF_WIDTH, bc="periodic"):
    return solve_fiber_1d(assemble_floquet(v, theta, half_width, bc), n_max)


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


@dataclass(frozen=True, eq=False)
class BandStructure:
    """``kappa[i, n-1] = kappa_n(thetas[i])`` on ``[0, pi/L]``.

    Odd bands should increase and even bands decrease on ``[0, pi/L]``;
    ``monotonicity_violations[n-1]`` is the largest step against that
    direction (0 when the band is monotone).
    """

    period: float
    thetas: np.ndarray
    kappa: np.ndarray
    monotonicity_violations: np.ndarray

    @property
    def n_max(self) -> int:
        return self.kappa.shape[1]

    def monotone(self, tol=SPLIT_TOL):
        return self.monotonicity_violations <= tol

    def full_zone(self):
        """Grid over ``[-pi/L, pi/L]`` filled by the symmetry ``kappa(-theta) = kappa(theta)``."""
        th = np.concatenate([-self.thetas[:0:-1], self.thetas])
        return th, np.concatenate([self.kappa[:0:-1], self.kappa])

    def bands(self):
        return np.column_stack([self.kappa.min(axis=0), self.kappa.max(axis=0)])


def compute_bands(v: EffectivePotential, theta_count=DEFAULT_THETA_COUNT, n_max=DEFAULT_N_MAX,
                  half_width=DEFAULT_HALF_WIDTH, workers=1) -> BandStructure:
    if theta_count < 9:
        raise ValueError(f"theta_count must be >= 9, got {theta_count}")
    thetas = np.linspace(0.0, np.pi / v.period, theta_count)
    rows = _map(lambda th: fiber_eigenvalues(v, th, n_max, half_width), thetas, workers)
    kappa = np.array(rows)
    steps = np.diff(kappa, axis=0)
    sign = np.where(np.arange(1, n_max + 1) % 2 == 1, 1.0, -1.0)
    violations = np.maximum(0.0, -(steps * sign)).max(axis=0, initial=0.0)
    return BandStructure(v.period, thetas, kappa, violations)


@dataclass(frozen=True)
class GapReport:
    """Band intervals ``B_n``, gaps ``G_n`` (``None`` when closed) and widths.

    ``periodic[j]`` is the ``(j+1)``-th periodic eigenvalue (``kappa(0)``),
    ``antiperiodic[j]`` the antiperiodic one (``kappa(pi/L)``).
    """

    period: float
    periodic: np.ndarray
    antiperiodic: np.ndarray
    bands: list
    gaps: list
    widths: np.ndarray
    interlacing_ok: bool

    @property
    def n_max(self) -> int:
        return len(self.bands)

    def open_gaps(self):
        return [(n + 1, g) for n, g in enumerate(self.gaps) if g is not None]

    def to_dict(self):
        return {
            "period": self.period,
            "interlacing_ok": self.interlacing_ok,
            "periodic_eigenvalues": self.periodic.tolist(),
            "antiperiodic_eigenvalues": self.antiperiodic.tolist(),
            "rows": [
                {"n": n + 1, "band": list(map(float, b)),
                 "gap": None if g is None else list(map(float, g)),
                 "width": float(w)}
                for n, (b, g, w) in enumerate(zip(self.bands, self.gaps, self.widths))
            ],
        }


def _interlacing(per, anti, n_max, tol):
    chain = []
    for n in range(1, n_max + 1):
        if n % 2:
            chain += [(per[n - 1], anti[n - 1], True)]
            if n < n_max:
                chain += [(anti[n - 1], anti[n], False)]
        else:
            chain += [(anti[n - 1], per[n - 1], True)]
            if n < n_max:
                chain += [(per[n - 1], per[n], False)]
    # strict links may degenerate only at the closed-gap noise level
    return all(b - a >= -tol for a, b, _ in chain)


def compute_gaps(v: EffectivePotential, n_max=DEFAULT_N_MAX, half_width=DEFAULT_HALF_WIDTH,
                 split_tol=SPLIT_TOL) -> GapReport:
    per = fiber_eigenvalues(v, 0.0, n_max + 1, half_width, "periodic")
    anti = fiber_eigenvalues(v, 0.0, n_max + 1, half_width, "antiperiodic")
    bands, gaps, widths = [], [], []
    for n in range(1, n_max + 1):
        lo, hi = (per[n - 1], anti[n - 1]) if n % 2 else (anti[n - 1], per[n - 1])
        bands.append((float(lo), float(hi)))
        edge = anti if n % 2 else per
        a, b = edge[n - 1], edge[n]
        if b - a > split_tol:
            gaps.append((float(a), float(b)))
            widths.append(float(b - a))
        else:
            gaps.append(None)
            widths.append(0.0)
    return GapReport(v.period, per, anti, bands, gaps, np.array(widths),
                     _interlacing(per, anti, n_max, split_tol))


def gap_width(v, n, half_width=DEFAULT_HALF_WIDTH):
    """Width of gap ``n`` without thresholding (raw doublet splitting)."""
    bc = "antiperiodic" if n % 2 else "periodic"
    e = fiber_eigenvalues(v, 0.0, n + 1, half_width, bc)
    return float(e[n] - e[n - 1])


@dataclass(frozen=True)
class GapSlopeFit:
    """Gap widths ``delta_n(mu)`` of ``mu W`` and their first-order law.

    ``relative_deviation`` is ``None`` when the predicted slope vanishes;
    then the gap is second order and ``ratios = delta / mu`` should shrink
    with ``mu``.
    """

    n: int
    mu: np.ndarray
    delta: np.ndarray
    fitted_slope: float
    predicted_slope: float
    relative_deviation: float | None
    omega: complex

    @property
    def second_order(self) -> bool:
        return self.predicted_slope == 0.0

    @property
    def ratios(self):
        return self.delta / self.mu


def gap_slope_fit(w: EffectivePotential, n: int, mu_list, half_width=DEFAULT_HALF_WIDTH,
                  zero_tol=1e-10) -> GapSlopeFit:
    """Least-squares slope (through the origin) of ``delta_n(mu)`` against
    the first-order prediction ``(2 / sqrt(L)) |omega_n|``."""
    mu = np.asarray(sorted(mu_list), dtype=float)
    if mu.size < 3:
        raise ValueError("slope fit needs at least 3 values of mu")
    if not (mu.min() > 0 and mu.max() <= 0.1):
        raise ValueError("mu values must lie in (0, 0.1]")
    if mu.max() / mu.min() < 10 * (1 - 1e-12):
        raise ValueError("mu values must span at least a decade")
    if n < 1:
        raise ValueError(f"gap index must be >= 1, got {n}")
    delta = np.array([gap_width(w.scaled(m), n, half_width) for m in mu])
    delta = np.maximum(delta, 0.0)
    fitted = float(np.dot(mu, delta) / np.dot(mu, mu))
    omega = complex(w.nu(n))
    predicted = 2 / np.sqrt(w.period) * abs(omega)
    if abs(omega) < zero_tol:
        predicted, dev = 0.0, None
    else:
        dev = abs(fitted - predicted) / predicted
    return GapSlopeFit(n, mu, delta, fitted, float(predicted), dev, omega)


@dataclass(frozen=True)
class FirstGap:
    index: int | None
    interval: tuple | None
    report: GapReport


def first_open_gap(v: EffectivePotential, tol=1e-6, n_max=DEFAULT_N_MAX,
                   half_width=DEFAULT_HALF_WIDTH) -> FirstGap:
    """Smallest ``n <= n_max`` whose gap is wider than ``tol``.

    Finding none means every doublet up to ``n_max`` is degenerate, which by
    Borg's theorem points to a constant potential; a warning is issued.
    """
    report = compute_gaps(v, n_max, half_width)
    for n, (g, w) in enumerate(zip(report.gaps, report.widths), start=1):
        if g is not None and w > tol:
            return FirstGap(n, g, report)
    warnings.warn(f"no gap wider than {tol} below n_max={n_max}; the potential may be constant",
                  stacklevel=2)
    return FirstGap(None, None, report)


@dataclass(frozen=True)
class GapLocation:
    """Predicted and measured width of gap ``n`` for the scaled tube.

    ``interval`` is the gap of the scaled 1D operator; the 3D gap sits at
    ``lambda0 / eps^2`` plus these endpoints, up to ``O(eps)``.
    """

    n: int
    gamma: float
    nu: complex
    predicted: float
    measured: float
    relative_deviation: float
    interval: tuple | None

    @property
    def ratio(self) -> float:
        return self.measured / self.predicted

    def offset_interval(self, lambda0, epsilon):
        if self.interval is None:
            return None
        shift = lambda0 / epsilon ** 2
        return (self.interval[0] + shift, self.interval[1] + shift)


def locate_gap_by_fourier(g: WaveguideGeometry, twist_constant: float, n: int, gamma: float,
                          n_samples=DEFAULT_SAMPLES, half_width=DEFAULT_HALF_WIDTH,
                          min_coefficient=1e-10) -> GapLocation:
    """Width of gap ``n`` after scaling the tube by ``gamma``, against
    ``(2 / sqrt(L)) gamma^2 |nu_n|``."""
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    v = effective_potential(g, twist_constant, n_samples)
    nu = complex(v.nu(n))
    if abs(nu) < min_coefficient:
        raise ValueError(f"Fourier coefficient nu_{n} = {abs(nu):.2e} vanishes; no first-order gap")
    vg = effective_potential(scale_geometry(g, gamma), twist_constant, n_samples)
    predicted = 2 / np.sqrt(g.period) * gamma ** 2 * abs(nu)
    measured = gap_width(vg, n, half_width)
    report = compute_gaps(vg, n, half_width)
    interval = report.gaps[n - 1]
    return GapLocation(n, float(gamma), nu, float(predicted), float(max(measured, 0.0)),
                       abs(measured - predicted) / predicted, interval)

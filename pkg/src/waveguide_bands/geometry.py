"""Periodic tube geometry: curvature, torsion and twist profiles.

A tube is described by L-periodic curvature ``k``, torsion ``tau`` and twist
angle ``alpha`` of the cross-section, a thickness ``epsilon`` and the energy
shift ``c`` (which must exceed ``max k^2/4``).  Only ``k`` and the twist rate
``tau + alpha'`` enter the effective 1D potential; ``alpha`` itself also
enters the 3D metric factor.

Profiles are given either as uniform samples or as complex Fourier modes,
with the convention ``f(s) = sum_m c_m exp(2 pi i m s / L)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

THICKNESS_MARGIN = 0.05
MIN_SAMPLES = 8


class GeometryError(ValueError):
    pass


def _next_pow2(n):
    return 1 << max(0, int(np.ceil(np.log2(max(n, 1)))))


@dataclass(frozen=True, eq=False)
class PeriodicProfile:
    """An L-periodic real function with its first derivative.

    Build with :meth:`from_samples`, :meth:`from_modes` or :meth:`constant`.
    Sample input is evaluated by trigonometric interpolation; its
    derivative comes from centered differences of the samples (second
    order in the sample spacing).  Mode input is differentiated exactly.
    """

    period: float
    kind: str
    samples: np.ndarray | None = None
    mode_numbers: np.ndarray | None = None
    mode_values: np.ndarray | None = None
    _eval: tuple = field(init=False, repr=False)
    _deriv: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.period) and self.period > 0):
            raise GeometryError(f"period must be positive, got {self.period}")
        if self.kind == "samples":
            x = np.asarray(self.samples, dtype=float)
            if x.ndim != 1 or x.size < MIN_SAMPLES:
                raise GeometryError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
            if not np.all(np.isfinite(x)):
                raise GeometryError("profile samples must be finite")
            object.__setattr__(self, "samples", x)
            h = self.period / x.size
            dx = (np.roll(x, -1) - np.roll(x, 1)) / (2 * h)
            object.__setattr__(self, "_eval", _interp_modes(x))
            object.__setattr__(self, "_deriv", _interp_modes(dx))
        elif self.kind == "modes":
            m, c = _complete_modes(self.mode_numbers, self.mode_values)
            object.__setattr__(self, "mode_numbers", m)
            object.__setattr__(self, "mode_values", c)
            object.__setattr__(self, "_eval", (m, c))
            object.__setattr__(self, "_deriv", (m, 2j * np.pi * m / self.period * c))
        else:
            raise GeometryError(f"unknown profile kind {self.kind!r}")

    @classmethod
    def from_samples(cls, samples, period):
        return cls(float(period), "samples", samples=np.asarray(samples, dtype=float))

    @classmethod
    def from_modes(cls, modes, period):
        """``modes`` is a mapping ``m -> complex`` or a list of ``(m, re, im)``."""
        if isinstance(modes, dict):
            items = [(int(m), complex(v)) for m, v in modes.items()]
        else:
            items = []
            for row in modes:
                if len(row) != 3:
                    raise GeometryError(f"mode entries are [m, re, im], got {row!r}")
                m, re, im = row
                if float(m) != int(m):
                    raise GeometryError(f"mode number must be an integer, got {m!r}")
                items.append((int(m), complex(re, im)))
        m = np.array([i[0] for i in items], dtype=int)
        c = np.array([i[1] for i in items], dtype=complex)
        return cls(float(period), "modes", mode_numbers=m, mode_values=c)

    @classmethod
    def constant(cls, value, period):
        return cls.from_modes({0: float(value)}, period)

    @classmethod
    def from_function(cls, f, period, n=256):
        s = np.arange(n) * period / n
        return cls.from_samples(f(s), period)

    def __call__(self, s):
        return _evaluate(self._eval, self.period, s)

    def derivative(self, s):
        return _evaluate(self._deriv, self.period, s)

    def grid(self, n=None):
        """Uniform evaluation grid: the sample grid, or a power of two that
        resolves every stored mode."""
        if n is None:
            if self.kind == "samples":
                n = self.samples.size
            else:
                top = int(np.abs(self.mode_numbers).max(initial=0))
                n = max(256, _next_pow2(8 * top + 1))
        return np.arange(n) * self.period / n

    def max_abs(self):
        return float(np.abs(self(self.grid())).max())

    def scaled(self, factor):
        if self.kind == "samples":
            return PeriodicProfile.from_samples(factor * self.samples, self.period)
        return PeriodicProfile(self.period, "modes", mode_numbers=self.mode_numbers.copy(),
                               mode_values=factor * self.mode_values)

    def to_config(self):
        if self.kind == "samples":
            return {"samples": self.samples.tolist()}
        return {"modes": [[int(m), float(c.real), float(c.imag)]
                          for m, c in zip(self.mode_numbers, self.mode_values)]}


def _complete_modes(m, c, tol=1e-12):
    m = np.asarray(m, dtype=int)
    c = np.asarray(c, dtype=complex)
    table = {}
    for mi, ci in zip(m.tolist(), c.tolist()):
        if mi in table:
            raise GeometryError(f"mode {mi} given twice")
        table[mi] = ci
    if 0 in table:
        if abs(table[0].imag) > tol * max(1.0, abs(table[0])):
            raise GeometryError("mode 0 must be real for a real profile")
        table[0] = complex(table[0].real, 0.0)
    for mi in list(table):
        partner = table.get(-mi)
        if partner is None:
            table[-mi] = table[mi].conjugate()
        elif abs(partner - table[mi].conjugate()) > tol * max(1.0, abs(partner)):
            raise GeometryError(f"modes {mi} and {-mi} are not complex conjugates")
    keys = np.array(sorted(table), dtype=int)
    return keys, np.array([table[k] for k in keys], dtype=complex)


def _interp_modes(x):
    """Trigonometric-interpolation modes of real samples.

    An even-length Nyquist term is split evenly between +-N/2 so the
    interpolant stays real.
    """
    n = x.size
    c = np.fft.fft(x) / n
    m = np.fft.fftfreq(n, 1.0 / n).astype(int)
    if n % 2 == 0:
        nyq = n // 2
        c = np.append(c, c[nyq] / 2)
        c[nyq] /= 2
        m = np.append(m, nyq)
    return m, c


def _evaluate(modes, period, s):
    m, c = modes
    s = np.asarray(s, dtype=float)
    phase = np.exp(2j * np.pi * np.multiply.outer(s, m) / period)
    return (phase @ c).real


@dataclass(frozen=True, eq=False)
class WaveguideGeometry:
    """Curvature, torsion and twist profiles of a thin periodic tube.

    ``gamma`` records the cumulative scale applied by :func:`scale_geometry`;
    the profiles and ``c`` stored here are already scaled.
    """

    k: PeriodicProfile
    tau: PeriodicProfile
    alpha: PeriodicProfile
    epsilon: float
    c: float
    gamma: float = 1.0

    def __post_init__(self):
        periods = {self.k.period, self.tau.period, self.alpha.period}
        if len(periods) != 1:
            raise GeometryError(f"profiles have different periods: {sorted(periods)}")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise GeometryError(f"epsilon must be positive, got {self.epsilon}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise GeometryError(f"gamma must be positive, got {self.gamma}")
        kmax2 = self.k.max_abs() ** 2 / 4
        if not self.c > kmax2:
            raise GeometryError(
                f"c = {self.c} must exceed max k^2/4 = {kmax2} (assumption c > |k^2/4|_inf)")
        a0 = float(self.alpha(0.0))
        if abs(a0) > 1e-12:
            raise GeometryError(f"twist angle must vanish at s = 0, got alpha(0) = {a0}")

    @property
    def period(self) -> float:
        return self.k.period

    def curvature(self, s):
        return self.k(s)

    def twist_rate(self, s):
        """``tau(s) + alpha'(s)``."""
        return self.tau(s) + self.alpha.derivative(s)

    def beta(self, s, y1, y2):
        """Metric factor ``1 - eps k(s) <z_alpha(s), y>`` with
        ``z_alpha = (cos alpha, -sin alpha)``; broadcasts over its inputs."""
        s = np.asarray(s, dtype=float)
        a = self.alpha(s)
        return 1.0 - self.epsilon * self.k(s) * (np.cos(a) * y1 - np.sin(a) * y2)

    def with_epsilon(self, epsilon):
        return replace(self, epsilon=float(epsilon))


def twist_rate(g: WaveguideGeometry, n=256) -> PeriodicProfile:
    """The twist rate ``tau + alpha'`` as a sampled profile on ``n`` points."""
    s = np.arange(n) * g.period / n
    return PeriodicProfile.from_samples(g.twist_rate(s), g.period)


def _profile_from_config(block, period, name):
    if not isinstance(block, dict):
        raise GeometryError(f"profile {name!r} must be a table with 'samples' or 'modes'")
    unknown = set(block) - {"samples", "modes", "period"}
    if unknown:
        raise GeometryError(f"unknown keys in profile {name!r}: {sorted(unknown)}")
    if "period" in block and not np.isclose(float(block["period"]), period, rtol=0, atol=1e-12):
        raise GeometryError(f"profile {name!r} has period {block['period']}, expected {period}")
    if ("samples" in block) == ("modes" in block):
        raise GeometryError(f"profile {name!r} needs exactly one of 'samples' or 'modes'")
    if "samples" in block:
        return PeriodicProfile.from_samples(block["samples"], period)
    return PeriodicProfile.from_modes(block["modes"], period)


GEOMETRY_KEYS = {"period", "epsilon", "c", "gamma", "k", "tau", "alpha"}


def build_geometry(config: dict) -> WaveguideGeometry:
    """Validated geometry from a config mapping.

    Keys: ``period``, ``epsilon``, ``c``, optional ``gamma`` (applied through
    :func:`scale_geometry`), and profile tables ``k``, ``tau``, ``alpha``,
    each holding ``samples = [...]`` or ``modes = [[m, re, im], ...]``.
    """
    unknown = set(config) - GEOMETRY_KEYS
    if unknown:
        raise GeometryError(f"unknown geometry keys: {sorted(unknown)}")
    missing = {"period", "epsilon", "c", "k", "tau", "alpha"} - set(config)
    if missing:
        raise GeometryError(f"missing geometry keys: {sorted(missing)}")
    period = float(config["period"])
    if not period > 0:
        raise GeometryError(f"period must be positive, got {period}")
    profiles = {name: _profile_from_config(config[name], period, name)
                for name in ("k", "tau", "alpha")}
    g = WaveguideGeometry(epsilon=float(config["epsilon"]), c=float(config["c"]), **profiles)
    gamma = float(config.get("gamma", 1.0))
    return g if gamma == 1.0 else scale_geometry(g, gamma)


def validate_thickness(g: WaveguideGeometry, section_radius: float,
                       margin: float = THICKNESS_MARGIN) -> bool:
    """True when ``eps * max|k| * radius < 1 - margin``, so the metric factor
    stays above ``margin`` on the whole tube."""
    return bool(g.epsilon * g.k.max_abs() * section_radius < 1.0 - margin)


def scale_geometry(g: WaveguideGeometry, gamma: float) -> WaveguideGeometry:
    """Apply ``k -> gamma k``, ``tau + alpha' -> gamma (tau + alpha')``,
    ``c -> gamma^2 c``.

    The twist rate is scaled by scaling both ``tau`` and ``alpha``, which
    keeps ``alpha(0) = 0``.  The effective potential scales as ``gamma^2 V``.
    """
    gamma = float(gamma)
    if not (np.isfinite(gamma) and gamma > 0):
        raise GeometryError(f"scale must be positive, got {gamma}")
    if gamma == 1.0:
        return g
    return WaveguideGeometry(
        k=g.k.scaled(gamma),
        tau=g.tau.scaled(gamma),
        alpha=g.alpha.scaled(gamma),
        epsilon=g.epsilon,
        c=gamma ** 2 * g.c,
        gamma=g.gamma * gamma,
    )


def frenet_from_curve(points, period, speed_tol=1e-6, min_curvature=1e-8):
    """Curvature and torsion of an arc-length parametrized periodic curve.

    ``points`` holds ``N + 1`` samples ``r(s_j)``, ``s_j = j L / N``, covering
    one full period including the endpoint, so ``r(L) - r(0)`` is the period
    vector.  Derivatives use centered differences (second order); the
    unit-speed check uses a spectral derivative so that it is not limited by
    the difference error.

    Returns ``(k, tau)`` as sampled :class:`PeriodicProfile` objects.
    """
    r = np.asarray(points, dtype=float)
    if r.ndim != 2 or r.shape[1] != 3 or r.shape[0] < MIN_SAMPLES + 1:
        raise GeometryError("points must have shape (N + 1, 3) with N >= 8")
    n = r.shape[0] - 1
    L = float(period)
    h = L / n
    u = r[-1] - r[0]
    r = r[:-1]
    s = np.arange(n) * h

    periodic_part = r - np.outer(s, u) / L
    m = np.fft.fftfreq(n, 1.0 / n)
    if n % 2 == 0:
        m[n // 2] = 0.0
    spectral_speed = np.fft.ifft(2j * np.pi * m[:, None] / L
                                 * np.fft.fft(periodic_part, axis=0), axis=0).real + u / L
    speed = np.linalg.norm(spectral_speed, axis=1)
    if np.abs(speed - 1).max() > speed_tol:
        raise GeometryError(
            f"curve is not arc-length parametrized (max ||r'| - 1| = {np.abs(speed - 1).max():.2e})")

    def shifted(j):
        # r(s + j h) for integer j, using r(s + L) = r(s) + u
        idx = np.arange(n) + j
        wraps = np.floor_divide(idx, n)
        return r[idx % n] + wraps[:, None] * u

    rp1, rm1, rp2, rm2 = shifted(1), shifted(-1), shifted(2), shifted(-2)
    d1 = (rp1 - rm1) / (2 * h)
    d2 = (rp1 - 2 * r + rm1) / h ** 2
    d3 = (rp2 - 2 * rp1 + 2 * rm1 - rm2) / (2 * h ** 3)

    k = np.linalg.norm(d2, axis=1)
    if k.min() < min_curvature:
        raise GeometryError(
            "curvature vanishes on the grid; the Frenet frame is undefined "
            "(supply k and tau directly for curves with straight pieces)")
    cross = np.cross(d1, d2)
    tau = np.einsum("ij,ij->i", cross, d3) / np.einsum("ij,ij->i", cross, cross)
    return PeriodicProfile.from_samples(k, L), PeriodicProfile.from_samples(tau, L)

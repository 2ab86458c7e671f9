"""Dirichlet ground state of the cross-section and its twist constant.

The section ``S`` is rasterized on a uniform grid aligned with the section
origin (the point where the reference curve pierces ``S``).  ``-Delta`` is
discretized with the 5-point stencil on the interior nodes; exterior nodes
are dropped and the Dirichlet condition enters through a symmetric ghost
value that uses the exact distance to the boundary along each grid line,
which keeps the matrix symmetric and the eigenvalues second order on curved
boundaries.  On a grid whose lines hit the boundary at nodes (the centered
rectangle) this is exactly the plain 5-point Dirichlet Laplacian.

Note the section origin matters: ``C(S)`` is computed about it.  Disk and
rectangle default to their centers, polygons to their centroid.  The unit
square has corners rather than a smooth boundary; it is kept as a test
domain because its ground state is known in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.ndimage
import scipy.sparse as sp

from .numerics import SolverError, eig_sparse_smallest

MIN_INTERIOR_NODES = 200
MIN_BOUNDARY_FRACTION = 1e-3

# +y1, -y1, +y2, -y2
DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class SectionError(ValueError):
    pass


@dataclass(frozen=True)
class Disk:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise SectionError(f"disk radius must be positive, got {self.radius}")

    @property
    def center(self):
        return np.zeros(2)

    def bounds(self):
        r = self.radius
        return np.array([-r, -r]), np.array([r, r])

    def contains(self, p1, p2, tol):
        return np.hypot(p1, p2) < self.radius - tol

    def ray_distance(self, p1, p2, d):
        # |p + t d| = r with |d| = 1
        b = p1 * d[0] + p2 * d[1]
        disc = b * b - (p1 * p1 + p2 * p2 - self.radius ** 2)
        return -b + np.sqrt(np.maximum(disc, 0.0))

    def vertices_or_extent(self):
        t = np.linspace(0, 2 * np.pi, 721)
        return np.column_stack([self.radius * np.cos(t), self.radius * np.sin(t)])


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle of width ``a`` (along y1) and height ``b``,
    centered at the coordinate origin."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise SectionError(f"rectangle sides must be positive, got {self.a}, {self.b}")

    @property
    def center(self):
        return np.zeros(2)

    def bounds(self):
        return np.array([-self.a / 2, -self.b / 2]), np.array([self.a / 2, self.b / 2])

    def contains(self, p1, p2, tol):
        return (np.abs(p1) < self.a / 2 - tol) & (np.abs(p2) < self.b / 2 - tol)

    def ray_distance(self, p1, p2, d):
        half = (self.a / 2, self.b / 2)
        axis = 0 if d[0] != 0 else 1
        p = p1 if axis == 0 else p2
        sign = d[axis]
        return half[axis] - sign * p

    def vertices_or_extent(self):
        a, b = self.a / 2, self.b / 2
        return np.array([[-a, -b], [a, -b], [a, b], [-a, b]])


@dataclass(frozen=True)
class Polygon:
    vertices: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise SectionError("a polygon needs at least 3 vertices [y1, y2]")
        if abs(self.area) < 1e-14:
            raise SectionError("polygon has zero area")
        object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))

    @property
    def _v(self):
        return np.asarray(self.vertices, dtype=float)

    @property
    def area(self):
        v = np.asarray(self.vertices, dtype=float)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)

    @property
    def center(self):
        v = self._v
        x, y = v[:, 0], v[:, 1]
        cross = x * np.roll(y, -1) - np.roll(x, -1) * y
        a = 0.5 * cross.sum()
        return np.array([np.sum((x + np.roll(x, -1)) * cross),
                         np.sum((y + np.roll(y, -1)) * cross)]) / (6 * a)

    def bounds(self):
        v = self._v
        return v.min(axis=0), v.max(axis=0)

    def _edge_distance(self, p1, p2):
        v = self._v
        a, b = v, np.roll(v, -1, axis=0)
        ab = b - a
        px = p1[..., None] - a[:, 0]
        py = p2[..., None] - a[:, 1]
        t = np.clip((px * ab[:, 0] + py * ab[:, 1]) / np.einsum("ij,ij->i", ab, ab), 0, 1)
        dx = px - t * ab[:, 0]
        dy = py - t * ab[:, 1]
        return np.sqrt(dx * dx + dy * dy).min(axis=-1)

    def contains(self, p1, p2, tol):
        v = self._v
        x0, y0 = v[:, 0], v[:, 1]
        x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
        P1, P2 = p1[..., None], p2[..., None]
        straddle = (y0 > P2) != (y1 > P2)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = x0 + (P2 - y0) * (x1 - x0) / (y1 - y0)
        inside = np.count_nonzero(straddle & (P1 < xcross), axis=-1) % 2 == 1
        return inside & (self._edge_distance(p1, p2) > tol)

    def ray_distance(self, p1, p2, d):
        v = self._v
        a, b = v, np.roll(v, -1, axis=0)
        e = b - a
        # p + t d = a + u e
        denom = d[0] * e[:, 1] - d[1] * e[:, 0]
        wx = a[:, 0] - p1[..., None]
        wy = a[:, 1] - p2[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (wx * e[:, 1] - wy * e[:, 0]) / denom
            u = (wx * d[1] - wy * d[0]) / denom
        ok = (np.abs(denom) > 1e-15) & (t > 0) & (u >= 0) & (u <= 1)
        t = np.where(ok, t, np.inf)
        return t.min(axis=-1)

    def vertices_or_extent(self):
        return self._v


def disk(radius=1.0):
    return Disk(float(radius))


def rectangle(a=1.0, b=1.0):
    return Rectangle(float(a), float(b))


def polygon(vertices):
    return Polygon(tuple(map(tuple, np.asarray(vertices, dtype=float).tolist())))


@dataclass(frozen=True, eq=False)
class SectionMask:
    """Interior grid nodes of a section.

    Node ``(i, j)`` sits at ``y = (y1[i], y2[j])`` relative to the section
    origin.  ``fractions[d, i, j]`` is the distance from node ``(i, j)`` to
    the boundary along direction ``DIRECTIONS[d]`` in units of ``h``,
    capped at 1 (1 when the neighbor is interior).
    """

    shape: object
    h: float
    origin: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    inside: np.ndarray
    fractions: np.ndarray
    index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        idx = -np.ones(self.inside.shape, dtype=int)
        idx[self.inside] = np.arange(int(self.inside.sum()))
        object.__setattr__(self, "index", idx)

    @property
    def n_interior(self) -> int:
        return int(self.inside.sum())

    @property
    def bounding_box(self):
        return (self.y1[0], self.y2[0]), (self.y1[-1], self.y2[-1])

    @property
    def coordinates(self):
        """``(n_interior, 2)`` node coordinates relative to the origin."""
        i, j = np.nonzero(self.inside)
        return np.column_stack([self.y1[i], self.y2[j]])

    @property
    def radius(self) -> float:
        """``max |y|`` over the section (not just the nodes)."""
        pts = self.shape.vertices_or_extent() - self.origin
        return float(np.hypot(pts[:, 0], pts[:, 1]).max())

    def nearest_to_origin(self) -> int:
        y = self.coordinates
        return int(np.argmin(np.hypot(y[:, 0], y[:, 1])))


def rasterize_section(shape, h, origin=None) -> SectionMask:
    """Grid of nodes strictly inside ``shape`` with spacing ``h``.

    The grid is aligned with ``origin`` (shape coordinates; defaults to the
    disk/rectangle center or the polygon centroid), so that the origin is a
    node position.
    """
    h = float(h)
    if not h > 0:
        raise SectionError(f"grid spacing must be positive, got {h}")
    origin = shape.center if origin is None else np.asarray(origin, dtype=float)
    if origin.shape != (2,):
        raise SectionError("origin must be [y1, y2]")
    lo, hi = shape.bounds()
    i_lo = int(np.floor((lo[0] - origin[0]) / h)) - 1
    i_hi = int(np.ceil((hi[0] - origin[0]) / h)) + 1
    j_lo = int(np.floor((lo[1] - origin[1]) / h)) - 1
    j_hi = int(np.ceil((hi[1] - origin[1]) / h)) + 1
    if (i_hi - i_lo + 1) * (j_hi - j_lo + 1) > 4e7:
        raise SectionError("grid spacing too fine for the section size")
    y1 = np.arange(i_lo, i_hi + 1) * h
    y2 = np.arange(j_lo, j_hi + 1) * h
    P1, P2 = np.meshgrid(y1 + origin[0], y2 + origin[1], indexing="ij")
    tol = 1e-9 * h
    inside = shape.contains(P1, P2, tol)
    n = int(inside.sum())
    if n < MIN_INTERIOR_NODES:
        raise SectionError(
            f"grid spacing h = {h} too coarse: {n} interior nodes (< {MIN_INTERIOR_NODES})")
    _, ncomp = scipy.ndimage.label(inside)
    if ncomp != 1:
        raise SectionError(f"rasterized section is disconnected ({ncomp} components)")

    fractions = np.ones((4,) + inside.shape)
    for d, (di, dj) in enumerate(DIRECTIONS):
        neighbor = np.roll(inside, (-di, -dj), axis=(0, 1))
        cut = inside & ~neighbor
        t = shape.ray_distance(P1[cut], P2[cut], np.array([di, dj], dtype=float)) / h
        fractions[d][cut] = np.clip(t, MIN_BOUNDARY_FRACTION, 1.0)
    return SectionMask(shape, h, origin, y1, y2, inside, fractions)


@dataclass(frozen=True)
class TransverseEdges:
    """Edges of the 5-point stencil touching at least one interior node.

    ``q == -1`` marks an edge to the boundary; its ``weight`` is ``1 /
    fraction`` and its midpoint sits halfway to the boundary.
    """

    p: np.ndarray
    q: np.ndarray
    axis: np.ndarray
    weight: np.ndarray
    length: np.ndarray
    mid: np.ndarray

    def gradient_matrix(self, n, h):
        """``G`` with ``(G phi)_e = (phi_q - phi_p) / h`` (``phi_q = 0`` off-grid)."""
        m = self.p.size
        rows = np.concatenate([np.arange(m), np.arange(m)[self.q >= 0]])
        cols = np.concatenate([self.p, self.q[self.q >= 0]])
        vals = np.concatenate([-np.ones(m), np.ones(int((self.q >= 0).sum()))]) / h
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))


def transverse_edges(mask: SectionMask) -> TransverseEdges:
    ii, jj = np.nonzero(mask.inside)
    idx = mask.index
    h = mask.h
    p, q, axis, weight, length, mid = [], [], [], [], [], []
    for d, (di, dj) in enumerate(DIRECTIONS):
        ax = 0 if di else 1
        ni, nj = ii + di, jj + dj
        nb_inside = mask.inside[ni, nj]
        forward = di + dj > 0
        # interior-interior edges are taken once, in the forward direction
        sel = nb_inside & forward
        p.append(idx[ii[sel], jj[sel]])
        q.append(idx[ni[sel], nj[sel]])
        axis.append(np.full(sel.sum(), ax))
        weight.append(np.ones(sel.sum()))
        length.append(np.full(sel.sum(), h))
        mid.append(np.column_stack([mask.y1[ii[sel]] + di * h / 2, mask.y2[jj[sel]] + dj * h / 2]))
        cut = ~nb_inside
        frac = mask.fractions[d][ii[cut], jj[cut]]
        p.append(idx[ii[cut], jj[cut]])
        q.append(np.full(cut.sum(), -1))
        axis.append(np.full(cut.sum(), ax))
        weight.append(1.0 / frac)
        length.append(frac * h)
        mid.append(np.column_stack([mask.y1[ii[cut]] + di * frac * h / 2,
                                    mask.y2[jj[cut]] + dj * frac * h / 2]))
    return TransverseEdges(*(np.concatenate(x) for x in (p, q, axis, weight, length)),
                           np.concatenate(mid))


def dirichlet_laplacian(mask: SectionMask):
    """Symmetric positive definite ``-Delta_h`` on the interior nodes."""
    edges = transverse_edges(mask)
    g = edges.gradient_matrix(mask.n_interior, mask.h)
    return (g.T @ sp.diags(edges.weight) @ g).tocsr()


def angular_derivative(mask: SectionMask):
    """``-y2 d/dy1 + y1 d/dy2`` by centered differences with zero values
    outside the section; skew-symmetric by construction."""
    ii, jj = np.nonzero(mask.inside)
    idx = mask.index
    y1, y2 = mask.y1[ii], mask.y2[jj]
    h = mask.h
    rows, cols, vals = [], [], []
    coeffs = {(1, 0): -y2, (-1, 0): y2, (0, 1): y1, (0, -1): -y1}
    for (di, dj), coef in coeffs.items():
        ok = mask.inside[ii + di, jj + dj]
        rows.append(idx[ii[ok], jj[ok]])
        cols.append(idx[ii[ok] + di, jj[ok] + dj])
        vals.append(coef[ok] / (2 * h))
    n = mask.n_interior
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


@dataclass(frozen=True, eq=False)
class SectionSpectrum:
    """Two lowest Dirichlet eigenvalues of the section and the twist constant.

    ``twist_constant`` is the staggered-grid quadrature of
    ``int |<grad u0, R y>|^2``; ``twist_constant_discrete`` is
    ``|A_h u0|^2`` for the discrete angular derivative used by the 3D
    fiber assembly, which is what a grid-consistent reduction needs.
    """

    mask: SectionMask
    lambda0: float
    lambda1: float
    u0: np.ndarray
    grad_u0: np.ndarray
    twist_constant: float
    twist_constant_discrete: float
    residuals: np.ndarray

    @property
    def coordinates(self):
        return self.mask.coordinates

    def to_table(self, path):
        """Write ``y1 y2 u0 du0/dy1 du0/dy2`` as text, or ``.npz`` by suffix."""
        path = Path(path)
        y = self.coordinates
        if path.suffix == ".npz":
            np.savez(path, y=y, u0=self.u0, grad_u0=self.grad_u0, h=self.mask.h,
                     lambda0=self.lambda0, lambda1=self.lambda1,
                     twist_constant=self.twist_constant)
            return
        header = (f"h={self.mask.h!r} lambda0={self.lambda0!r} lambda1={self.lambda1!r} "
                  f"C={self.twist_constant!r}\ny1 y2 u0 du0_dy1 du0_dy2")
        np.savetxt(path, np.column_stack([y, self.u0, self.grad_u0]), fmt="%.16e",
                   header=header)


def _ghost_gradient(mask, u):
    """Centered differences with linearly extrapolated ghost values at the
    boundary (one-sided through the boundary zero)."""
    U = np.zeros(mask.inside.shape)
    U[mask.inside] = u
    h = mask.h
    grad = []
    for ax, (fwd, bwd) in enumerate(((0, 1), (2, 3))):
        shift_f = [0, 0]
        shift_f[ax] = -1
        shift_b = [0, 0]
        shift_b[ax] = 1
        uf = np.roll(U, shift_f, axis=(0, 1))
        ub = np.roll(U, shift_b, axis=(0, 1))
        inf = np.roll(mask.inside, shift_f, axis=(0, 1))
        inb = np.roll(mask.inside, shift_b, axis=(0, 1))
        tf, tb = mask.fractions[fwd], mask.fractions[bwd]
        uf = np.where(inf, uf, -(1 - tf) / tf * U)
        ub = np.where(inb, ub, -(1 - tb) / tb * U)
        grad.append(((uf - ub) / (2 * h))[mask.inside])
    return np.column_stack(grad)


def _staggered_twist_constant(mask, u, grad):
    edges = transverse_edges(mask)
    h = mask.h
    up = u[edges.p]
    uq = np.where(edges.q >= 0, u[np.maximum(edges.q, 0)], 0.0)
    slope = (uq - up) / edges.length
    # y2^2 (d1 u)^2 on y1-edges, y1^2 (d2 u)^2 on y2-edges
    other = np.where(edges.axis == 0, edges.mid[:, 1], edges.mid[:, 0])
    diag_terms = np.sum(other ** 2 * slope ** 2 * edges.length * h)
    y = mask.coordinates
    cross = -2 * np.sum(y[:, 0] * y[:, 1] * grad[:, 0] * grad[:, 1]) * h * h
    return float(diag_terms + cross)


def solve_section(mask: SectionMask, seed=0, tol=1e-9) -> SectionSpectrum:
    """``lambda0``, ``lambda1``, ``u0`` (normalized, nonnegative), ``grad u0``
    and the twist constant of a rasterized section."""
    lap = dirichlet_laplacian(mask)
    n = mask.n_interior
    w, v = eig_sparse_smallest(lap, np.ones(n), 2, 0.0, seed=seed, tol=tol, vectors=True)
    res = np.linalg.norm(lap @ v - v * w, axis=0)
    lam0, lam1 = float(w[0]), float(w[1])
    if not lam1 - lam0 > 0:
        raise SolverError(f"ground state is not simple (lambda1 - lambda0 = {lam1 - lam0})", res)
    u = np.real_if_close(v[:, 0]).astype(float)
    u /= np.sqrt(np.sum(u * u) * mask.h ** 2)
    if u[mask.nearest_to_origin()] < 0:
        u = -u
    floor = -1e-8 * np.abs(u).max()
    if u.min() < floor:
        raise SolverError(f"ground state changes sign (min u0 = {u.min():.3e})", res)
    u = np.maximum(u, 0.0)
    grad = _ghost_gradient(mask, u)
    c_acc = _staggered_twist_constant(mask, u, grad)
    au = angular_derivative(mask) @ u
    c_disc = float(np.sum(au * au) * mask.h ** 2)
    return SectionSpectrum(mask, lam0, lam1, u, grad, c_acc, c_disc, res)


def twist_coupling_constant(spec: SectionSpectrum) -> float:
    """``C(S) = int_S <grad u0, R y>^2 dy`` with ``R`` the rotation by 90 degrees."""
    return spec.twist_constant


SECTION_KEYS = {"section", "radius", "width", "height", "vertices", "h", "origin",
                "twist_constant"}


def shape_from_config(block: dict):
    unknown = set(block) - SECTION_KEYS
    if unknown:
        raise SectionError(f"unknown section keys: {sorted(unknown)}")
    kind = block.get("section")
    if kind == "disk":
        return disk(block.get("radius", 1.0))
    if kind == "rectangle":
        return rectangle(block.get("width", 1.0), block.get("height", 1.0))
    if kind == "polygon":
        if "vertices" not in block:
            raise SectionError("polygon section needs 'vertices'")
        return polygon(block["vertices"])
    raise SectionError(f"section must be disk, rectangle or polygon, got {kind!r}")


def mask_from_config(block: dict) -> SectionMask:
    shape = shape_from_config(block)
    if "h" not in block:
        raise SectionError("section block is missing the grid spacing 'h'")
    return rasterize_section(shape, float(block["h"]), block.get("origin"))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bessel_j0_first_zero, twist_constant_rectangle
from waveguide_bands.cross_section import (SectionError, angular_derivative, dirichlet_laplacian,
                                           disk, mask_from_config, polygon, rasterize_section,
                                           rectangle, solve_section, twist_coupling_constant)


@pytest.fixture(scope="module")
def square64():
    return solve_section(rasterize_section(rectangle(), 1 / 64))


@pytest.fixture(scope="module")
def disk64():
    return solve_section(rasterize_section(disk(), 1 / 64))


def test_oracle_sanity():
    assert bessel_j0_first_zero() ** 2 == pytest.approx(5.78318596, abs=1e-7)
    assert twist_constant_rectangle(1.0, 1.0) == pytest.approx(math.pi ** 2 / 6 - 1.5, rel=1e-9)


def test_disk_node_count():
    n = rasterize_section(disk(), 1 / 32).n_interior
    assert abs(n - math.pi * 32 ** 2) <= 0.02 * math.pi * 32 ** 2


def test_square_node_count():
    assert rasterize_section(rectangle(1, 1), 1 / 32).n_interior == 961


def test_degenerate_polygon_rejected():
    with pytest.raises(SectionError):
        polygon([[0, 0], [1, 0]])


def test_too_coarse_rejected():
    with pytest.raises(SectionError):
        rasterize_section(rectangle(), 1 / 8)


def test_disconnected_rejected():
    # dumbbell whose neck lies between two grid lines
    dumbbell = polygon([[-1, -0.5], [-0.2, -0.5], [-0.2, 0.005], [0.2, 0.005], [0.2, -0.5],
                        [1, -0.5], [1, 0.5], [0.2, 0.5], [0.2, 0.025], [-0.2, 0.025],
                        [-0.2, 0.5], [-1, 0.5]])
    with pytest.raises(SectionError, match="disconnected"):
        rasterize_section(dumbbell, 1 / 32, origin=[0.0, 0.0])


def test_missing_h():
    with pytest.raises(SectionError):
        mask_from_config({"section": "disk", "radius": 1.0})
    with pytest.raises(SectionError):
        mask_from_config({"section": "torus", "h": 0.1})
    with pytest.raises(SectionError):
        mask_from_config({"section": "disk", "h": 0.1, "colour": "red"})


def test_nodes_strictly_inside():
    m = rasterize_section(disk(), 1 / 16)
    y = m.coordinates
    assert np.hypot(y[:, 0], y[:, 1]).max() < 1.0


def test_disk_eigenvalue(disk64):
    j01 = bessel_j0_first_zero()
    assert abs(disk64.lambda0 - j01 ** 2) <= 0.01 * j01 ** 2


def test_square_eigenvalues(square64):
    assert abs(square64.lambda0 - 2 * math.pi ** 2) <= 0.01 * 2 * math.pi ** 2
    assert abs(square64.lambda1 - 5 * math.pi ** 2) <= 0.01 * 5 * math.pi ** 2


def test_spectrum_invariants(square64, disk64):
    for spec in (square64, disk64):
        h = spec.mask.h
        assert abs(np.sum(spec.u0 ** 2) * h * h - 1) <= 1e-10
        assert spec.u0.min() >= 0
        assert spec.lambda1 > spec.lambda0 > 0
        assert spec.twist_constant >= 0 and spec.twist_constant_discrete >= 0
        assert spec.residuals.max() <= 1e-6


def test_disk_ground_state_radial(disk64):
    m = disk64.mask
    u = np.zeros(m.inside.shape)
    u[m.inside] = disk64.u0
    # lattice symmetries of the disk grid map nodes to nodes at equal radius
    c = m.index.shape[0] // 2
    assert m.y1[c] == 0
    views = [u, u[::-1], u[:, ::-1], u.T]
    for v in views[1:]:
        assert np.abs(v - u).max() <= 1e-3


def test_disk_twist_constant_small(disk64):
    assert twist_coupling_constant(disk64) <= 5e-3


def test_square_twist_constant(square64):
    ref = twist_constant_rectangle(1.0, 1.0)
    assert abs(twist_coupling_constant(square64) - ref) <= 0.02 * ref


def test_rectangle_twist_constant():
    spec = solve_section(rasterize_section(rectangle(2, 1), 1 / 32))
    ref = twist_constant_rectangle(2.0, 1.0)
    assert ref > 0.01
    assert spec.twist_constant > 0.01
    assert abs(spec.twist_constant - ref) <= 0.03 * ref


def test_rotation_invariance():
    a = solve_section(rasterize_section(rectangle(2, 1), 1 / 32))
    b = solve_section(rasterize_section(rectangle(1, 2), 1 / 32))
    assert abs(a.lambda0 - b.lambda0) <= 1e-10 * a.lambda0
    assert abs(a.lambda1 - b.lambda1) <= 1e-10 * a.lambda1
    assert abs(a.twist_constant - b.twist_constant) <= 1e-10


@pytest.mark.parametrize("shape", [rectangle(), disk()], ids=["square", "disk"])
def test_richardson_second_order(shape):
    lam = [solve_section(rasterize_section(shape, h)).lambda0 for h in (1 / 16, 1 / 32, 1 / 64)]
    ratio = (lam[0] - lam[1]) / (lam[1] - lam[2])
    assert 3 <= ratio <= 5


def test_twist_constant_against_analytic_converges():
    ref = twist_constant_rectangle(1.0, 1.0)
    errs = [abs(solve_section(rasterize_section(rectangle(), h)).twist_constant - ref)
            for h in (1 / 16, 1 / 32, 1 / 64)]
    assert errs[0] > errs[1] > errs[2]


def test_right_triangle_polygon():
    # legs-1 isosceles right triangle: antisymmetric (1,2) mode of the unit square
    tri = polygon([[0, 0], [1, 0], [0, 1]])
    spec = solve_section(rasterize_section(tri, 1 / 64))
    assert spec.lambda0 == pytest.approx(5 * math.pi ** 2, rel=0.01)


def test_laplacian_symmetric_positive():
    m = rasterize_section(disk(), 1 / 16)
    lap = dirichlet_laplacian(m)
    assert abs(lap - lap.T).max() == 0
    ang = angular_derivative(m)
    assert abs(ang + ang.T).max() == 0


def test_discrete_twist_constant_definition(square64):
    m = square64.mask
    au = angular_derivative(m) @ square64.u0
    assert square64.twist_constant_discrete == pytest.approx(np.sum(au ** 2) * m.h ** 2)


def test_to_table(tmp_path, square64):
    square64.to_table(tmp_path / "u.txt")
    data = np.loadtxt(tmp_path / "u.txt")
    assert data.shape == (square64.mask.n_interior, 5)
    square64.to_table(tmp_path / "u.npz")
    with np.load(tmp_path / "u.npz") as z:
        np.testing.assert_array_equal(z["u0"], square64.u0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.6, 1.6), st.floats(0.6, 1.6))
def test_rectangle_eigenvalue_tracks_separation_of_variables(a, b):
    h = min(a, b) / 24
    spec = solve_section(rasterize_section(rectangle(a, b), h))
    exact = math.pi ** 2 * (1 / a ** 2 + 1 / b ** 2)
    assert abs(spec.lambda0 - exact) <= 0.01 * exact
    assert spec.twist_constant >= 0

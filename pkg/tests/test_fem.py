import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmcg.fem import (HelmholtzProblem, VelocityRaster, assemble_boundary_mass, assemble_mass, assemble_stiffness,
                      assemble_system, build_space, data_norm, element_coefficient, l2_error, read_velocity_raster,
                      write_velocity_raster)
from cmcg.mesh import Box, BoundaryTag, SquareObstacle, generate_interval, generate_rect_with_obstacle


def mesh2d(h=0.25):
    return generate_rect_with_obstacle(Box(0, 0, 2, 1), None, h)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_1d_mass_and_stiffness_basics(r):
    space = build_space(generate_interval(5), r)
    M = assemble_mass(space).csr
    K = assemble_stiffness(space).csr
    one = np.ones(space.ndof)
    assert one @ M @ one == pytest.approx(1.0)
    np.testing.assert_allclose(K @ one, 0.0, atol=1e-12)
    assert assemble_mass(space, lumped=True).sum() == pytest.approx(1.0)
    x = space.dof_coords[:, 0]
    # K reproduces int u' v' exactly for polynomial data
    assert x @ K @ x == pytest.approx(1.0)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_1d_lumping_is_order_preserving(r):
    space = build_space(generate_interval(3), r)
    ML = assemble_mass(space, lumped=True)
    x = space.dof_coords[:, 0]
    # Gauss-Lobatto nodal quadrature integrates degree 2r-1 exactly
    for p in range(2 * r):
        assert ML @ x ** p == pytest.approx(1.0 / (p + 1), rel=1e-12)


@pytest.mark.parametrize("r,enriched", [(1, False), (2, False), (2, True)])
def test_2d_mass_integrates_area(r, enriched):
    space = build_space(mesh2d(), r, enriched=enriched)
    M = assemble_mass(space).csr
    one = np.ones(space.ndof)
    assert one @ M @ one == pytest.approx(2.0)
    np.testing.assert_allclose(assemble_stiffness(space).csr @ one, 0.0, atol=1e-11)


def test_plain_p2_triangle_has_no_lumping():
    space = build_space(mesh2d(), 2, enriched=False)
    with pytest.raises(ValueError):
        assemble_mass(space, lumped=True)


def test_enriched_p2_lumping_exact_for_cubics():
    space = build_space(mesh2d(0.5), 2, enriched=True)
    ML = assemble_mass(space, lumped=True)
    x, y = space.dof_coords.T
    assert np.all(ML > 0)
    # int_(0,2)x(0,1) x^3 = 4, x^2 y = 4/3, x y^2 = 2/3
    assert ML @ x ** 3 == pytest.approx(4.0)
    assert ML @ (x ** 2 * y) == pytest.approx(4.0 / 3)
    assert ML @ (x * y ** 2) == pytest.approx(2.0 / 3)


def test_boundary_mass_measures_perimeter():
    m = generate_rect_with_obstacle(Box(0, 0, 3, 3), SquareObstacle((1.5, 1.5), 1.0), 0.25)
    for r in (1, 2):
        space = build_space(m, r, enriched=(r == 2))
        assert assemble_boundary_mass(space, BoundaryTag.SOMMERFELD).sum() == pytest.approx(12.0)
        assert assemble_boundary_mass(space, BoundaryTag.DIRICHLET).sum() == pytest.approx(4.0)


def test_dirichlet_dofs_marked():
    space = build_space(generate_interval(4), 3)
    assert space.dirichlet_mask.sum() == 1 and space.dirichlet_mask[0]


def test_wave_speed_scales_mass():
    m = generate_interval(4)
    space = build_space(m, 2)
    p1 = HelmholtzProblem(m, 1.0, c=1.0)
    p2 = HelmholtzProblem(m, 1.0, c=2.0)
    s1, s2 = assemble_system(space, p1), assemble_system(space, p2)
    np.testing.assert_allclose(s2.M_lumped, s1.M_lumped / 4)
    np.testing.assert_allclose(s2.B, s1.B / 2)


def test_piecewise_speed_sampled_per_element():
    m = generate_interval(4)
    space = build_space(m, 1)
    c = element_coefficient(space, lambda x: np.where(x[:, 0] < 0.5, 1.0, 3.0))
    np.testing.assert_array_equal(c, [1.0, 1.0, 3.0, 3.0])


def test_data_norm_of_plane_wave_boundary_data():
    m = generate_interval(4, left_tag=BoundaryTag.NEUMANN, right_tag=BoundaryTag.SOMMERFELD)
    p = HelmholtzProblem(m, 1.0, f=2.0, g_S=3j)
    assert data_norm(build_space(m, 1), p) == pytest.approx(2.0 + 3.0)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_interpolation_error_rate(r):
    errs = []
    for n in (8, 16):
        space = build_space(generate_interval(n), r)
        u = np.sin(3 * space.dof_coords[:, 0])
        errs.append(l2_error(space, u, lambda x: np.sin(3 * x[:, 0])))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(r + 1, abs=0.25)


@given(st.integers(2, 12), st.floats(0.5, 4.0))
def test_lumped_mass_positive_and_total(n, c):
    m = generate_interval(n)
    space = build_space(m, 2)
    s = assemble_system(space, HelmholtzProblem(m, 2.0, c=c))
    assert np.all(s.M_lumped > 0)
    assert s.M_lumped.sum() == pytest.approx(c ** -2)


def test_velocity_raster_roundtrip(tmp_path):
    r = VelocityRaster(0.0, 0.0, 0.5, 0.25, np.arange(1.0, 7.0).reshape(2, 3))
    write_velocity_raster(r, tmp_path / "v.txt")
    r2 = read_velocity_raster(tmp_path / "v.txt")
    np.testing.assert_array_equal(r.values, r2.values)
    assert r2(np.array([[1.2, 0.3]]))[0] == 6.0


def test_velocity_raster_rejects_nonpositive(tmp_path):
    (tmp_path / "v.txt").write_text("2 1 0 0 1 1\n1.0 -1.0\n")
    with pytest.raises(ValueError):
        read_velocity_raster(tmp_path / "v.txt")

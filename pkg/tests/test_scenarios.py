import numpy as np
import pytest

from cmcg.mesh import BoundaryTag
from cmcg.scenarios import (ScatteringSpec, marmousi_like, neumann_1d, plane_wave, semidiscrete_1d, sound_hard_1d,
                            sound_soft_1d, synthetic_layered_raster)


def d_dx(fn, x, eps=1e-6):
    return (fn(np.array([[x + eps]])) - fn(np.array([[x - eps]])))[0] / (2 * eps)


@pytest.mark.parametrize("make, g0", [(sound_soft_1d, -1.0), (semidiscrete_1d, 1.0)])
def test_dirichlet_presets_satisfy_boundary_conditions(make, g0):
    p = make(4)
    assert p.exact(np.array([[0.0]]))[0] == pytest.approx(g0)
    assert p.g_D == g0
    # impedance at x = 1: u' - ik u = 0
    u1 = p.exact(np.array([[1.0]]))[0]
    assert abs(d_dx(p.exact, 1.0) - 1j * p.omega * u1) < 1e-6


def test_neumann_preset_is_consistent():
    p = neumann_1d(4)
    assert abs(d_dx(p.exact, 0.0)) < 1e-6 and abs(d_dx(p.exact, 1.0)) < 1e-6
    x = np.array([[0.3]])
    eps = 1e-4
    lap = (p.exact(x + eps) - 2 * p.exact(x) + p.exact(x - eps)) / eps ** 2
    assert (-lap - p.omega ** 2 * p.exact(x))[0] == pytest.approx(p.f(x)[0], rel=1e-6)
    assert p.pure_neumann


def test_sound_hard_preset_data():
    p = sound_hard_1d(4)
    # outward normal at x = 0 is -1, so g_N = -u'(0)
    assert p.g_N == pytest.approx(-d_dx(p.exact, 0.0), rel=1e-8)
    assert not p.has(BoundaryTag.DIRICHLET)


def test_plane_wave_data_on_each_side():
    k = 2 * np.pi
    u_in, g_S = plane_wave(k, 135.0)
    x = np.array([[0.3, 0.7], [1.0, 0.2]])
    for n in ([1.0, 0.0], [0.0, -1.0]):
        nn = np.array([n, n])
        d = np.array([np.cos(np.radians(135)), np.sin(np.radians(135))])
        expect = -(1j * k * (nn @ d) - 1j * k) * u_in(x)
        np.testing.assert_allclose(g_S(x, nn), expect)
    assert np.allclose(np.abs(u_in(x)), 1.0)


@pytest.mark.parametrize("obstacle", ["none", "square", "cavity"])
def test_scattering_specs_build(obstacle):
    p = ScatteringSpec(box=3.0, obstacle=obstacle, size=1.0, h=0.25).build()
    assert p.mesh.dim == 2 and p.has(BoundaryTag.SOMMERFELD)
    assert p.has(BoundaryTag.DIRICHLET) == (obstacle != "none")


def test_bad_obstacle_rejected():
    with pytest.raises(ValueError):
        ScatteringSpec(obstacle="circle").build()


def test_marmousi_like_uses_raster_extent():
    raster = synthetic_layered_raster(nx=20, ny=10)
    assert raster.values.min() >= 1.5 and raster.values.max() <= 3.5
    p = marmousi_like(raster, 2.0, 0.2)
    v = p.mesh.vertices
    assert v[:, 0].max() == pytest.approx(2.0) and v[:, 1].max() == pytest.approx(1.0)
    assert p.omega == pytest.approx(4 * np.pi)

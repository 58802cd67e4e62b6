import numpy as np
import numpy.polynomial.legendre as npleg
import pytest

from cmcg.hdg1d import HdgControl, _ortho_scale, build_hdg
from cmcg.mesh import generate_rect_with_obstacle, Box
from cmcg.scenarios import neumann_1d, semidiscrete_1d, sound_soft_1d


def project(hdg, q):
    """Element-wise L2 projection of q(x) onto orthonormal Legendre coefficients."""
    xi, w = npleg.leggauss(hdg.nb + 6)
    V = npleg.legvander(xi, hdg.nb - 1) * _ortho_scale(hdg.nb)
    X = hdg.x_left[:, None] + 0.5 * hdg.h[:, None] * (xi + 1)
    return np.einsum("q,eq,qi->ei", w, q(X), V)


@pytest.fixture(scope="module")
def hdg4():
    p = sound_soft_1d(4)
    return build_hdg(p.mesh, 2, p)


def test_layout_sizes(hdg4):
    P, V = hdg4.split(np.arange(hdg4.n, dtype=float))
    assert P.shape == V.shape == (4, 3)
    assert len(hdg4.resolve_trace(P, V, np.zeros(2))) == 5
    np.testing.assert_array_equal(hdg4.join(P, V), np.arange(hdg4.n))


def test_trace_of_continuous_fields_is_pointwise_value(hdg4):
    q = lambda x: 1 + 2 * x - x ** 2
    dq = lambda x: 2 - 2 * x
    P, V = project(hdg4, dq), project(hdg4, q)
    vh = hdg4.resolve_trace(P, V, np.zeros(2))
    faces = np.concatenate([hdg4.x_left, [1.0]])
    np.testing.assert_allclose(vh[1:-1], q(faces[1:-1]), atol=1e-13)
    fR, fL = hdg4.flux(P, V, vh)
    np.testing.assert_allclose(fR[:-1], dq(faces[1:-1]), atol=1e-13)


def test_dirichlet_trace_follows_boundary_data(hdg4):
    # g_D = -1 here, so the velocity trace is Re{i w e^{-iwt}} = w sin(wt)
    P = V = np.zeros((4, 3))
    for t in np.linspace(0, hdg4.period, 7):
        bvals = np.real(hdg4._bvals_hat() * np.exp(-1j * hdg4.omega * t))
        vh = hdg4.resolve_trace(P, V, bvals)
        assert vh[0] == pytest.approx(hdg4.omega * np.sin(hdg4.omega * t), abs=1e-13)


def test_dirichlet_trace_unit_data():
    p = semidiscrete_1d(4)
    hdg = build_hdg(p.mesh, 1, p)
    t = 0.3 * hdg.period
    bvals = np.real(hdg._bvals_hat() * np.exp(-1j * hdg.omega * t))
    vh = hdg.resolve_trace(np.zeros((4, 2)), np.zeros((4, 2)), bvals)
    assert vh[0] == pytest.approx(-hdg.omega * np.sin(hdg.omega * t), abs=1e-13)


def test_normal_flux_single_valued(hdg4, rng):
    P, V = rng.standard_normal((2, 4, 3))
    vh = hdg4.resolve_trace(P, V, rng.standard_normal(2))
    fR, fL = hdg4.flux(P, V, vh)
    np.testing.assert_allclose(fR[:-1] + fL[1:], 0.0, atol=1e-14)


def test_trace_locality(hdg4, rng):
    P, V = rng.standard_normal((2, 4, 3))
    base = hdg4.resolve_trace(P, V, np.zeros(2))
    P2 = P.copy()
    P2[1] += rng.standard_normal(3)
    changed = np.flatnonzero(np.abs(hdg4.resolve_trace(P2, V, np.zeros(2)) - base) > 0)
    assert set(changed) <= {1, 2}


def test_zero_state_stays_zero(hdg4):
    X, _, _ = hdg4.forward(np.zeros(hdg4.n), forcing=False)
    assert not X.any()


def test_operator_dissipative_and_energy_decays(rng):
    p = sound_soft_1d(8)
    hdg = build_hdg(p.mesh, 2, p)
    WA = (hdg.W[:, None] * hdg.A.toarray())
    assert np.linalg.eigvalsh(WA + WA.T).max() < 1e-10
    _, _, E = hdg.forward(rng.standard_normal(hdg.n), n_periods=2, forcing=False, track_energy=True)
    assert np.all(np.diff(E) <= 1e-12 * E[0])


def test_rk4_self_convergence():
    p = sound_soft_1d(6)
    base = build_hdg(p.mesh, 2, p, cfl_safety=0.5).n_T
    out = []
    for m in (2, 4, 8):
        hdg = build_hdg(p.mesh, 2, p, steps_per_period=m * base)
        hdg._dense = None
        out.append(hdg.forward(np.zeros(hdg.n))[0])
    ratio = np.linalg.norm(out[0] - out[1]) / np.linalg.norm(out[1] - out[2])
    assert 14 < ratio < 18


def test_transpose_duality(rng):
    p = sound_soft_1d(6)
    hdg = build_hdg(p.mesh, 2, p)
    x, y = rng.standard_normal((2, hdg.n))
    Phi_x, _, _ = hdg.forward(x, forcing=False)
    assert y @ Phi_x == pytest.approx(hdg.transpose_period(y) @ x, rel=1e-12)


def test_control_gradient_matches_finite_differences(rng):
    p = sound_soft_1d(4)
    cop = HdgControl(build_hdg(p.mesh, 1, p))
    z = (rng.standard_normal(cop.m), rng.standard_normal(cop.m))
    d = (rng.standard_normal(cop.m), rng.standard_normal(cop.m))
    zT, _ = cop.forward(z)
    e = cop._split(cop._cat(zT) - cop._cat(z))
    g = cop._cat(cop.gradient(e))
    eps = 1e-6
    zp = tuple(a + eps * b for a, b in zip(z, d))
    zm = tuple(a - eps * b for a, b in zip(z, d))
    fd = (cop.J(zp) - cop.J(zm)) / (2 * eps)
    assert g @ cop._cat(d) == pytest.approx(fd, rel=1e-7)


def test_post_processing_preserves_means_and_reproduces_polynomials():
    p = sound_soft_1d(5)
    hdg = build_hdg(p.mesh, 2, p)
    q = lambda x: 0.3 - x + 2 * x ** 2 - 4 * x ** 3          # degree r + 1
    V = project(hdg, q)
    faces = np.concatenate([hdg.x_left, [1.0]])
    vstar = hdg.post_process_velocity(V, q(faces))
    np.testing.assert_allclose(vstar[:, 0], V[:, 0], atol=1e-14)
    assert hdg.field(vstar).l2_error(lambda x: q(x[:, 0])) < 1e-13


@pytest.mark.parametrize("r", [1, 2])
def test_direct_solution_converges_at_order_r_plus_1(r):
    errs = []
    for n in (8, 16):
        p = sound_soft_1d(n)
        hdg = build_hdg(p.mesh, r, p)
        errs.append(hdg.u_from_amplitude(hdg.direct_solve()).l2_error(p.exact))
    assert np.log2(errs[0] / errs[1]) > r + 1 - 0.3


def test_rejects_unsupported_input():
    p = sound_soft_1d(4)
    with pytest.raises(ValueError):
        build_hdg(p.mesh, 4, p)
    with pytest.raises(ValueError):
        build_hdg(p.mesh, 2, p, mass_coeff="c")
    mesh2d = generate_rect_with_obstacle(Box(0, 0, 1, 1), None, 0.5)
    with pytest.raises(ValueError):
        build_hdg(mesh2d, 1, p)


def test_neumann_problem_builds():
    p = neumann_1d(4)
    hdg = build_hdg(p.mesh, 1, p)
    assert hdg.bc[0][0].name == "NEUMANN"

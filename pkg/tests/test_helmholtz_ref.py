import numpy as np
import pytest
import scipy.sparse as sp

from cmcg.fem import HelmholtzProblem, assemble_system, build_space, l2_error, l2_norm
from cmcg.helmholtz_ref import assemble_helmholtz, direct_solve, helmholtz_residual, resonance_check
from cmcg.linalg import FactorizationError, SparseOperator, pcg
from cmcg.mesh import BoundaryTag, generate_interval
from cmcg.scenarios import ScatteringSpec, plane_wave, semidiscrete_1d


def system_for(p, r=2, enriched=False):
    return assemble_system(build_space(p.mesh, r, enriched=enriched), p)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_direct_solve_converges_to_plane_wave(r):
    errs = []
    for n in (16, 32):
        p = semidiscrete_1d(n)
        s = system_for(p, r)
        hs = assemble_helmholtz(s)
        u = direct_solve(hs)
        assert helmholtz_residual(hs, u) < 1e-10
        errs.append(l2_error(s.space, u, p.exact))
    assert np.log2(errs[0] / errs[1]) > r + 1 - 0.3


def test_lumped_and_consistent_differ_only_in_mass():
    p = semidiscrete_1d(8)
    s = system_for(p)
    a = assemble_helmholtz(s, lumped=False)
    b = assemble_helmholtz(s, lumped=True)
    np.testing.assert_array_equal(a.A_im.csr.toarray(), b.A_im.csr.toarray())
    f = s.space.free
    dM = (s.M.csr - sp.diags(s.M_lumped)).tocsr()[f][:, f].toarray()
    np.testing.assert_allclose(b.A_re.csr.toarray() - a.A_re.csr.toarray(), p.omega ** 2 * dM, atol=1e-10)


def test_small_omega_gives_poisson_operator():
    m = generate_interval(6, left_tag=BoundaryTag.DIRICHLET, right_tag=BoundaryTag.DIRICHLET)
    p = HelmholtzProblem(m, 1e-9, f=1.0)
    s = system_for(p, 1)
    hs = assemble_helmholtz(s)
    K = s.K.csr[s.space.free][:, s.space.free]
    np.testing.assert_allclose(hs.A_re.csr.toarray(), K.toarray(), atol=1e-15)


def test_cross_check_with_normal_equations():
    p = semidiscrete_1d(12)
    s = system_for(p, 2)
    hs = assemble_helmholtz(s)
    u = direct_solve(hs)[hs.free]
    A = (hs.A_re.csr + 1j * hs.A_im.csr).toarray()
    # real equivalent of A^H A x = A^H b, solved by an independent CG
    R = np.block([[A.real, -A.imag], [A.imag, A.real]])
    rhs = R.T @ np.concatenate([hs.b.real, hs.b.imag])
    res = pcg(SparseOperator(sp.csr_matrix(R.T @ R)), rhs, rtol=1e-14, maxit=20000)
    x = res.x[: len(u)] + 1j * res.x[len(u):]
    np.testing.assert_allclose(x, u, rtol=1e-6, atol=1e-8)


def test_2d_sound_soft_residual():
    p = ScatteringSpec(box=3.0, obstacle="square", h=0.2).build()
    s = system_for(p, 1)
    hs = assemble_helmholtz(s)
    u = direct_solve(hs)
    assert np.all(np.isfinite(u))
    assert helmholtz_residual(hs, u) < 1e-10
    np.testing.assert_array_equal(u[s.space.constrained], 0.0)


def test_plane_wave_data_sign_flips_solution():
    # with g_S = -(d_n - ik) u_in on an empty box the solution is -u_in
    k = 2 * np.pi
    p = ScatteringSpec(box=1.0, obstacle="none", h=1 / 24, k=k).build()
    s = system_for(p, 2, enriched=True)
    u = direct_solve(assemble_helmholtz(s))
    u_in, _ = plane_wave(k, 135.0)
    err = l2_error(s.space, u, lambda x: -u_in(x))
    assert err / l2_norm(s.space, u) < 5e-3


def test_resonance_reported():
    # pure Dirichlet interval: eigenvalues (j pi)^2
    m = generate_interval(64, left_tag=BoundaryTag.DIRICHLET, right_tag=BoundaryTag.DIRICHLET)
    p = HelmholtzProblem(m, np.pi * 1.001, f=1.0)
    s = system_for(p, 2)
    assert resonance_check(s) is not None
    p2 = HelmholtzProblem(m, np.pi * 1.5, f=1.0)
    assert resonance_check(system_for(p2, 2)) is None


def test_exact_resonance_fails_factorization():
    m = generate_interval(2, left_tag=BoundaryTag.DIRICHLET, right_tag=BoundaryTag.DIRICHLET)
    # single interior node: K = 4, M_lumped = 0.5, so omega^2 = 8 is the discrete eigenvalue
    p_res = HelmholtzProblem(m, np.sqrt(8.0), f=1.0)
    s = system_for(p_res, 1)
    with pytest.raises(FactorizationError):
        direct_solve(assemble_helmholtz(s, lumped=True))

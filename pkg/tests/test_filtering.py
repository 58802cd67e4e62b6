import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmcg.filtering import (eta_neumann, filter_first_order, filter_second_order, filtered_solution,
                            lambda_soundhard, neumann_offset, soundhard_corrected)
from cmcg.helmholtz_ref import assemble_helmholtz, direct_solve
from cmcg.timestepping import accumulate_filter

OMEGA = 2.5
T = 2 * np.pi / OMEGA


def filter_acc(traj, n_steps, first_order=False):
    """Trapezoid accumulation over one period of traj(t) -> (y, y_t) as the stepper does it."""
    dt = T / n_steps
    y0, _ = traj(0.0)
    acc = np.zeros(len(y0), dtype=complex)
    for n in range(n_steps + 1):
        t = n * dt
        y, v = traj(t)
        w = 0.5 if n in (0, n_steps) else 1.0
        if first_order:
            acc += (w * dt / T) * np.exp(1j * OMEGA * t) * v
        else:
            accumulate_filter(y, v, t, dt, acc, OMEGA, T, w)
    return acc


def harmonic(u, ell=1):
    def traj(t):
        e = np.exp(-1j * ell * OMEGA * t)
        return np.real(u * e), np.real(-1j * ell * OMEGA * u * e)
    return traj


def add(*trajs):
    def traj(t):
        parts = [f(t) for f in trajs]
        return sum(p[0] for p in parts), sum(p[1] for p in parts)
    return traj


@pytest.fixture
def u(rng):
    return rng.standard_normal(7) + 1j * rng.standard_normal(7)


def test_exact_harmonic_is_recovered(u):
    np.testing.assert_allclose(filter_second_order(filter_acc(harmonic(u), 32)), u, atol=1e-12)


def test_constant_and_second_harmonic_removed(u, rng):
    lam = rng.standard_normal(7)
    g2 = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    const = lambda t: (lam, np.zeros(7))
    out = filter_second_order(filter_acc(add(harmonic(u), const, harmonic(g2, 2)), 32))
    np.testing.assert_allclose(out, u, atol=1e-12)


def test_zero_trajectory():
    assert not filter_second_order(filter_acc(lambda t: (np.zeros(3), np.zeros(3)), 16)).any()


def test_missing_accumulator_raises():
    with pytest.raises(ValueError):
        filter_second_order(None)
    with pytest.raises(ValueError):
        filter_first_order(None, 1.0)


@given(st.integers(32, 96), st.data())
def test_resolved_harmonics_annihilated(n_steps, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 10 ** 6)))
    u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    ell = data.draw(st.integers(2, n_steps // 4))
    g = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    out = filter_second_order(filter_acc(add(harmonic(u), harmonic(g, ell)), n_steps))
    assert np.linalg.norm(out - u) <= 1e-10 * np.linalg.norm(u)


@given(st.floats(-3, 3), st.integers(0, 10 ** 6))
def test_filter_is_linear(a, seed):
    rng = np.random.default_rng(seed)
    u1, u2 = (rng.standard_normal(3) + 1j * rng.standard_normal(3) for _ in range(2))
    f1 = filter_acc(harmonic(u1, 1), 20)
    f2 = filter_acc(harmonic(u2, 3), 20)
    f = filter_acc(add(lambda t: tuple(a * x for x in harmonic(u1, 1)(t)), harmonic(u2, 3)), 20)
    np.testing.assert_allclose(f, a * f1 + f2, atol=1e-13)


def test_first_order_filter_examples(u, rng):
    traj = harmonic(u)                                       # v = Re{-i w u e^{-iwt}}
    np.testing.assert_allclose(filter_first_order(filter_acc(traj, 32, True), OMEGA), u, atol=1e-12)
    eta = rng.standard_normal(7)
    with_dc = add(traj, lambda t: (np.zeros(7), eta))
    np.testing.assert_allclose(filter_first_order(filter_acc(with_dc, 32, True), OMEGA), u, atol=1e-12)
    g2 = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    with_h2 = add(traj, harmonic(g2, 2))
    np.testing.assert_allclose(filter_first_order(filter_acc(with_h2, 16, True), OMEGA), u, atol=1e-12)


def test_eta_vanishes_for_discrete_solution(neumann_p2):
    _, system, _ = neumann_p2
    uh = direct_solve(assemble_helmholtz(system, lumped=True))
    eta, re = eta_neumann(system, uh)
    assert abs(eta) < 1e-12 and abs(re) < 1e-12


@pytest.mark.parametrize("s", [0.3, -2.0, 7.5])
def test_eta_inverts_linear_mode(neumann_p2, s):
    _, system, _ = neumann_p2
    uh = direct_solve(assemble_helmholtz(system, lumped=True))
    eta, _ = eta_neumann(system, uh - 1j * s / system.omega)
    assert eta == pytest.approx(s, rel=1e-10)


def test_neumann_offset_restores_solution(neumann_p2):
    _, system, _ = neumann_p2
    uh = direct_solve(assemble_helmholtz(system, lumped=True))
    shifted = uh + (0.7 - 0.2j)
    np.testing.assert_allclose(shifted + neumann_offset(system, shifted), uh, atol=1e-12)


def test_lambda_zero_for_discrete_solution_and_recovers_shift(hard_p2):
    _, system, _ = hard_p2
    uh = direct_solve(assemble_helmholtz(system, lumped=True))
    assert abs(lambda_soundhard(system, uh)) < 1e-12
    assert lambda_soundhard(system, uh + 3.5) == pytest.approx(3.5, abs=1e-10)
    fs = soundhard_corrected(system, uh + 3.5)
    np.testing.assert_allclose(fs.u, uh, atol=1e-10)


def test_lambda_refuses_dirichlet(soft_p2):
    _, system, _ = soft_p2
    with pytest.raises(ValueError):
        lambda_soundhard(system, np.zeros(system.space.ndof))


def test_filtered_solution_eta_zero_with_absorbing_boundary(soft_p2, rng):
    _, system, _ = soft_p2
    fs = filtered_solution(system, rng.standard_normal(system.space.ndof) + 0j)
    assert fs.eta == 0.0 and fs.lambda_shift == 0.0

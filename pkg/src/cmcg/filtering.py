"""Fundamental-frequency extraction from periodic trajectories.

A J-minimizer for general boundary conditions may carry, on top of the
time-harmonic field Re{u e^{-iwt}}, a constant shift, a term growing linearly
in time (pure Neumann only) and higher harmonics e^{-ilwt}, |l| >= 2.
Projecting the trajectory onto e^{-iwt} over one period removes the constant
and the harmonics; the linear term leaves a constant imaginary offset that is
fixed from the global compatibility condition.

All corrections are evaluated with the same discrete operators used in the
time stepping, so they are exact for the discrete problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import AssembledSystem


@dataclass
class FilteredSolution:
    u: np.ndarray
    eta: float = 0.0
    lambda_shift: complex = 0.0
    eta_residual: float = 0.0   # real part of the Neumann offset, a quadrature diagnostic


def filter_second_order(filter_acc: np.ndarray | None) -> np.ndarray:
    """Return y_hat = (1/T) int_0^T (y + i/w y_t) e^{iwt} dt from an accumulator."""
    if filter_acc is None:
        raise ValueError("trajectory was integrated without a filter accumulator (with_filter=False)")
    return np.asarray(filter_acc, dtype=complex).copy()


def filter_first_order(v_acc: np.ndarray | None, omega: float) -> np.ndarray:
    """u = (2i / T w) int_0^T v e^{iwt} dt, given ``v_acc = (1/T) int_0^T v e^{iwt} dt``."""
    if v_acc is None:
        raise ValueError("trajectory was integrated without a filter accumulator")
    return np.asarray(v_acc, dtype=complex) * (2j / omega)


def _mass_row_sums(system: AssembledSystem) -> np.ndarray:
    if system.M_lumped is not None:
        return system.M_lumped
    return np.asarray(system.M.csr.sum(axis=1)).ravel()


def neumann_offset(system: AssembledSystem, y_hat: np.ndarray) -> complex:
    """Constant X with  u = y_hat + X  satisfying  -w^2 1'M u = 1'b."""
    m = _mass_row_sums(system)
    omega = system.omega
    denom = omega ** 2 * m.sum()
    if denom == 0.0:
        raise ValueError("||k||_L2 vanishes; the Neumann offset is undefined")
    b = system.loads.total
    return -(b.sum() + omega ** 2 * (m @ y_hat)) / denom


def eta_neumann(system: AssembledSystem, y_hat: np.ndarray) -> tuple[float, float]:
    """Linear-mode coefficient eta from  i eta / w = -(int f + int g_N + int k^2 y_hat) / ||k||^2.

    Returns (eta, real-part diagnostic).  The real part vanishes for the
    continuous problem; discretely it reflects quadrature of the filter.
    """
    X = neumann_offset(system, y_hat)
    return float(system.omega * X.imag), float(X.real)


def lambda_soundhard(system: AssembledSystem, v: np.ndarray) -> complex:
    """Constant shift lambda of a candidate v = u + lambda (no Dirichlet boundary).

    lambda = (int k^2 v + i int_S k v + int f + int_S g_S + int_N g_N) / (||k||^2 + i |k|_{L1(S)}).
    """
    if system.space.dirichlet_mask.any():
        raise ValueError("lambda correction applies only without a Dirichlet boundary")
    m = _mass_row_sums(system)
    omega = system.omega
    bsum = system.B
    num = omega ** 2 * (m @ v) + 1j * omega * (bsum @ v) + system.loads.total.sum()
    den = omega ** 2 * m.sum() + 1j * omega * bsum.sum()
    if den == 0:
        raise ValueError("zero denominator in the lambda formula")
    return complex(num / den)


def filtered_solution(system: AssembledSystem, filter_acc: np.ndarray) -> FilteredSolution:
    """Filter, then add the Neumann offset when the whole boundary is Neumann."""
    y_hat = filter_second_order(filter_acc)
    if system.problem.pure_neumann:
        X = neumann_offset(system, y_hat)
        return FilteredSolution(y_hat + X, eta=float(system.omega * X.imag), eta_residual=float(X.real))
    return FilteredSolution(y_hat)


def soundhard_corrected(system: AssembledSystem, v: np.ndarray) -> FilteredSolution:
    lam = lambda_soundhard(system, v)
    return FilteredSolution(v - lam, lambda_shift=lam)

"""Explicit time integration of  M y'' + B y' + K y = F(t)  on the free DOFs.

Leapfrog is written in kick-drift-kick form,

    w      = v^n + dt/2 M^-1 (F^n - K y^n - B v^n)
    y^n+1  = y^n + dt w
    v^n+1  = w + dt/2 M^-1 (F^n+1 - K y^n+1 - B v^n+1)      (diagonal solve),

which eliminates to the two-step scheme with the impedance term at the
midpoint, B (y^n+1 - y^n-1) / 2dt, and starts with
y^1 = v0 + dt v1 + dt^2/2 M^-1 (F^0 - K v0 - B v1).  RK4 acts on the
first-order system (y, v).  Both schemes expose the exact transpose of their
homogeneous one-step map; the adjoint equation is integrated backward with
it, so discrete duality holds to rounding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import AssembledSystem
from .linalg import SparseOperator

log = logging.getLogger(__name__)


class CFLError(ValueError):
    pass


@dataclass(frozen=True)
class RunupSchedule:
    ell: int = 0
    period: float = 1.0

    def __post_init__(self):
        if self.ell < 0:
            raise ValueError("run-up length must be >= 0")

    @property
    def t_tr(self) -> float:
        return self.ell * self.period


def runup_smoother(t, schedule: RunupSchedule | None):
    """Smooth ramp (2 - sin s) sin s, s = pi t / (2 t_tr), for t <= t_tr; 1 afterwards."""
    t = np.asarray(t, dtype=float)
    if schedule is None or schedule.t_tr == 0:
        return np.ones_like(t) if t.ndim else 1.0
    s = np.sin(0.5 * np.pi * np.minimum(t, schedule.t_tr) / schedule.t_tr)
    out = np.where(t >= schedule.t_tr, 1.0, (2 - s) * s)
    return out if out.ndim else float(out)


@dataclass
class ControlPair:
    v0: np.ndarray
    v1: np.ndarray

    def copy(self) -> "ControlPair":
        return ControlPair(self.v0.copy(), self.v1.copy())

    def to_complex(self, omega: float) -> np.ndarray:
        return self.v0 + 1j / omega * self.v1


@dataclass
class TrajectorySummary:
    yT: np.ndarray
    ytT: np.ndarray
    filter_acc: np.ndarray | None
    n_steps: int
    dt: float
    energy: np.ndarray | None = None
    # leapfrog only: E^{n+1/2} = 1/2 |(y^{n+1} - y^n)/dt|_M^2 + 1/2 y^{n+1}.K y^n, the exact discrete
    # invariant (non-increasing with impedance damping, constant without)
    staggered_energy: np.ndarray | None = None


# semi-discrete operator -----------------------------------------------------------


class WaveOperator:
    """Free-DOF semi-discrete wave operator with Dirichlet lifting folded into the load."""

    def __init__(self, system: AssembledSystem, lumped: bool = True):
        self.system = system
        self.lumped = lumped
        space = system.space
        free, con = space.free, space.constrained
        self.free, self.constrained = free, con
        Kc = system.K.csr
        self.K = SparseOperator(Kc[free][:, free])
        Kfd = Kc[free][:, con]
        omega = system.omega
        if lumped:
            if system.M_lumped is None:
                raise ValueError("lumped mass unavailable for this element (use enriched P2 in 2D)")
            self.m = system.M_lumped[free]
            self.M = None
            self._lu = None
            Mfd = None
        else:
            Mc = system.M.csr
            self.m = None
            self.M = SparseOperator(Mc[free][:, free])
            self._lu = spla.splu(sp.csc_matrix(self.M.csr))
            Mfd = Mc[free][:, con]
        self.b = system.B[free]
        load = system.loads.total[free]
        gD = system.gD[con]
        Fc = load.real.copy()
        Fs = load.imag.copy()
        if len(con):
            # y_D(t) = Re{g_D e^{-iwt}},  y_D'' = -w^2 y_D
            Fc -= Kfd @ gD.real
            Fs -= Kfd @ gD.imag
            if Mfd is not None:
                Fc += omega ** 2 * (Mfd @ gD.real)
                Fs += omega ** 2 * (Mfd @ gD.imag)
        self.Fc, self.Fs = Fc, Fs
        self.gD = gD
        self.n = len(free)

    @property
    def omega(self) -> float:
        return self.system.omega

    @property
    def period(self) -> float:
        return self.system.period

    def mass(self, x: np.ndarray) -> np.ndarray:
        return self.m * x if self.lumped else self.M.spmv(x)

    def mass_inv(self, x: np.ndarray) -> np.ndarray:
        return x / self.m if self.lumped else self._lu.solve(x)

    def load(self, t: float, scale: float = 1.0) -> np.ndarray:
        wt = self.omega * t
        return scale * (math.cos(wt) * self.Fc + math.sin(wt) * self.Fs)

    def energy(self, y: np.ndarray, v: np.ndarray) -> float:
        return 0.5 * float(v @ self.mass(v) + y @ self.K.spmv(y))

    def lambda_max(self, iters: int = 30, seed: int = 0) -> float:
        """Largest eigenvalue of M^-1 K by power iteration with the generalized Rayleigh quotient."""
        if self.n == 0:
            return 0.0
        x = np.random.default_rng(seed).standard_normal(self.n)
        lam = 0.0
        for _ in range(iters):
            Kx = self.K.spmv(x)
            lam = float(x @ Kx) / float(x @ self.mass(x))
            x = self.mass_inv(Kx)
            x /= np.linalg.norm(x)
        return max(lam, float(x @ self.K.spmv(x)) / float(x @ self.mass(x)))

    def damping_rate(self) -> float:
        if not np.any(self.b):
            return 0.0
        if self.lumped:
            return float(np.max(self.b / self.m))
        return float(np.max(np.abs(self.mass_inv(self.b))))

    # full-vector helpers
    def embed(self, x_free: np.ndarray, x_con: np.ndarray | None = None) -> np.ndarray:
        out = np.zeros(self.system.space.ndof, dtype=np.result_type(x_free, 0.0))
        out[self.free] = x_free
        if x_con is not None:
            out[self.constrained] = x_con
        return out

    def dirichlet_state(self, t: float, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        e = np.exp(-1j * self.omega * t)
        return scale * (self.gD * e).real, scale * (-1j * self.omega * self.gD * e).real


# schemes ------------------------------------------------------------------------------


class Leapfrog:
    name = "leapfrog"
    order = 2
    safety = 0.9

    def __init__(self, op: WaveOperator):
        if not op.lumped:
            raise ValueError("leapfrog requires a lumped (diagonal) mass matrix")
        self.op = op

    def dt_max(self, lam: float) -> float:
        return self.safety * 2.0 / math.sqrt(lam) if lam > 0 else math.inf

    def step(self, y, v, Ky, F0, F1, dt):
        op = self.op
        w = v + (0.5 * dt) * (F0 - Ky - op.b * v) / op.m
        y1 = y + dt * w
        Ky1 = op.K.spmv(y1)
        v1 = (op.m * w + (0.5 * dt) * (F1 - Ky1)) / (op.m + (0.5 * dt) * op.b)
        return y1, v1, Ky1

    def step_hom(self, y, v, dt):
        y1, v1, _ = self.step(y, v, self.op.K.spmv(y), 0.0, 0.0, dt)
        return y1, v1

    def step_transpose(self, a, b, dt):
        op = self.op
        D = op.m + 0.5 * dt * op.b
        bd = b / D
        a1 = a - (0.5 * dt) * op.K.spmv(bd)
        c1 = op.m * bd
        c2 = dt * a1 + c1
        a2 = a1 - (0.5 * dt) * op.K.spmv(c2 / op.m)
        b2 = c2 - (0.5 * dt) * op.b * c2 / op.m
        return a2, b2


class RK4:
    name = "rk4"
    order = 4
    safety = 0.7
    stability_interval = 2.8

    def __init__(self, op: WaveOperator):
        self.op = op
        self._MiFc = op.mass_inv(op.Fc)
        self._MiFs = op.mass_inv(op.Fs)

    def dt_max(self, lam: float) -> float:
        rate = math.sqrt(lam) + self.op.damping_rate()
        return self.safety * self.stability_interval / rate if rate > 0 else math.inf

    def _accel(self, y, v, t, scale):
        op = self.op
        a = -op.mass_inv(op.K.spmv(y) + op.b * v)
        if scale:
            wt = op.omega * t
            a += scale * (math.cos(wt) * self._MiFc + math.sin(wt) * self._MiFs)
        return a

    def step(self, y, v, t, dt, scale0, scaleh, scale1):
        h2 = 0.5 * dt
        k1y, k1v = v, self._accel(y, v, t, scale0)
        k2y = v + h2 * k1v
        k2v = self._accel(y + h2 * k1y, k2y, t + h2, scaleh)
        k3y = v + h2 * k2v
        k3v = self._accel(y + h2 * k2y, k3y, t + h2, scaleh)
        k4y = v + dt * k3v
        k4v = self._accel(y + dt * k3y, k4y, t + dt, scale1)
        y1 = y + (dt / 6) * (k1y + 2 * k2y + 2 * k3y + k4y)
        v1 = v + (dt / 6) * (k1v + 2 * k2v + 2 * k3v + k4v)
        return y1, v1

    def step_hom(self, y, v, dt):
        return self.step(y, v, 0.0, dt, 0.0, 0.0, 0.0)

    def _apply_AT(self, a, b):
        op = self.op
        mb = op.mass_inv(b)
        return -op.K.spmv(mb), a - op.b * mb

    def step_transpose(self, a, b, dt):
        h2 = 0.5 * dt
        k1a, k1b = self._apply_AT(a, b)
        k2a, k2b = self._apply_AT(a + h2 * k1a, b + h2 * k1b)
        k3a, k3b = self._apply_AT(a + h2 * k2a, b + h2 * k2b)
        k4a, k4b = self._apply_AT(a + dt * k3a, b + dt * k3b)
        return (a + (dt / 6) * (k1a + 2 * k2a + 2 * k3a + k4a),
                b + (dt / 6) * (k1b + 2 * k2b + 2 * k3b + k4b))


SCHEMES = {"leapfrog": Leapfrog, "rk4": RK4}


# stepper -------------------------------------------------------------------------------


class Stepper:
    """Owns a scheme, a fixed time step with ``steps_per_period * dt == T``, and the
    forward / adjoint / filter machinery."""

    dense_threshold = 1000

    def __init__(self, system: AssembledSystem, scheme: str = "leapfrog", lumped: bool = True,
                 steps_per_period: int | None = None, power_iters: int = 30, dense: bool | None = None,
                 dt: float | None = None, cfl_safety: float | None = None):
        self.op = WaveOperator(system, lumped=lumped)
        try:
            self.scheme = SCHEMES[scheme](self.op)
        except KeyError:
            raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}") from None
        if cfl_safety is not None:
            if not 0 < cfl_safety <= 1:
                raise ValueError("cfl_safety must lie in (0, 1]")
            self.scheme.safety = cfl_safety
        T = self.op.period
        lam = self.op.lambda_max(power_iters)
        self.dt_cfl = self.scheme.dt_max(lam)
        n_min = max(1, math.ceil(T / self.dt_cfl - 1e-12)) if math.isfinite(self.dt_cfl) else 1
        if dt is not None:
            if dt > self.dt_cfl:
                raise CFLError(f"dt = {dt:.4e} violates the CFL bound of the {self.scheme.name} scheme; "
                               f"use dt <= {self.dt_cfl:.4e} ({n_min} steps per period)")
            n_min = max(n_min, math.ceil(T / dt - 1e-12))
        n_T = max(n_min, int(steps_per_period or 0))
        self.n_T = n_T
        self.dt = T / n_T
        self._dense = None
        if dense or (dense is None and 2 * self.op.n <= self.dense_threshold):
            self._build_dense()

    def _build_dense(self):
        """One-period map Phi = S^n_T and the filter matrix of the homogeneous
        problem, for small systems where dense algebra beats stepping."""
        n, dt = self.op.n, self.dt
        S = np.empty((2 * n, 2 * n))
        eye = np.eye(n)
        zero = np.zeros(n)
        for j in range(n):
            S[:, j] = np.concatenate(self.scheme.step_hom(eye[j], zero, dt))
            S[:, n + j] = np.concatenate(self.scheme.step_hom(zero, eye[j], dt))
        Phi = np.linalg.matrix_power(S, self.n_T)
        # trapezoid with endpoint halving: sum'_{m=0}^{N} (zS)^m = (I - Phi)[(I - zS)^-1 - I/2], z^N = 1
        z = np.exp(1j * self.omega * dt)
        I2 = np.eye(2 * n)
        G = (I2 - Phi) @ (np.linalg.inv(I2 - z * S) - 0.5 * I2)
        Cmat = np.hstack([eye, (1j / self.omega) * eye])
        self._dense = (Phi, (dt / self.period) * (Cmat @ G))

    @property
    def dense(self) -> bool:
        return self._dense is not None

    @property
    def omega(self) -> float:
        return self.op.omega

    @property
    def period(self) -> float:
        return self.op.period

    def forward(self, y0: np.ndarray, v0: np.ndarray, n_periods: int = 1, forcing: bool = True,
                with_filter: bool = False, smoothing: RunupSchedule | None = None,
                track_energy: bool = False, on_period: Callable | None = None) -> TrajectorySummary:
        """Integrate over ``n_periods`` periods from free-DOF data (y0, v0).

        With ``with_filter`` the fundamental-frequency accumulator is formed over
        the final period.
        """
        if int(n_periods) != n_periods or n_periods < 0:
            raise ValueError("n_periods must be a non-negative integer")
        if (self._dense is not None and not forcing and n_periods == 1 and not track_energy
                and on_period is None):
            Phi, Fm = self._dense
            z = np.concatenate([y0, v0])
            zT = Phi @ z
            n = self.op.n
            return TrajectorySummary(zT[:n], zT[n:], Fm @ z if with_filter else None, self.n_T, self.dt)
        op, dt, omega, T = self.op, self.dt, self.omega, self.period
        N = int(n_periods) * self.n_T
        y, v = np.array(y0, dtype=float), np.array(v0, dtype=float)
        acc = np.zeros(op.n, dtype=complex) if with_filter else None
        n_filter0 = N - self.n_T
        energy = [op.energy(y, v)] if track_energy else None
        staggered = [] if track_energy and isinstance(self.scheme, Leapfrog) else None

        def theta(t):
            if not forcing:
                return 0.0
            return runup_smoother(t, smoothing) if smoothing is not None else 1.0

        def accumulate(n, y, v):
            if acc is not None and n >= n_filter0:
                wgt = 0.5 if n in (n_filter0, N) else 1.0
                accumulate_filter(y, v, n * dt, dt, acc, omega, T, wgt)

        accumulate(0, y, v)
        if isinstance(self.scheme, Leapfrog):
            Ky = op.K.spmv(y)
            s0 = theta(0.0)
            F0 = op.load(0.0, s0) if s0 else 0.0
            for n in range(N):
                t1 = (n + 1) * dt
                s1 = theta(t1)
                F1 = op.load(t1, s1) if s1 else 0.0
                y_old, Ky_old = y, Ky
                y, v, Ky = self.scheme.step(y, v, Ky, F0, F1, dt)
                F0 = F1
                accumulate(n + 1, y, v)
                if track_energy:
                    energy.append(op.energy(y, v))
                    w = (y - y_old) / dt
                    staggered.append(0.5 * float(w @ op.mass(w)) + 0.5 * float(y @ Ky_old))
                if on_period is not None and (n + 1) % self.n_T == 0:
                    on_period((n + 1) // self.n_T, y, v)
        else:
            for n in range(N):
                t = n * dt
                y, v = self.scheme.step(y, v, t, dt, theta(t), theta(t + 0.5 * dt), theta(t + dt))
                accumulate(n + 1, y, v)
                if track_energy:
                    energy.append(op.energy(y, v))
                if on_period is not None and (n + 1) % self.n_T == 0:
                    on_period((n + 1) // self.n_T, y, v)
        return TrajectorySummary(y, v, acc, N, dt, None if energy is None else np.array(energy),
                                 None if staggered is None else np.array(staggered))

    def adjoint_terminal(self, dy: np.ndarray, dv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Terminal adjoint data from the periodicity mismatch (dy, dv) = (yT - v0, ytT - v1):
        p0 = dv,  M p1 = B p0 - K dy."""
        op = self.op
        return dv.copy(), op.mass_inv(op.b * dv - op.K.spmv(dy))

    def adjoint_backward(self, p0: np.ndarray, p1: np.ndarray, n_periods: int = 1):
        """Integrate the homogeneous adjoint wave equation from t = T back to 0.

        Returns (p(0), p_t(0)).  The backward sweep applies the transposed
        forward step to (B p - M p_t, M p), so it is the discrete adjoint of
        :meth:`forward` exactly.
        """
        op = self.op
        a = op.b * p0 - op.mass(p1)
        b = op.mass(p0)
        a, b = self.transpose_map(a, b, n_periods)
        p = op.mass_inv(b)
        pt = op.mass_inv(op.b * p - a)
        return p, pt

    def transpose_map(self, a: np.ndarray, b: np.ndarray, n_periods: int = 1):
        if self._dense is not None and n_periods == 1:
            out = self._dense[0].T @ np.concatenate([a, b])
            return out[: self.op.n], out[self.op.n:]
        for _ in range(int(n_periods) * self.n_T):
            a, b = self.scheme.step_transpose(a, b, self.dt)
        return a, b


def accumulate_filter(y, v, t, dt, acc, omega, T, weight=1.0):
    """Add one trapezoid node of (1/T) int (y + i/w y_t) e^{iwt} dt to ``acc`` in place."""
    acc += (weight * dt / T) * np.exp(1j * omega * t) * (y + (1j / omega) * v)
    return acc


def _stepper_for(system, scheme, lumped, steps_per_period):
    return Stepper(system, scheme, lumped=lumped, steps_per_period=steps_per_period)


def leapfrog_forward(system: AssembledSystem, control: ControlPair, n_periods: int = 1,
                     with_filter: bool = False, forcing: bool = True,
                     smoothing: RunupSchedule | None = None, steps_per_period: int | None = None,
                     stepper: Stepper | None = None) -> TrajectorySummary:
    st = stepper or _stepper_for(system, "leapfrog", True, steps_per_period)
    return _forward_full(st, control, n_periods, with_filter, forcing, smoothing)


def rk4_forward(system: AssembledSystem, control: ControlPair, n_periods: int = 1,
                with_filter: bool = False, forcing: bool = True, lumped: bool = True,
                smoothing: RunupSchedule | None = None, steps_per_period: int | None = None,
                stepper: Stepper | None = None) -> TrajectorySummary:
    st = stepper or _stepper_for(system, "rk4", lumped, steps_per_period)
    return _forward_full(st, control, n_periods, with_filter, forcing, smoothing)


def _forward_full(st: Stepper, control: ControlPair, n_periods, with_filter, forcing, smoothing):
    op = st.op
    s = st.forward(control.v0[op.free], control.v1[op.free], n_periods, forcing, with_filter, smoothing)
    tend = s.n_steps * s.dt
    scale = (runup_smoother(tend, smoothing) if smoothing else 1.0) if forcing else 0.0
    yD, vD = op.dirichlet_state(tend, scale)
    yT = op.embed(s.yT, yD)
    ytT = op.embed(s.ytT, vD)
    acc = None
    if s.filter_acc is not None:
        # the Dirichlet trace is exactly time harmonic: its fundamental is g_D
        acc = op.embed(s.filter_acc, op.gD * scale if forcing else np.zeros_like(op.gD))
    return TrajectorySummary(yT, ytT, acc, s.n_steps, s.dt, s.energy)


# VTK --------------------------------------------------------------------------------------


def write_vtk(mesh, fields: dict[str, np.ndarray], path) -> None:
    """ASCII legacy VTK unstructured grid with vertex (POINT_DATA) scalars."""
    nv = mesh.n_vertices
    pts = np.zeros((nv, 3))
    pts[:, : mesh.dim] = mesh.vertices
    nper = mesh.elements.shape[1]
    ctype = 3 if mesh.dim == 1 else 5
    lines = ["# vtk DataFile Version 3.0", "cmcg snapshot", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{p[0]:.12g} {p[1]:.12g} {p[2]:.12g}" for p in pts]
    lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (nper + 1)}")
    lines += [f"{nper} " + " ".join(str(int(i)) for i in e) for e in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(ctype)] * mesh.n_elements
    lines.append(f"POINT_DATA {nv}")
    for name, vals in fields.items():
        vals = np.asarray(vals)[:nv]
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{float(v):.12g}" for v in vals]
    Path(path).write_text("\n".join(lines) + "\n")

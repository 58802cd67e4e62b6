"""Controllability with conjugate gradients (CMCG).

The unknown is the initial state z of the forced wave equation.  With the
period map z -> Phi z + c, the periodicity mismatch e(z) = Phi z + c - z and
the energy weight W,

    J(z) = 1/2 e' W e,     J'(z) = (Phi - I)' W e,

and CG runs in the W inner product on the Riesz representative W^-1 J'(z).
For the second-order formulation z = (v0, v1), W = diag(K, M) and W^-1 needs
one elliptic solve with K.  For the first-order HDG formulation W is the
block-diagonal L2 mass and the Riesz map is a trivial scaling.

The transpose (Phi - I)' W e is evaluated by integrating the adjoint wave
equation backward with the exact transpose of the forward time step, so the
gradient is the true derivative of the discrete J.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import AssembledSystem, HelmholtzProblem, assemble_system, build_space, data_norm
from .filtering import FilteredSolution, filtered_solution, soundhard_corrected
from .helmholtz_ref import HelmholtzSystem, assemble_helmholtz, helmholtz_residual
from .linalg import pcg
from .mesh import BoundaryTag
from .timestepping import ControlPair, RunupSchedule, Stepper

log = logging.getLogger(__name__)

# the stiffness matrix is factorized once when the free space is at most this large
DIRECT_RIESZ_MAX = 200_000

HISTORY_VERSION = "# cmcg-history v1"
HISTORY_COLUMNS = ("iter", "residual_cg", "misfit_J", "residual_H", "cumulative_wave_periods", "wall_time_s")


@dataclass
class CmcgOptions:
    order: int = 2
    scheme: str = "rk4"
    lumped: bool = True
    tol: float = 1e-8
    max_iter: int = 500
    runup_ell: int = 0
    filter: bool = True
    stop_on: str = "cg"          # "cg": relative CG residual, "misfit": relative periodicity misfit
    compute_H: bool = False
    steps_per_period: int | None = None   # lower bound on time steps per period
    dt: float | None = None               # requested step; refused if above the CFL bound
    cfl_safety: float | None = None       # overrides the scheme default (0.9 leapfrog, 0.7 RK4)
    riesz: str = "auto"          # "pcg", "direct" or "auto" (direct below DIRECT_RIESZ_MAX unknowns)
    riesz_rtol: float = 1e-12
    enriched: bool | None = None

    def __post_init__(self):
        if self.stop_on not in ("cg", "misfit"):
            raise ValueError("stop_on must be 'cg' or 'misfit'")
        if self.riesz not in ("pcg", "direct", "auto"):
            raise ValueError("riesz must be 'pcg', 'direct' or 'auto'")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class IterRecord:
    iter: int
    residual_cg: float
    misfit_J: float
    residual_H: float
    cumulative_wave_periods: int
    wall_time_s: float

    def row(self):
        return [self.iter, f"{self.residual_cg:.16e}", f"{self.misfit_J:.16e}",
                "" if math.isnan(self.residual_H) else f"{self.residual_H:.16e}",
                self.cumulative_wave_periods, f"{self.wall_time_s:.6f}"]


@dataclass
class CgWorkspace:
    z: tuple
    r: tuple
    d: tuple
    e: tuple
    acc: object
    rr: float
    rr0: float
    alpha: float = 0.0
    beta: float = 0.0
    history: list[IterRecord] = field(default_factory=list)


@dataclass
class CmcgResult:
    u: np.ndarray
    control: object
    history: list[IterRecord]
    converged: bool
    iterations: int
    J: float
    filtered: FilteredSolution | None = None
    u_unfiltered: np.ndarray | None = None
    system: object = None
    stepper: object = None

    @property
    def total_periods(self) -> int:
        return self.history[-1].cumulative_wave_periods if self.history else 0


class ControlOperator(Protocol):
    def initial(self) -> tuple: ...
    def forward(self, z: tuple, forcing: bool, with_filter: bool) -> tuple[tuple, object]: ...
    def gradient(self, e: tuple) -> tuple: ...
    def riesz(self, g: tuple) -> tuple: ...
    def inner(self, x: tuple, y: tuple) -> float: ...


# tuple arithmetic on ControlPair-shaped pairs
def _axpy(a, x, y):
    return tuple(yi + a * xi for xi, yi in zip(x, y))


def _sub(x, y):
    return tuple(xi - yi for xi, yi in zip(x, y))


# second-order formulation ------------------------------------------------------------


class SecondOrderControl:
    """Control operator for (v0, v1) on the free DOFs of a continuous FE space."""

    def __init__(self, system: AssembledSystem, stepper: Stepper, riesz: str = "auto", riesz_rtol: float = 1e-12):
        self.system, self.stepper, self.op = system, stepper, stepper.op
        self.riesz_rtol = riesz_rtol
        self.singular = not system.space.dirichlet_mask.any()
        self._kdiag = self.op.K.diag()
        self._mass_weight = self.op.mass(np.ones(self.op.n))
        self._chol = None
        if riesz == "auto":
            riesz = "direct" if self.op.n <= DIRECT_RIESZ_MAX else "pcg"
        if riesz == "direct":
            Kf = self.op.K.csr
            if self.singular:
                # bordered system fixes the mass-weighted mean
                w = sp.csr_matrix(self._mass_weight[None, :])
                Kf = sp.bmat([[Kf, w.T], [w, None]])
            self._chol = spla.splu(sp.csc_matrix(Kf))

    def initial(self):
        n = self.op.n
        return (np.zeros(n), np.zeros(n))

    def forward(self, z, forcing=True, with_filter=False, smoothing=None, n_periods=1):
        s = self.stepper.forward(z[0], z[1], n_periods=n_periods, forcing=forcing,
                                 with_filter=with_filter, smoothing=smoothing)
        return (s.yT, s.ytT), s.filter_acc

    def gradient(self, e):
        st, op = self.stepper, self.op
        dy, dv = e
        p0, p1 = st.adjoint_terminal(dy, dv)
        p, pt = st.adjoint_backward(p0, p1)
        g0 = -op.K.spmv(dy) - op.mass(pt) + op.b * p
        g1 = op.mass(p - dv)
        return (g0, g1)

    def riesz(self, g):
        g0, g1 = g
        if self._chol is not None:
            if self.singular:
                rhs = np.concatenate([g0 - g0.mean(), [0.0]])
                x0 = self._chol.solve(rhs)[:-1]
            else:
                x0 = self._chol.solve(g0)
        else:
            res = pcg(self.op.K, g0, precond=self._kdiag, rtol=self.riesz_rtol,
                      project_mean=self._mass_weight if self.singular else None)
            if not res.converged:
                raise RuntimeError(f"Riesz solve did not converge in {res.iterations} iterations; "
                                   f"residual history tail {res.residuals[-5:]}")
            x0 = res.x
        return (x0, self.op.mass_inv(g1))

    def inner(self, x, y):
        op = self.op
        return float(x[0] @ op.K.spmv(y[0]) + x[1] @ op.mass(y[1]))

    # full-vector helpers
    def control_pair(self, z) -> ControlPair:
        op = self.op
        gD = op.gD
        return ControlPair(op.embed(z[0], gD.real), op.embed(z[1], op.omega * gD.imag))

    def from_pair(self, c: ControlPair):
        f = self.op.free
        return (np.array(c.v0[f], dtype=float), np.array(c.v1[f], dtype=float))

    def solution(self, z):
        return self.control_pair(z).to_complex(self.op.omega)

    def full_filter(self, acc):
        return self.op.embed(acc, self.op.gD)


def cg_residual(ws: CgWorkspace) -> float:
    """Relative CG residual sqrt(<r,r>_W / <r0,r0>_W)."""
    if ws.rr0 == 0.0:
        return 0.0
    return math.sqrt(max(ws.rr, 0.0) / ws.rr0)


def periodicity_misfit(J: float, denom: float, absolute: bool = False) -> float:
    """sqrt(J) / (||f|| + ||g_S||), or sqrt(J) in absolute mode."""
    if absolute:
        return math.sqrt(max(J, 0.0))
    if denom <= 0.0:
        raise ValueError("||f|| + ||g_S|| vanishes; use the absolute misfit mode")
    return math.sqrt(max(J, 0.0)) / denom


def cg_iterate(cop, z0: tuple, tol: float, max_iter: int, with_filter: bool = True,
               stop_on: str = "cg", misfit_denom: float = 1.0, periods0: int = 0,
               on_iter=None, t_start: float | None = None) -> tuple[CgWorkspace, bool, int]:
    """The CG loop, generic over the control operator.

    J and the filter accumulator are updated linearly alongside the iterate,
    so each iteration costs one homogeneous forward and one backward sweep.
    """
    t0 = time.perf_counter() if t_start is None else t_start
    absolute = misfit_denom <= 0.0
    zT, acc = cop.forward(z0, forcing=True, with_filter=with_filter)
    e = _sub(zT, z0)
    g = cop.gradient(e)
    gt = cop.riesz(g)
    rr = cop.inner(gt, gt)
    ws = CgWorkspace(z=tuple(x.copy() for x in z0), r=gt, d=tuple(x.copy() for x in gt), e=e,
                     acc=acc, rr=rr, rr0=rr)
    periods = periods0 + 2

    def record(it):
        J = 0.5 * cop.inner(ws.e, ws.e)
        rec = IterRecord(it, cg_residual(ws) if ws.rr0 > 0 else 0.0,
                         periodicity_misfit(J, misfit_denom, absolute), math.nan, periods,
                         time.perf_counter() - t0)
        if on_iter is not None:
            on_iter(rec, ws)
        ws.history.append(rec)
        return rec

    rec = record(0)

    def done(rec):
        if stop_on == "misfit":
            return rec.misfit_J <= tol
        return rec.residual_cg <= tol

    if rr == 0.0 or done(rec):
        return ws, True, 0
    for it in range(1, max_iter + 1):
        dT, acc_d = cop.forward(ws.d, forcing=False, with_filter=with_filter)
        e_d = _sub(dT, ws.d)
        gt_d = cop.riesz(cop.gradient(e_d))
        denom = cop.inner(gt_d, ws.d)
        if not denom > 0.0:
            log.warning("CG breakdown: <g~, d> = %.3e at iteration %d", denom, it)
            return ws, False, it - 1
        ws.alpha = ws.rr / denom
        a = ws.alpha
        ws.z = _axpy(-a, ws.d, ws.z)
        ws.r = _axpy(-a, gt_d, ws.r)
        ws.e = _axpy(-a, e_d, ws.e)
        if with_filter:
            ws.acc = ws.acc - a * acc_d
        rr_new = cop.inner(ws.r, ws.r)
        ws.beta = rr_new / ws.rr
        ws.rr = rr_new
        ws.d = _axpy(ws.beta, ws.d, ws.r)
        periods += 2
        rec = record(it)
        if done(rec):
            return ws, True, it
    log.warning("CMCG reached max_iter=%d (residual %.3e); returning the last iterate", max_iter,
                ws.history[-1].residual_cg)
    return ws, False, max_iter


def prepare(problem: HelmholtzProblem, options: CmcgOptions) -> tuple[AssembledSystem, Stepper]:
    enriched = options.enriched
    if enriched is None:
        enriched = problem.mesh.dim == 2 and options.order == 2 and options.lumped
    space = build_space(problem.mesh, options.order, enriched=enriched)
    system = assemble_system(space, problem)
    stepper = Stepper(system, options.scheme, lumped=options.lumped, steps_per_period=options.steps_per_period,
                      dt=options.dt, cfl_safety=options.cfl_safety)
    return system, stepper


def cmcg_solve(problem: HelmholtzProblem, options: CmcgOptions | None = None,
               system: AssembledSystem | None = None, stepper: Stepper | None = None) -> CmcgResult:
    """Solve the Helmholtz problem by controllability of the wave equation.

    Returns the filtered field when ``options.filter`` is set (with the
    Neumann offset in the pure-Neumann case), otherwise u = v0 + (i/w) v1.
    """
    options = options or CmcgOptions()
    if system is None or stepper is None:
        system, stepper = prepare(problem, options)
    cop = SecondOrderControl(system, stepper, options.riesz, options.riesz_rtol)
    denom = data_norm(system.space, problem)
    if denom == 0.0:
        log.debug("||f|| + ||g_S|| = 0; periodicity misfit reported in absolute mode")
    t0 = time.perf_counter()

    z0 = cop.initial()
    periods0 = 0
    if options.runup_ell > 0:
        sched = RunupSchedule(options.runup_ell, system.period)
        s = stepper.forward(z0[0], z0[1], n_periods=options.runup_ell, smoothing=sched)
        z0 = (s.yT, s.ytT)
        periods0 = options.runup_ell

    hs = assemble_helmholtz(system, lumped=False) if options.compute_H else None

    def on_iter(rec, ws):
        if hs is not None:
            rec.residual_H = helmholtz_residual(hs, cop.solution(ws.z))

    ws, converged, iters = cg_iterate(cop, z0, options.tol, options.max_iter, with_filter=options.filter,
                                      stop_on=options.stop_on, misfit_denom=denom, periods0=periods0,
                                      on_iter=on_iter, t_start=t0)
    u_raw = cop.solution(ws.z)
    J = 0.5 * cop.inner(ws.e, ws.e)
    filtered = None
    u = u_raw
    if options.filter:
        filtered = filtered_solution(system, cop.full_filter(ws.acc))
        u = filtered.u
    return CmcgResult(u, cop.control_pair(ws.z), ws.history, converged, iters, J, filtered, u_raw,
                      system, stepper)


def eval_J(system: AssembledSystem, stepper: Stepper, control: ControlPair) -> tuple[float, tuple]:
    """J of a full-vector control and the periodicity mismatch on the free DOFs."""
    cop = SecondOrderControl(system, stepper)
    z = cop.from_pair(control)
    zT, _ = cop.forward(z, forcing=True)
    e = _sub(zT, z)
    return 0.5 * cop.inner(e, e), e


def eval_gradient(system: AssembledSystem, stepper: Stepper, e: tuple) -> ControlPair:
    """Raw gradient J'(v) as full DOF vectors (zero on constrained DOFs)."""
    cop = SecondOrderControl(system, stepper)
    g0, g1 = cop.gradient(e)
    return ControlPair(stepper.op.embed(g0), stepper.op.embed(g1))


def riesz_representative(system: AssembledSystem, stepper: Stepper, g: ControlPair,
                         rtol: float = 1e-12) -> ControlPair:
    cop = SecondOrderControl(system, stepper, riesz_rtol=rtol)
    f = stepper.op.free
    x0, x1 = cop.riesz((g.v0[f], g.v1[f]))
    return ControlPair(stepper.op.embed(x0), stepper.op.embed(x1))


def soundhard_solution(result: CmcgResult) -> FilteredSolution:
    """Unfiltered minimizer corrected by the constant shift lambda."""
    return soundhard_corrected(result.system, result.u_unfiltered)


# do-nothing comparator -----------------------------------------------------------------


@dataclass
class DoNothingResult:
    w_h: np.ndarray
    misfit: list[float]
    J: list[float]
    states: list | None = None


def do_nothing_solve(system: AssembledSystem, stepper: Stepper, n_periods: int,
                     smoothing: RunupSchedule | None = None, keep_states: bool = False) -> DoNothingResult:
    """Integrate the forced wave equation from rest for ``n_periods`` periods.

    The misfit of w_h^(l) is the J of the state at t = lT, i.e. the energy
    mismatch between the states at lT and (l+1)T; it is exact for every l
    at which the forcing is already at full strength (l >= run-up length).
    Entry l of the returned lists corresponds to l = 0 .. n_periods - 1.
    """
    if n_periods < 1:
        raise ValueError("n_periods must be >= 1")
    cop = SecondOrderControl(system, stepper)
    denom = data_norm(system.space, system.problem)
    absolute = denom == 0.0
    prev = [cop.initial()]
    Js, misfits, states = [], [], []

    def on_period(l, y, v):
        e = (y - prev[0][0], v - prev[0][1])
        J = 0.5 * cop.inner(e, e)
        Js.append(J)
        misfits.append(periodicity_misfit(J, denom, absolute))
        if keep_states:
            states.append(prev[0])
        prev[0] = (y.copy(), v.copy())

    z = cop.initial()
    stepper.forward(z[0], z[1], n_periods=n_periods, smoothing=smoothing, on_period=on_period)
    w_h = cop.solution(prev[0])
    return DoNothingResult(w_h, misfits, Js, states if keep_states else None)


# history output ---------------------------------------------------------------------------


def write_history(history: list[IterRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(HISTORY_VERSION + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for rec in history:
            w.writerow(rec.row())


def read_history(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != HISTORY_VERSION:
        raise ValueError(f"{path}: missing or unknown history header")
    return list(csv.DictReader(lines[1:]))


# first-order path -----------------------------------------------------------------------------


def cmcg_solve_mixed(problem: HelmholtzProblem, options: CmcgOptions | None = None, n_elements: int | None = None,
                     post_process: bool = False, mass_coeff: str = "c-2"):
    """CMCG on the first-order system discretized by HDG (1D only)."""
    from .hdg1d import HdgControl, build_hdg

    options = options or CmcgOptions()
    if problem.mesh.dim != 1:
        raise ValueError("the first-order path is implemented in 1D only")
    kw = {} if options.cfl_safety is None else {"cfl_safety": options.cfl_safety}
    hdg = build_hdg(problem.mesh, options.order, problem, mass_coeff=mass_coeff,
                    steps_per_period=options.steps_per_period, dt=options.dt, **kw)
    cop = HdgControl(hdg)
    denom = data_norm(build_space(problem.mesh, 1), problem)
    t0 = time.perf_counter()
    ws, converged, iters = cg_iterate(cop, cop.initial(), options.tol, options.max_iter, with_filter=True,
                                      stop_on=options.stop_on, misfit_denom=denom, t_start=t0)
    J = 0.5 * cop.inner(ws.e, ws.e)
    if options.filter:
        u = hdg.filtered_u(ws.acc, post_process=post_process)
    else:
        u = hdg.reconstruct_u(ws.z)
    return CmcgResult(u, ws.z, ws.history, converged, iters, J, None, None, hdg, None)

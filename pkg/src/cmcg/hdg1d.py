"""Hybridizable DG for the first-order wave system in 1D,

    a v_t - p_x = f,   p_t = v_x,      a = 1/c^2 (or 1/c),

with numerical flux  p_hat.n = p.n - tau (v - v_hat),  tau = 1/c, RK4 in time,
and the element-local superconvergent post-processing.

Unknowns per element are coefficients in the orthonormal Legendre basis of
the reference interval [-1, 1]; the physical mass block is (h/2) I, so the
method is explicit with trivial mass solves.  Face traces v_hat are
eliminated locally at every stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.polynomial.legendre as npleg
import scipy.sparse as sp

from .fem import HelmholtzProblem, _call_boundary, _call_volume, element_coefficient, build_space
from .mesh import BoundaryTag, Mesh
from .timestepping import CFLError


def _ortho_scale(nb: int) -> np.ndarray:
    return np.sqrt((2 * np.arange(nb) + 1) / 2.0)


def legendre_eval(coeffs: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Evaluate orthonormal-Legendre expansions; coeffs (ne, nb) -> values (ne, len(xi))."""
    nb = coeffs.shape[-1]
    V = npleg.legvander(xi, nb - 1) * _ortho_scale(nb)
    return coeffs @ V.T


@dataclass
class HdgField:
    """Piecewise polynomial field on a 1D mesh (orthonormal Legendre coefficients)."""

    x_left: np.ndarray
    h: np.ndarray
    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    def l2_error(self, exact, nq: int | None = None) -> float:
        xi, w = npleg.leggauss(nq or self.degree + 6)
        vals = legendre_eval(self.coeffs, xi)
        X = self.x_left[:, None] + 0.5 * self.h[:, None] * (xi + 1)
        ue = _call_volume(exact, X.reshape(-1, 1)).reshape(X.shape)
        return math.sqrt(float(np.sum(0.5 * self.h[:, None] * w * np.abs(vals - ue) ** 2)))

    def l2_norm(self) -> float:
        return self.l2_error(lambda x: np.zeros(len(x)))

    def element_means(self) -> np.ndarray:
        return self.coeffs[:, 0] * _ortho_scale(1)[0]

    def at(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        e = np.clip(np.searchsorted(self.x_left, x, side="right") - 1, 0, len(self.h) - 1)
        xi = 2 * (x - self.x_left[e]) / self.h[e] - 1
        nb = self.coeffs.shape[1]
        V = npleg.legvander(xi, nb - 1) * _ortho_scale(nb)
        return np.sum(self.coeffs[e] * V, axis=1)


class Hdg1D:
    """HDG spaces, operator, time stepper and post-processing on a 1D mesh."""

    def __init__(self, mesh: Mesh, r: int, problem: HelmholtzProblem, mass_coeff: str = "c-2",
                 steps_per_period: int | None = None, cfl_safety: float = 0.7, dt: float | None = None):
        if mesh.dim != 1:
            raise ValueError("HDG is implemented for 1D meshes only")
        if r not in (1, 2, 3):
            raise ValueError(f"unsupported HDG order {r}; use 1, 2 or 3")
        if mass_coeff not in ("c-2", "c-1"):
            raise ValueError("mass_coeff must be 'c-2' or 'c-1'")
        x = mesh.vertices[:, 0]
        el = mesh.elements
        order = np.argsort(x[el[:, 0]])
        el = el[order]
        if not np.all(x[el[:, 1]] > x[el[:, 0]]) or not np.all(el[1:, 0] == el[:-1, 1]):
            raise ValueError("HDG expects a chain of left-to-right oriented segments")
        self.mesh, self.r, self.problem = mesh, r, problem
        self.nb = r + 1
        self.ne = len(el)
        self.face_vertex = np.concatenate([el[:, 0], el[-1:, 1]])
        self.x_left = x[el[:, 0]]
        self.h = x[el[:, 1]] - x[el[:, 0]]
        c = element_coefficient(build_space(mesh, 1), problem.c)[order]
        self.c = c
        self.a = c ** -2.0 if mass_coeff == "c-2" else 1.0 / c
        self.tau = 1.0 / c
        self.omega = problem.omega
        self.period = problem.period

        nb = self.nb
        s = _ortho_scale(nb)
        self.phiR = s.copy()
        self.phiL = s * (-1.0) ** np.arange(nb)
        # D[i, j] = int phi_j phi_i' dxi on the reference interval
        xi, w = npleg.leggauss(nb + 2)
        V = npleg.legvander(xi, nb - 1) * s
        dV = np.stack([npleg.legval(xi, npleg.legder(np.eye(nb)[j])) for j in range(nb)], axis=1) * s
        self.D = np.einsum("q,qj,qi->ij", w, V, dV)

        # boundary closure per end face: (tag, complex data)
        tags = {int(v): BoundaryTag(t) for (v,), t in zip(mesh.facets, mesh.facet_tags)}
        self.bc = []
        for side, vtx in (("left", self.face_vertex[0]), ("right", self.face_vertex[-1])):
            tag = tags[int(vtx)]
            pt = x[[vtx]][:, None]
            nrm = np.array([[-1.0 if side == "left" else 1.0]])
            if tag == BoundaryTag.DIRICHLET:
                g = -1j * self.omega * _call_volume(problem.g_D, pt)[0]
            elif tag == BoundaryTag.SOMMERFELD:
                g = _call_boundary(problem.g_S, pt, nrm)[0]
            else:
                g = _call_boundary(problem.g_N, pt, nrm)[0]
            self.bc.append((tag, complex(g)))

        # complex element load (f, phi_i)_K
        xq, wq = npleg.leggauss(nb + 4)
        X = self.x_left[:, None] + 0.5 * self.h[:, None] * (xq + 1)
        fv = _call_volume(problem.f, X.reshape(-1, 1)).reshape(X.shape)
        Vq = npleg.legvander(xq, nb - 1) * s
        self.F_hat = np.einsum("q,e,eq,qi->ei", wq, 0.5 * self.h, fv, Vq)

        self.n = 2 * self.ne * nb
        self.W = np.concatenate([np.repeat(0.5 * self.h, nb), np.repeat(0.5 * self.h * self.a, nb)])
        self.A = self._assemble()
        G = self.rhs_flat(np.zeros(self.n), self._bvals_hat(), self.F_hat)
        self.Gc, self.Gs = G.real.copy(), G.imag.copy()
        self.AT = self.A.T.tocsr()

        self.norm_A = self.operator_norm()
        self.dt_cfl = cfl_safety * 2.8 / self.norm_A
        n_min = max(1, math.ceil(self.period / self.dt_cfl - 1e-12))
        if dt is not None:
            if dt > self.dt_cfl:
                raise CFLError(f"dt = {dt:.4e} violates the RK4 bound of the HDG operator; use dt <= {self.dt_cfl:.4e}")
            n_min = max(n_min, math.ceil(self.period / dt - 1e-12))
        self.n_T = max(n_min, int(steps_per_period or 0))
        self.dt = self.period / self.n_T
        self._dense = None
        if self.n <= 1200:
            self._build_dense()

    # --- state layout -----------------------------------------------------------------
    def split(self, X: np.ndarray):
        m = self.ne * self.nb
        return X[:m].reshape(self.ne, self.nb), X[m:].reshape(self.ne, self.nb)

    def join(self, P: np.ndarray, V: np.ndarray) -> np.ndarray:
        return np.concatenate([P.ravel(), V.ravel()])

    # --- traces and right-hand side ----------------------------------------------------
    def _bvals_hat(self) -> np.ndarray:
        return np.array([g for _, g in self.bc])

    def resolve_trace(self, P, V, bvals) -> np.ndarray:
        """Face traces v_hat from the element states and boundary data values."""
        pR, pL = P @ self.phiR, P @ self.phiL
        vR, vL = V @ self.phiR, V @ self.phiL
        dtype = np.result_type(P, V, bvals)
        vh = np.empty(self.ne + 1, dtype=dtype)
        tm, tp = self.tau[:-1], self.tau[1:]
        # minus side: left element, n = +1; plus side: right element, n = -1
        vh[1:-1] = (tm * vR[:-1] + tp * vL[1:] - pR[:-1] + pL[1:]) / (tm + tp)
        ends = ((0, -pL[0], vL[0], 0), (-1, pR[-1], vR[-1], -1))
        for (tag, _), g, (face, pn, v, e) in zip(self.bc, bvals, ends):
            tau, c = self.tau[e], self.c[e]
            if tag == BoundaryTag.DIRICHLET:
                vh[face] = g
            elif tag == BoundaryTag.SOMMERFELD:
                vh[face] = (g - pn + tau * v) / (tau + 1.0 / c)
            else:
                vh[face] = v + (g - pn) / tau
        return vh

    def flux(self, P, V, vh):
        """p_hat.n at the right and left end of every element."""
        pR, pL = P @ self.phiR, P @ self.phiL
        vR, vL = V @ self.phiR, V @ self.phiL
        return pR - self.tau * (vR - vh[1:]), -pL - self.tau * (vL - vh[:-1])

    def rhs(self, P, V, bvals, Ff):
        vh = self.resolve_trace(P, V, bvals)
        fR, fL = self.flux(P, V, vh)
        dP = (-V @ self.D.T + np.outer(vh[1:], self.phiR) - np.outer(vh[:-1], self.phiL)) / (0.5 * self.h[:, None])
        dV = (Ff - P @ self.D.T + np.outer(fR, self.phiR) + np.outer(fL, self.phiL)) / (
            0.5 * (self.h * self.a)[:, None])
        return dP, dV

    def rhs_flat(self, X, bvals, Ff):
        P, V = self.split(X)
        return self.join(*self.rhs(P, V, bvals, Ff))

    def _assemble(self) -> sp.csr_matrix:
        zb = np.zeros(2)
        zf = np.zeros((self.ne, self.nb))
        cols = [self.rhs_flat(col, zb, zf) for col in np.eye(self.n)]
        return sp.csr_matrix(np.array(cols).T)

    def operator_norm(self, iters: int = 30) -> float:
        """||A|| in the energy norm.  The HDG operator is far from normal, so RK4
        stability is governed by its numerical range, which this bounds, rather
        than by the spectral radius."""
        wh = np.sqrt(self.W)
        Aw = sp.diags(wh) @ self.A @ sp.diags(1.0 / wh)
        if self.n <= 3000:
            return float(np.linalg.norm(Aw.toarray(), 2))
        x = np.random.default_rng(0).standard_normal(self.n)
        lam = 0.0
        for _ in range(iters):
            x /= np.linalg.norm(x)
            y = Aw.T @ (Aw @ x)
            lam = float(x @ y)
            x = y
        return math.sqrt(lam) * 1.05

    def energy(self, X: np.ndarray) -> float:
        return 0.5 * float(X @ (self.W * X))

    # --- time stepping ---------------------------------------------------------------------
    def forcing(self, t: float) -> np.ndarray:
        wt = self.omega * t
        return math.cos(wt) * self.Gc + math.sin(wt) * self.Gs

    def hdg_rk4_advance(self, X, t, dt, forcing: bool = True):
        A = self.A
        if forcing:
            g0, gh, g1 = self.forcing(t), self.forcing(t + 0.5 * dt), self.forcing(t + dt)
        else:
            g0 = gh = g1 = 0.0
        k1 = A @ X + g0
        k2 = A @ (X + 0.5 * dt * k1) + gh
        k3 = A @ (X + 0.5 * dt * k2) + gh
        k4 = A @ (X + dt * k3) + g1
        return X + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)

    def _rk4_T(self, Y, dt):
        AT = self.AT
        k1 = AT @ Y
        k2 = AT @ (Y + 0.5 * dt * k1)
        k3 = AT @ (Y + 0.5 * dt * k2)
        k4 = AT @ (Y + dt * k3)
        return Y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)

    def _build_dense(self):
        I = np.eye(self.n)
        Ad = self.A.toarray() * self.dt
        S = I + Ad @ (I + Ad / 2 @ (I + Ad / 3 @ (I + Ad / 4)))
        Phi = np.linalg.matrix_power(S, self.n_T)
        z = np.exp(1j * self.omega * self.dt)
        G = (I - Phi) @ (np.linalg.inv(I - z * S) - 0.5 * I)
        self._dense = (Phi, (self.dt / self.period) * G)

    def forward(self, X0, n_periods: int = 1, forcing: bool = True, with_filter: bool = False,
                track_energy: bool = False):
        """Integrate over whole periods; returns (X(T), filter accumulator, energies)."""
        if self._dense is not None and not forcing and n_periods == 1 and not track_energy:
            Phi, Fm = self._dense
            return Phi @ X0, (Fm @ X0 if with_filter else None), None
        N = n_periods * self.n_T
        dt, om, T = self.dt, self.omega, self.period
        X = np.array(X0, dtype=float)
        acc = np.zeros(self.n, dtype=complex) if with_filter else None
        n0 = N - self.n_T
        energies = [self.energy(X)] if track_energy else None
        for n in range(N + 1):
            if acc is not None and n >= n0:
                wgt = 0.5 if n in (n0, N) else 1.0
                acc += (wgt * dt / T) * np.exp(1j * om * n * dt) * X
            if n == N:
                break
            X = self.hdg_rk4_advance(X, n * dt, dt, forcing)
            if track_energy:
                energies.append(self.energy(X))
        return X, acc, energies

    def transpose_period(self, Y):
        if self._dense is not None:
            return self._dense[0].T @ Y
        for _ in range(self.n_T):
            Y = self._rk4_T(Y, self.dt)
        return Y

    # --- reference solution and reconstructions ------------------------------------------------
    def direct_solve(self) -> np.ndarray:
        """Complex amplitude X_hat of the time-harmonic semi-discrete solution Re{X_hat e^{-iwt}}."""
        G = self.Gc + 1j * self.Gs
        M = (-1j * self.omega) * sp.identity(self.n, format="csc") - self.A.tocsc()
        from scipy.sparse.linalg import spsolve
        return spsolve(M, G)

    def field(self, coeffs) -> HdgField:
        return HdgField(self.x_left, self.h, coeffs)

    def u_from_amplitude(self, X_hat: np.ndarray) -> HdgField:
        """u = (i/w) V_hat for a time-harmonic velocity amplitude."""
        _, V = self.split(X_hat)
        return self.field((1j / self.omega) * V)

    def filtered_u(self, acc: np.ndarray, post_process: bool = False) -> HdgField:
        """u = (2i/w) (1/T) int v e^{iwt} dt, optionally from the post-processed velocity."""
        P, V = self.split(acc)
        if not post_process:
            return self.field((2j / self.omega) * V)
        vh = self.resolve_trace(P, V, 0.5 * self._bvals_hat())
        return self.field((2j / self.omega) * self.post_process_velocity(V, vh))

    def post_process_velocity(self, V, vh) -> np.ndarray:
        """v* in P^{r+1}: grad v* = p*, the weak gradient of (v, v_hat), and equal element means."""
        Pstar = (-V @ self.D.T + np.outer(vh[1:], self.phiR) - np.outer(vh[:-1], self.phiL)) / (0.5 * self.h[:, None])
        return self._antiderivative(Pstar, V[:, 0])

    def post_process(self, X: np.ndarray, bvals=None, y_mean: np.ndarray | None = None):
        """Local post-processing of a state: (p*, v*, y*) with y* from p_h and element means y_mean."""
        P, V = self.split(X)
        if bvals is None:
            bvals = np.zeros(2)
        vh = self.resolve_trace(P, V, bvals)
        Pstar = (-V @ self.D.T + np.outer(vh[1:], self.phiR) - np.outer(vh[:-1], self.phiL)) / (0.5 * self.h[:, None])
        vstar = self._antiderivative(Pstar, V[:, 0])
        ystar = None
        if y_mean is not None:
            ystar = self._antiderivative(P, y_mean)
        return Pstar, vstar, ystar

    def _antiderivative(self, G, mean0):
        """w in P^{r+1} per element with w_x = G and orthonormal mean coefficient ``mean0``."""
        nb = G.shape[1]
        s = _ortho_scale(nb + 1)
        std = G * _ortho_scale(nb)                           # standard Legendre coefficients
        W = npleg.legint(std.T, scl=1.0, axis=0).T * (0.5 * self.h[:, None])
        W[:, 0] = 0.0
        # zero-mean part: P_0 coefficient is the mean; set it from the target
        out = W / s
        out[:, 0] = mean0
        return out

    def reconstruct_u(self, z) -> HdgField:
        """u = -k^-2 (Re f + p0_x) + (i/w) v0, from an unfiltered minimizer."""
        P = z[0].reshape(self.ne, self.nb)
        V = z[1].reshape(self.ne, self.nb)
        k2 = (self.omega / self.c) ** 2
        s = _ortho_scale(self.nb)
        dP = np.zeros_like(P)
        for e in range(self.ne):
            d = npleg.legder(P[e] * s) * (2.0 / self.h[e])
            dP[e, : len(d)] = d / s[: len(d)]
        Mf = self.F_hat.real / (0.5 * self.h[:, None])      # L2 projection of Re f
        return self.field(-(Mf + dP) / k2[:, None] + (1j / self.omega) * V)


def build_hdg(mesh: Mesh, r: int, problem: HelmholtzProblem, mass_coeff: str = "c-2",
              steps_per_period: int | None = None, **kw) -> Hdg1D:
    return Hdg1D(mesh, r, problem, mass_coeff=mass_coeff, steps_per_period=steps_per_period, **kw)


class HdgControl:
    """Control operator for (p0, v0) in the L2 energy inner product (no Riesz solve)."""

    def __init__(self, hdg: Hdg1D):
        self.hdg = hdg
        self.m = hdg.ne * hdg.nb

    def _cat(self, z):
        return np.concatenate(z)

    def _split(self, X):
        return (X[: self.m], X[self.m:])

    def initial(self):
        return (np.zeros(self.m), np.zeros(self.m))

    def forward(self, z, forcing=True, with_filter=False):
        XT, acc, _ = self.hdg.forward(self._cat(z), forcing=forcing, with_filter=with_filter)
        return self._split(XT), acc

    def gradient(self, e):
        We = self.hdg.W * self._cat(e)
        return self._split(self.hdg.transpose_period(We) - We)

    def riesz(self, g):
        return self._split(self._cat(g) / self.hdg.W)

    def inner(self, x, y):
        return float(self._cat(x) @ (self.hdg.W * self._cat(y)))

    def J(self, z) -> float:
        zT, _ = self.forward(z)
        e = self._cat(zT) - self._cat(z)
        return 0.5 * float(e @ (self.hdg.W * e))

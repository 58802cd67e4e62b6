"""Continuous Lagrange spaces and assembly of the second-order wave/Helmholtz operators.

Supported elements: P1, P2, P3 on intervals (nodes at Gauss-Lobatto points, so
nodal quadrature gives order-preserving lumping), P1 and P2 on triangles, and
the bubble-enriched P2 triangle whose 7-point nodal rule (vertex 1/20, edge
2/15, centroid 9/20 of the area) is exact for cubics.  Plain P2 triangles have
no positive lumping; asking for one raises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import SparseOperator
from .mesh import BoundaryTag, Mesh, facet_normals

# quadrature ---------------------------------------------------------------


def gauss_interval(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def gauss_triangle(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed (Duffy) Gauss rule on the reference triangle, exact to ``degree``."""
    n = degree // 2 + 1
    a, wa = gauss_interval(n)
    A, B = np.meshgrid(a, a, indexing="ij")
    WA, WB = np.meshgrid(wa, wa, indexing="ij")
    pts = np.stack([(A * (1 - B)).ravel(), B.ravel()], axis=1)
    return pts, (WA * WB * (1 - B)).ravel()


def gauss_lobatto_nodes(r: int) -> np.ndarray:
    if r == 1:
        return np.array([0.0, 1.0])
    if r == 2:
        return np.array([0.0, 0.5, 1.0])
    if r == 3:
        s = 1 / math.sqrt(5)
        return np.array([0.0, (1 - s) / 2, (1 + s) / 2, 1.0])
    raise ValueError(f"unsupported 1D order {r}")


def gauss_lobatto_weights(r: int) -> np.ndarray:
    return {1: np.array([0.5, 0.5]), 2: np.array([1, 4, 1]) / 6, 3: np.array([1, 5, 5, 1]) / 12}[r]


# reference elements --------------------------------------------------------


@dataclass(frozen=True)
class RefElement:
    dim: int
    order: int
    enriched: bool
    nodes: np.ndarray            # (nloc, dim) reference coordinates, local DOF order
    lump_weights: np.ndarray | None  # nodal quadrature weights (sum = reference measure)

    @property
    def nloc(self) -> int:
        return len(self.nodes)

    @property
    def measure(self) -> float:
        return 1.0 if self.dim == 1 else 0.5

    def eval(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Basis values (nq, nloc) and reference gradients (nq, nloc, dim)."""
        pts = np.atleast_2d(pts)
        if self.dim == 1:
            return _lagrange_1d(self.nodes[:, 0], pts[:, 0])
        return _triangle_basis(self.order, self.enriched, pts)


def _lagrange_1d(nodes: np.ndarray, x: np.ndarray):
    V = np.vander(nodes, increasing=True)
    C = np.linalg.inv(V)  # column j: monomial coefficients of basis j
    P = np.vander(x, len(nodes), increasing=True)
    dP = np.zeros_like(P)
    for k in range(1, len(nodes)):
        dP[:, k] = k * x ** (k - 1)
    return P @ C, (dP @ C)[:, :, None]


def _triangle_basis(order: int, enriched: bool, pts: np.ndarray):
    xi, eta = pts[:, 0], pts[:, 1]
    lam = np.stack([1 - xi - eta, xi, eta], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if order == 1:
        return lam, np.broadcast_to(dlam, (len(pts), 3, 2)).copy()
    vals, grads = [], []
    for i in range(3):
        vals.append(lam[:, i] * (2 * lam[:, i] - 1))
        grads.append((4 * lam[:, i] - 1)[:, None] * dlam[i])
    for j in range(3):  # edge j is opposite vertex j
        k, l = (j + 1) % 3, (j + 2) % 3
        vals.append(4 * lam[:, k] * lam[:, l])
        grads.append(4 * (lam[:, l][:, None] * dlam[k] + lam[:, k][:, None] * dlam[l]))
    V = np.stack(vals, axis=1)
    G = np.stack(grads, axis=1)
    if not enriched:
        return V, G
    b = 27 * lam[:, 0] * lam[:, 1] * lam[:, 2]
    db = 27 * (lam[:, 1:2] * lam[:, 2:3] * dlam[0] + lam[:, 0:1] * lam[:, 2:3] * dlam[1]
               + lam[:, 0:1] * lam[:, 1:2] * dlam[2])
    at_centroid = np.array([-1 / 9] * 3 + [4 / 9] * 3)
    V = np.concatenate([V - b[:, None] * at_centroid, b[:, None]], axis=1)
    G = np.concatenate([G - db[:, None, :] * at_centroid[None, :, None], db[:, None, :]], axis=1)
    return V, G


def ref_element(dim: int, order: int, enriched: bool = False) -> RefElement:
    if dim == 1:
        if order not in (1, 2, 3):
            raise ValueError(f"unsupported order {order} in 1D (use 1, 2 or 3)")
        gl = gauss_lobatto_nodes(order)
        nodes = np.concatenate([gl[[0, -1]], gl[1:-1]])[:, None]
        w = gauss_lobatto_weights(order)
        return RefElement(1, order, False, nodes, np.concatenate([w[[0, -1]], w[1:-1]]))
    if order not in (1, 2):
        raise ValueError(f"unsupported order {order} in 2D (use 1 or 2)")
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if order == 1:
        return RefElement(2, 1, False, verts, np.full(3, 1 / 6))
    mids = np.array([[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])
    if not enriched:
        return RefElement(2, 2, False, np.vstack([verts, mids]), None)
    nodes = np.vstack([verts, mids, [[1 / 3, 1 / 3]]])
    w = 0.5 * np.array([1 / 20] * 3 + [2 / 15] * 3 + [9 / 20])
    return RefElement(2, 2, True, nodes, w)


# spaces ---------------------------------------------------------------------


@dataclass(frozen=True)
class FESpace:
    mesh: Mesh
    order: int
    ref: RefElement
    element_dofs: np.ndarray   # (ne, nloc)
    dof_coords: np.ndarray     # (ndof, dim)
    facet_dofs: np.ndarray     # (nbf, nfacet_loc): [vertex dofs..., edge dof]
    facet_elements: np.ndarray  # element owning each boundary facet
    dirichlet_mask: np.ndarray

    @property
    def ndof(self) -> int:
        return self.dof_coords.shape[0]

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @cached_property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_mask)

    @cached_property
    def constrained(self) -> np.ndarray:
        return np.flatnonzero(self.dirichlet_mask)

    def vertex_values(self, u: np.ndarray) -> np.ndarray:
        """Nodal values at mesh vertices (DOFs 0..nv-1 are the vertices)."""
        return u[: self.mesh.n_vertices]


def build_space(mesh: Mesh, r: int, enriched: bool = False) -> FESpace:
    ref = ref_element(mesh.dim, r, enriched)
    nv = mesh.n_vertices
    el = mesh.elements
    ne = len(el)
    if mesh.dim == 1:
        x = mesh.vertices[:, 0]
        n_int = r - 1
        interior = nv + np.arange(ne * n_int).reshape(ne, n_int)
        element_dofs = np.concatenate([el, interior], axis=1)
        xl, xr = x[el[:, 0]], x[el[:, 1]]
        t = ref.nodes[2:, 0]
        coords = np.concatenate([x, (xl[:, None] + (xr - xl)[:, None] * t[None, :]).ravel()])[:, None]
        facet_dofs = mesh.facets.copy()
        facet_elements = np.array([int(np.flatnonzero((el == f[0]).any(axis=1))[0]) for f in mesh.facets],
                                  dtype=int)
    else:
        if r == 1:
            element_dofs = el.copy()
            coords = mesh.vertices.copy()
            edges, e2e = None, None
        else:
            edges, e2e = mesh.edges()
            ne_ = len(edges)
            parts = [el, nv + e2e]
            coords = [mesh.vertices, mesh.vertices[edges].mean(axis=1)]
            if enriched:
                parts.append((nv + ne_ + np.arange(ne))[:, None])
                coords.append(mesh.centroids())
            element_dofs = np.concatenate(parts, axis=1)
            coords = np.concatenate(coords)
        # boundary facet -> owning element
        local = np.stack([el[:, [1, 2]], el[:, [2, 0]], el[:, [0, 1]]], axis=1)
        key = {tuple(sorted(e)): (i, j) for i, trio in enumerate(local) for j, e in enumerate(trio)}
        owner = [key[tuple(sorted(int(v) for v in f))] for f in mesh.facets]
        facet_elements = np.array([o[0] for o in owner], dtype=int)
        if r == 1:
            facet_dofs = mesh.facets.copy()
        else:
            edge_dof = np.array([element_dofs[i, 3 + j] for i, j in owner], dtype=int)
            facet_dofs = np.concatenate([mesh.facets, edge_dof[:, None]], axis=1)
    mask = np.zeros(len(coords), dtype=bool)
    dir_facets = mesh.facet_tags == int(BoundaryTag.DIRICHLET)
    mask[facet_dofs[dir_facets].ravel()] = True
    return FESpace(mesh, r, ref, element_dofs, coords, facet_dofs, facet_elements, mask)


# geometry helpers -----------------------------------------------------------


def _affine(space: FESpace):
    """Per-element origin (ne, dim), Jacobian (ne, dim, dim) and |det J|."""
    mesh = space.mesh
    p = mesh.vertices[mesh.elements]
    x0 = p[:, 0]
    if mesh.dim == 1:
        J = (p[:, 1] - p[:, 0])[:, :, None]
    else:
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = np.linalg.det(J) if mesh.dim == 2 else J[:, 0, 0]
    return x0, J, np.abs(det)


def _coo_assemble(space: FESpace, local: np.ndarray) -> sp.csr_matrix:
    dofs = space.element_dofs
    nl = dofs.shape[1]
    rows = np.repeat(dofs, nl, axis=1).ravel()
    cols = np.tile(dofs, (1, nl)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.ndof, space.ndof))
    return A.tocsr()


def _symmetrize(local: np.ndarray) -> np.ndarray:
    return 0.5 * (local + local.transpose(0, 2, 1))


def assemble_stiffness(space: FESpace, quad_degree: int | None = None) -> SparseOperator:
    r = space.order + (1 if space.ref.enriched else 0)
    deg = quad_degree if quad_degree is not None else 2 * r
    pts, w = _element_rule(space.dim, deg)
    _, G = space.ref.eval(pts)
    _, J, det = _affine(space)
    invJ = np.linalg.inv(J)
    phys = np.einsum("qid,edk->eqik", G, invJ)
    local = np.einsum("q,e,eqik,eqjk->eij", w, det, phys, phys)
    return SparseOperator(_coo_assemble(space, _symmetrize(local)))


def _element_rule(dim: int, degree: int):
    if dim == 1:
        x, w = gauss_interval(degree // 2 + 1)
        return x[:, None], w
    return gauss_triangle(degree)


def element_coefficient(space: FESpace, coeff) -> np.ndarray:
    """Per-element constant samples of a scalar coefficient (value, array or callable)."""
    ne = space.mesh.n_elements
    if callable(coeff):
        vals = np.asarray(coeff(space.mesh.centroids()), dtype=float)
        return np.broadcast_to(vals, (ne,)).copy()
    return np.broadcast_to(np.asarray(coeff, dtype=float), (ne,)).copy()


def assemble_mass(space: FESpace, coeff=1.0, lumped: bool = False):
    """Consistent mass (SparseOperator) or lumped diagonal (ndarray) with a per-element coefficient."""
    cel = element_coefficient(space, coeff)
    if np.any(cel <= 0):
        raise ValueError("mass coefficient must be positive")
    _, _, det = _affine(space)
    if lumped:
        wts = space.ref.lump_weights
        if wts is None:
            raise ValueError("no positive order-preserving lumping for plain P2 triangles; "
                             "use the bubble-enriched element (enriched=True)")
        d = np.zeros(space.ndof)
        np.add.at(d, space.element_dofs, (cel * det)[:, None] * wts[None, :])
        if np.any(d <= 0):
            raise ValueError("nonpositive lumped mass entry")
        return d
    r = space.order + (1 if space.ref.enriched else 0)
    pts, w = _element_rule(space.dim, 2 * r)
    V, _ = space.ref.eval(pts)
    local = np.einsum("q,e,qi,qj->eij", w, cel * det, V, V)
    return SparseOperator(_coo_assemble(space, _symmetrize(local)))


def _facet_geometry(space: FESpace):
    mesh = space.mesh
    if mesh.dim == 1:
        return np.ones(len(mesh.facets))
    d = mesh.vertices[mesh.facets[:, 1]] - mesh.vertices[mesh.facets[:, 0]]
    return np.hypot(d[:, 0], d[:, 1])


def assemble_boundary_mass(space: FESpace, tag=BoundaryTag.SOMMERFELD, coeff=None) -> np.ndarray:
    """Lumped boundary mass on the facets carrying ``tag`` (trace Gauss-Lobatto weights).

    ``coeff`` is a per-element array (default 1); the facet uses its owner's value.
    """
    sel = np.flatnonzero(space.mesh.facet_tags == int(BoundaryTag.parse(tag)))
    d = np.zeros(space.ndof)
    if len(sel) == 0:
        return d
    cel = np.ones(space.mesh.n_elements) if coeff is None else element_coefficient(space, coeff)
    L = _facet_geometry(space)[sel] * cel[space.facet_elements[sel]]
    if space.dim == 1:
        np.add.at(d, space.facet_dofs[sel, 0], L)
        return d
    w = np.array([0.5, 0.5]) if space.order == 1 else np.array([1 / 6, 1 / 6, 4 / 6])
    np.add.at(d, space.facet_dofs[sel], L[:, None] * w[None, :])
    return d


# problem data -----------------------------------------------------------------


def _call_volume(fn, x: np.ndarray) -> np.ndarray:
    if fn is None:
        return np.zeros(len(x), dtype=complex)
    if callable(fn):
        return np.broadcast_to(np.asarray(fn(x), dtype=complex), (len(x),))
    return np.full(len(x), complex(fn))


def _call_boundary(fn, x: np.ndarray, n: np.ndarray) -> np.ndarray:
    if fn is None:
        return np.zeros(len(x), dtype=complex)
    if callable(fn):
        try:
            out = fn(x, n)
        except TypeError:
            out = fn(x)
        return np.broadcast_to(np.asarray(out, dtype=complex), (len(x),))
    return np.full(len(x), complex(fn))


@dataclass
class HelmholtzProblem:
    """Time-harmonic problem data; volume callables take points (N, dim), boundary
    callables take (points, outward normals).  All data may be complex."""

    mesh: Mesh
    omega: float
    c: object = 1.0
    f: object = None
    g_S: object = None
    g_N: object = None
    g_D: object = None
    exact: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega

    def has(self, tag: BoundaryTag) -> bool:
        return self.mesh.has_tag(tag)

    @property
    def pure_neumann(self) -> bool:
        return not (self.has(BoundaryTag.DIRICHLET) or self.has(BoundaryTag.SOMMERFELD))


@dataclass(frozen=True)
class Loads:
    """Complex load vectors; the real-time load is Re{L e^{-i w t}} = L.re cos + L.im sin."""

    F: np.ndarray
    G_S: np.ndarray
    G_N: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.F + self.G_S + self.G_N


def assemble_time_harmonic_loads(space: FESpace, problem: HelmholtzProblem) -> Loads:
    r = space.order + (1 if space.ref.enriched else 0)
    pts, w = _element_rule(space.dim, 2 * r + 2)
    V, _ = space.ref.eval(pts)
    x0, J, det = _affine(space)
    X = x0[:, None, :] + np.einsum("edk,qk->eqd", J, pts)
    fv = _call_volume(problem.f, X.reshape(-1, space.dim)).reshape(X.shape[:2])
    F = np.zeros(space.ndof, dtype=complex)
    np.add.at(F, space.element_dofs, np.einsum("q,e,eq,qi->ei", w, det, fv, V))
    return Loads(F, _boundary_load(space, problem.g_S, BoundaryTag.SOMMERFELD),
                 _boundary_load(space, problem.g_N, BoundaryTag.NEUMANN))


def _boundary_load(space: FESpace, g, tag: BoundaryTag) -> np.ndarray:
    out = np.zeros(space.ndof, dtype=complex)
    sel = np.flatnonzero(space.mesh.facet_tags == int(tag))
    if g is None or len(sel) == 0:
        return out
    mesh = space.mesh
    normals = facet_normals(mesh)[sel]
    if space.dim == 1:
        x = mesh.vertices[mesh.facets[sel, 0]]
        np.add.at(out, space.facet_dofs[sel, 0], _call_boundary(g, x, normals))
        return out
    t, w = gauss_interval(space.order + 3)
    a = mesh.vertices[mesh.facets[sel, 0]]
    b = mesh.vertices[mesh.facets[sel, 1]]
    L = np.hypot(*(b - a).T)
    X = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    N = np.repeat(normals[:, None, :], len(t), axis=1)
    gv = _call_boundary(g, X.reshape(-1, 2), N.reshape(-1, 2)).reshape(X.shape[:2])
    if space.order == 1:
        phi = np.stack([1 - t, t], axis=1)
    else:
        phi = np.stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)], axis=1)
    np.add.at(out, space.facet_dofs[sel], np.einsum("q,f,fq,qi->fi", w, L, gv, phi))
    return out


def dirichlet_values(space: FESpace, problem: HelmholtzProblem) -> np.ndarray:
    """Complex g_D at the constrained DOFs (zeros elsewhere)."""
    out = np.zeros(space.ndof, dtype=complex)
    idx = space.constrained
    if len(idx) and problem.g_D is not None:
        out[idx] = _call_volume(problem.g_D, space.dof_coords[idx])
    return out


def data_norm(space: FESpace, problem: HelmholtzProblem) -> float:
    """||f||_{L2(Omega)} + ||g_S||_{L2(Gamma_S)} by quadrature."""
    r = space.order + 1
    pts, w = _element_rule(space.dim, 2 * r + 2)
    x0, J, det = _affine(space)
    X = x0[:, None, :] + np.einsum("edk,qk->eqd", J, pts)
    fv = _call_volume(problem.f, X.reshape(-1, space.dim)).reshape(X.shape[:2])
    nf = math.sqrt(float(np.einsum("q,e,eq->", w, det, np.abs(fv) ** 2)))
    mesh = space.mesh
    sel = np.flatnonzero(mesh.facet_tags == int(BoundaryTag.SOMMERFELD))
    ng = 0.0
    if problem.g_S is not None and len(sel):
        normals = facet_normals(mesh)[sel]
        if space.dim == 1:
            gv = _call_boundary(problem.g_S, mesh.vertices[mesh.facets[sel, 0]], normals)
            ng = math.sqrt(float(np.sum(np.abs(gv) ** 2)))
        else:
            t, wt = gauss_interval(r + 3)
            a = mesh.vertices[mesh.facets[sel, 0]]
            b = mesh.vertices[mesh.facets[sel, 1]]
            L = np.hypot(*(b - a).T)
            X = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
            N = np.repeat(normals[:, None, :], len(t), axis=1)
            gv = _call_boundary(problem.g_S, X.reshape(-1, 2), N.reshape(-1, 2)).reshape(X.shape[:2])
            ng = math.sqrt(float(np.einsum("q,f,fq->", wt, L, np.abs(gv) ** 2)))
    return nf + ng


def l2_error(space: FESpace, u: np.ndarray, exact: Callable, quad_degree: int | None = None) -> float:
    """||u_h - exact||_{L2} by over-integration."""
    r = space.order + (1 if space.ref.enriched else 0)
    pts, w = _element_rule(space.dim, quad_degree or 2 * r + 4)
    V, _ = space.ref.eval(pts)
    x0, J, det = _affine(space)
    X = x0[:, None, :] + np.einsum("edk,qk->eqd", J, pts)
    uh = np.einsum("qi,ei->eq", V, u[space.element_dofs])
    ue = _call_volume(exact, X.reshape(-1, space.dim)).reshape(X.shape[:2])
    return math.sqrt(float(np.einsum("q,e,eq->", w, det, np.abs(uh - ue) ** 2)))


def l2_norm(space: FESpace, u: np.ndarray) -> float:
    return l2_error(space, u, lambda x: np.zeros(len(x)))


# assembled system ---------------------------------------------------------------


@dataclass
class AssembledSystem:
    """All discrete operators of the second-order formulation.

    ``M`` is the consistent c^-2 mass, ``M_lumped`` its diagonal lumped version,
    ``B`` the lumped 1/c boundary mass on Gamma_S, ``M1`` the unit mass used
    for L2 norms.
    """

    space: FESpace
    problem: HelmholtzProblem
    c_elem: np.ndarray
    K: SparseOperator
    M: SparseOperator
    M_lumped: np.ndarray | None
    B: np.ndarray
    loads: Loads
    gD: np.ndarray
    M1_lumped: np.ndarray | None = None

    @property
    def omega(self) -> float:
        return self.problem.omega

    @property
    def period(self) -> float:
        return self.problem.period

    def mass_diag_or_none(self, lumped: bool):
        return self.M_lumped if lumped else None


def assemble_system(space: FESpace, problem: HelmholtzProblem) -> AssembledSystem:
    c_elem = element_coefficient(space, problem.c)
    if np.any(c_elem <= 0):
        raise ValueError("wave speed must be positive")
    K = assemble_stiffness(space)
    M = assemble_mass(space, c_elem ** -2.0)
    try:
        ML = assemble_mass(space, c_elem ** -2.0, lumped=True)
    except ValueError:
        ML = None
    B = assemble_boundary_mass(space, BoundaryTag.SOMMERFELD, 1.0 / c_elem)
    loads = assemble_time_harmonic_loads(space, problem)
    gD = dirichlet_values(space, problem)
    return AssembledSystem(space, problem, c_elem, K, M, ML, B, loads, gD)


# velocity rasters -----------------------------------------------------------------


@dataclass(frozen=True)
class VelocityRaster:
    """Cell-centred grid of wave speeds; values[j, i] covers x0 + i dx, y0 + j dy."""

    x0: float
    y0: float
    dx: float
    dy: float
    values: np.ndarray

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        ny, nx = self.values.shape
        i = np.clip(np.floor((pts[:, 0] - self.x0) / self.dx).astype(int), 0, nx - 1)
        j = np.clip(np.floor((pts[:, 1] - self.y0) / self.dy).astype(int), 0, ny - 1)
        return self.values[j, i]


def read_velocity_raster(path) -> VelocityRaster:
    """Read ``nx ny x0 y0 dx dy`` followed by nx*ny speeds (x index fastest)."""
    tokens = Path(path).read_text().split()
    if len(tokens) < 6:
        raise ValueError(f"{path}: raster header 'nx ny x0 y0 dx dy' missing")
    nx, ny = int(tokens[0]), int(tokens[1])
    x0, y0, dx, dy = (float(t) for t in tokens[2:6])
    vals = np.array([float(t) for t in tokens[6:]])
    if vals.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {vals.size}")
    if np.any(vals <= 0):
        raise ValueError(f"{path}: wave speeds must be positive")
    return VelocityRaster(x0, y0, dx, dy, vals.reshape(ny, nx))


def write_velocity_raster(raster: VelocityRaster, path) -> None:
    ny, nx = raster.values.shape
    body = "\n".join(" ".join(f"{v:.10g}" for v in row) for row in raster.values)
    Path(path).write_text(f"{nx} {ny} {raster.x0} {raster.y0} {raster.dx} {raster.dy}\n{body}\n")

"""Conforming 1D interval meshes and structured 2D triangulations with boundary tags.

2D meshes are tensor grids whose lines pass through every obstacle corner; each
quad is split along its (lower-left, upper-right) diagonal.  Cells covered by the
obstacle are dropped, obstacle facets are tagged Dirichlet and the outer box is
tagged Sommerfeld.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class BoundaryTag(enum.IntEnum):
    DIRICHLET = 0
    NEUMANN = 1
    SOMMERFELD = 2

    @classmethod
    def parse(cls, value) -> "BoundaryTag":
        if isinstance(value, BoundaryTag):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().upper()
        aliases = {"D": "DIRICHLET", "N": "NEUMANN", "S": "SOMMERFELD", "IMPEDANCE": "SOMMERFELD"}
        return cls[aliases.get(key, key)]


@dataclass(frozen=True)
class Mesh:
    """Immutable simplicial mesh.

    ``facets`` holds boundary facets as vertex-index tuples (one index in 1D,
    two in 2D) and ``facet_tags`` the matching :class:`BoundaryTag` values.
    """

    dim: int
    vertices: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray

    def __post_init__(self):
        for name in ("vertices", "elements", "facets", "facet_tags"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def boundary_facets(self) -> dict[tuple[int, ...], BoundaryTag]:
        return {tuple(int(i) for i in f): BoundaryTag(int(t)) for f, t in zip(self.facets, self.facet_tags)}

    def tag_measure(self, tag: BoundaryTag) -> float:
        """Length (2D) or point count (1D) of the boundary part carrying ``tag``."""
        sel = self.facet_tags == int(tag)
        if self.dim == 1:
            return float(np.count_nonzero(sel))
        f = self.facets[sel]
        if len(f) == 0:
            return 0.0
        d = self.vertices[f[:, 1]] - self.vertices[f[:, 0]]
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    def has_tag(self, tag: BoundaryTag) -> bool:
        return bool(np.any(self.facet_tags == int(tag)))

    def element_sizes(self) -> np.ndarray:
        if self.dim == 1:
            x = self.vertices[:, 0]
            return np.abs(x[self.elements[:, 1]] - x[self.elements[:, 0]])
        p = self.vertices[self.elements]
        edges = [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]]
        return np.max([np.hypot(e[:, 0], e[:, 1]) for e in edges], axis=0)

    def element_measures(self) -> np.ndarray:
        if self.dim == 1:
            return self.element_sizes()
        p = self.vertices[self.elements]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges (sorted vertex pairs) and the element->edge map.

        The local edge ``j`` of a triangle is opposite to local vertex ``j``.
        """
        if self.dim != 2:
            raise ValueError("edges() is defined for 2D meshes only")
        el = self.elements
        local = np.stack([el[:, [1, 2]], el[:, [2, 0]], el[:, [0, 1]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1, 3)

    def check(self) -> None:
        """Validate orientation, conformity and tag coverage; raises ValueError."""
        if self.dim == 1:
            if np.any(self.element_measures() <= 0):
                raise ValueError("non-positively oriented interval element")
            counts = np.bincount(self.elements.ravel(), minlength=self.n_vertices)
            bnd = np.flatnonzero(counts == 1)
        else:
            if np.any(self.element_measures() <= 0):
                raise ValueError("non-positively oriented triangle")
            edges, e2e = self.edges()
            counts = np.bincount(e2e.ravel(), minlength=len(edges))
            if np.any(counts > 2):
                raise ValueError("non-conforming mesh: edge shared by more than two triangles")
            bnd = {tuple(e) for e in edges[counts == 1]}
        if len(np.unique(self.vertices, axis=0)) != self.n_vertices:
            raise ValueError("duplicate vertices")
        tagged = {tuple(sorted(int(i) for i in f)) for f in self.facets}
        expected = {(int(i),) for i in bnd} if self.dim == 1 else {tuple(int(i) for i in e) for e in bnd}
        if tagged != expected or len(tagged) != len(self.facets):
            raise ValueError("boundary facets are not tagged exactly once")


def generate_interval(n: int, a: float = 0.0, b: float = 1.0,
                      left_tag=BoundaryTag.DIRICHLET, right_tag=BoundaryTag.SOMMERFELD) -> Mesh:
    if int(n) != n or n < 1:
        raise ValueError(f"element count must be a positive integer, got {n!r}")
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    n = int(n)
    # endpoints exact; interior points a + (b-a) i/n
    x = a + (b - a) * (np.arange(n + 1) / n)
    x[-1] = b
    elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    facets = np.array([[0], [n]])
    tags = np.array([int(BoundaryTag.parse(left_tag)), int(BoundaryTag.parse(right_tag))])
    return Mesh(1, x[:, None].copy(), elements, facets, tags)


@dataclass(frozen=True)
class Box:
    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0


@dataclass(frozen=True)
class SquareObstacle:
    center: tuple[float, float]
    size: float


@dataclass(frozen=True)
class CavityObstacle:
    """Square annulus (outer side ``size``, wall ``wall``) with a ``gap`` cut in one side."""

    center: tuple[float, float]
    size: float
    wall: float
    gap: float
    opening: str = "right"


Obstacle = SquareObstacle | CavityObstacle | None


def _obstacle_rects(obstacle) -> list[tuple[float, float, float, float]]:
    """Solid parts of the obstacle as axis-aligned rectangles (x0, y0, x1, y1)."""
    if obstacle is None:
        return []
    cx, cy = obstacle.center
    s = obstacle.size / 2
    if isinstance(obstacle, SquareObstacle):
        return [(cx - s, cy - s, cx + s, cy + s)]
    w, g = obstacle.wall, obstacle.gap
    if not (0 < w < obstacle.size / 2 and 0 < g < obstacle.size - 2 * w):
        raise ValueError("cavity needs 0 < wall < size/2 and 0 < gap < size - 2*wall")
    x0, y0, x1, y1 = cx - s, cy - s, cx + s, cy + s
    # four walls, then the opening side is split around the gap
    walls = {
        "bottom": [(x0, y0, x1, y0 + w)],
        "top": [(x0, y1 - w, x1, y1)],
        "left": [(x0, y0 + w, x0 + w, y1 - w)],
        "right": [(x1 - w, y0 + w, x1, y1 - w)],
    }
    side = obstacle.opening
    if side not in walls:
        raise ValueError(f"unknown cavity opening side {side!r}")
    if side in ("left", "right"):
        (a0, b0, a1, b1), = walls[side]
        mid = (b0 + b1) / 2
        walls[side] = [(a0, b0, a1, mid - g / 2), (a0, mid + g / 2, a1, b1)]
    else:
        (a0, b0, a1, b1), = walls[side]
        mid = (a0 + a1) / 2
        # the corner blocks belong to the side walls in this case
        walls[side] = [(a0, b0, mid - g / 2, b1), (mid + g / 2, b0, a1, b1)]
    return [r for rs in walls.values() for r in rs]


def obstacle_area(obstacle) -> float:
    return sum((r[2] - r[0]) * (r[3] - r[1]) for r in _obstacle_rects(obstacle))


def obstacle_perimeter(obstacle) -> float:
    if obstacle is None:
        return 0.0
    if isinstance(obstacle, SquareObstacle):
        return 4 * obstacle.size
    s, w, g = obstacle.size, obstacle.wall, obstacle.gap
    return 4 * s + 4 * (s - 2 * w) - 2 * g + 2 * w


def _grid_lines(lo: float, hi: float, breaks: list[float], h: float) -> np.ndarray:
    pts = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    lines = [pts[0]]
    for p, q in zip(pts[:-1], pts[1:]):
        m = max(1, math.ceil((q - p) / h - 1e-9))
        lines.extend(p + (q - p) * np.arange(1, m + 1) / m)
        lines[-1] = q
    return np.asarray(lines)


def generate_rect_with_obstacle(box: Box = Box(), obstacle: Obstacle = None, h_target: float = 0.1,
                                outer_tag=BoundaryTag.SOMMERFELD,
                                obstacle_tag=BoundaryTag.DIRICHLET) -> Mesh:
    if h_target <= 0:
        raise ValueError("h_target must be positive")
    rects = _obstacle_rects(obstacle)
    eps = 1e-12 * max(box.x1 - box.x0, box.y1 - box.y0)
    for r in rects:
        if r[0] <= box.x0 + eps or r[1] <= box.y0 + eps or r[2] >= box.x1 - eps or r[3] >= box.y1 - eps:
            raise ValueError(f"obstacle part {r} touches or crosses the outer boundary {box}")
    xs = _grid_lines(box.x0, box.x1, [v for r in rects for v in (r[0], r[2])], h_target)
    ys = _grid_lines(box.y0, box.y1, [v for r in rects for v in (r[1], r[3])], h_target)
    nx, ny = len(xs) - 1, len(ys) - 1
    xc = 0.5 * (xs[:-1] + xs[1:])
    yc = 0.5 * (ys[:-1] + ys[1:])
    XC, YC = np.meshgrid(xc, yc, indexing="ij")
    solid = np.zeros((nx, ny), dtype=bool)
    for r in rects:
        solid |= (XC > r[0]) & (XC < r[2]) & (YC > r[1]) & (YC < r[3])

    vid = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    I, Jg = np.nonzero(~solid)
    v00, v10 = vid[I, Jg], vid[I + 1, Jg]
    v01, v11 = vid[I, Jg + 1], vid[I + 1, Jg + 1]
    tris = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    # interleave so the two halves of a quad are adjacent
    tris = tris.reshape(2, -1, 3).transpose(1, 0, 2).reshape(-1, 3)

    X, Y = np.meshgrid(xs, ys, indexing="ij")
    allv = np.stack([X.ravel(), Y.ravel()], axis=1)
    used = np.unique(tris)
    remap = -np.ones(len(allv), dtype=int)
    remap[used] = np.arange(len(used))
    vertices = allv[used]
    elements = remap[tris]

    local = np.stack([elements[:, [1, 2]], elements[:, [2, 0]], elements[:, [0, 1]]], axis=1).reshape(-1, 2)
    key = np.sort(local, axis=1)
    uniq, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    bmask = cnt[inv] == 1
    facets = local[bmask]  # keeps the element's counter-clockwise orientation
    mid = vertices[facets].mean(axis=1)
    on_outer = ((np.abs(mid[:, 0] - box.x0) < eps) | (np.abs(mid[:, 0] - box.x1) < eps)
                | (np.abs(mid[:, 1] - box.y0) < eps) | (np.abs(mid[:, 1] - box.y1) < eps))
    tags = np.where(on_outer, int(BoundaryTag.parse(outer_tag)), int(BoundaryTag.parse(obstacle_tag)))
    return Mesh(2, vertices, elements, facets, tags)


def facet_normals(mesh: Mesh) -> np.ndarray:
    """Outward unit normals of the boundary facets."""
    if mesh.dim == 1:
        x = mesh.vertices[:, 0]
        return np.where(x[mesh.facets[:, 0]] <= x.min(), -1.0, 1.0)[:, None]
    d = mesh.vertices[mesh.facets[:, 1]] - mesh.vertices[mesh.facets[:, 0]]
    # facets are oriented counter-clockwise w.r.t. their element: outward = (dy, -dx)
    n = np.stack([d[:, 1], -d[:, 0]], axis=1)
    return n / np.hypot(n[:, 0], n[:, 1])[:, None]


def euler_characteristic(mesh: Mesh) -> int:
    edges, _ = mesh.edges()
    return mesh.n_vertices - len(edges) + mesh.n_elements


# plain-text format --------------------------------------------------------

def write_mesh(mesh: Mesh, path) -> None:
    lines = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_elements} {len(mesh.facets)}"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in e) for e in mesh.elements]
    lines += [" ".join(str(int(i)) for i in f) + f" {BoundaryTag(int(t)).name}"
              for f, t in zip(mesh.facets, mesh.facet_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    """Read the whitespace-separated ``dim nv ne nbf`` format written by :func:`write_mesh`."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        dim, nv, ne, nbf = (int(v) for v in rows[0])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: bad header, expected 'dim nv ne nbf'") from exc
    if dim not in (1, 2):
        raise ValueError(f"{path}: dim must be 1 or 2")
    if len(rows) != 1 + nv + ne + nbf:
        raise ValueError(f"{path}: expected {1 + nv + ne + nbf} records, found {len(rows)}")
    verts = np.array([[float(v) for v in r] for r in rows[1:1 + nv]])
    elems = np.array([[int(v) for v in r] for r in rows[1 + nv:1 + nv + ne]])
    frows = rows[1 + nv + ne:]
    facets = np.array([[int(v) for v in r[:-1]] for r in frows]).reshape(nbf, dim)
    tags = np.array([int(BoundaryTag.parse(r[-1] if not r[-1].isdigit() else int(r[-1]))) for r in frows])
    mesh = Mesh(dim, verts.reshape(nv, dim), elems, facets, tags)
    mesh.check()
    return mesh

"""Problem presets: 1D manufactured solutions and 2D plane-wave scattering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import HelmholtzProblem, VelocityRaster
from .mesh import Box, BoundaryTag, CavityObstacle, SquareObstacle, generate_interval, generate_rect_with_obstacle


def sound_soft_1d(n: int, k: float = 5 * np.pi / 4) -> HelmholtzProblem:
    """u = -e^{ikx} on (0, 1), u(0) = -1, impedance condition at x = 1."""
    mesh = generate_interval(n, 0.0, 1.0, BoundaryTag.DIRICHLET, BoundaryTag.SOMMERFELD)
    return HelmholtzProblem(mesh, k, g_D=-1.0, exact=lambda x: -np.exp(1j * k * x[:, 0]), name="sound_soft_1d")


def semidiscrete_1d(n: int, k: float = 6 * np.pi) -> HelmholtzProblem:
    """u = e^{ikx} on (0, 1), u(0) = 1, impedance condition at x = 1."""
    mesh = generate_interval(n, 0.0, 1.0, BoundaryTag.DIRICHLET, BoundaryTag.SOMMERFELD)
    return HelmholtzProblem(mesh, k, g_D=1.0, exact=lambda x: np.exp(1j * k * x[:, 0]), name="semidiscrete_1d")


def neumann_1d(n: int, k: float = np.pi / 4) -> HelmholtzProblem:
    """u = 16 x^2 (x - 1)^2 with homogeneous Neumann data at both ends."""

    def u(x):
        x = x[:, 0]
        return 16 * x ** 2 * (x - 1) ** 2

    def f(x):
        xx = x[:, 0]
        return -16 * (12 * xx ** 2 - 12 * xx + 2) - k ** 2 * u(x)

    mesh = generate_interval(n, 0.0, 1.0, BoundaryTag.NEUMANN, BoundaryTag.NEUMANN)
    return HelmholtzProblem(mesh, k, f=f, exact=u, name="neumann_1d")


def sound_hard_1d(n: int, k: float = 5 * np.pi / 4) -> HelmholtzProblem:
    """u = e^{ikx}: Neumann data -u'(0) = -ik at x = 0, impedance condition at x = 1."""
    mesh = generate_interval(n, 0.0, 1.0, BoundaryTag.NEUMANN, BoundaryTag.SOMMERFELD)
    return HelmholtzProblem(mesh, k, g_N=-1j * k, exact=lambda x: np.exp(1j * k * x[:, 0]), name="sound_hard_1d")


def plane_wave(k: float, theta_deg: float):
    d = np.array([np.cos(np.radians(theta_deg)), np.sin(np.radians(theta_deg))])

    def u_in(x):
        return np.exp(1j * k * (x @ d))

    def g_S(x, n):
        # g_S = -(d_n - ik) u_in; on an empty box the computed field is -u_in
        return -(1j * k * (n @ d) - 1j * k) * u_in(x)

    return u_in, g_S


@dataclass
class ScatteringSpec:
    box: float = 5.0
    obstacle: str = "square"       # "none", "square" or "cavity"
    size: float = 1.0
    wall: float = 0.2
    gap: float = 0.5
    opening: str = "right"
    h: float = 1.0 / 15
    k: float = 2 * np.pi
    theta_deg: float = 135.0
    center: tuple = field(default=None)

    def build(self) -> HelmholtzProblem:
        box = Box(0.0, 0.0, self.box, self.box)
        c = self.center or (self.box / 2, self.box / 2)
        if self.obstacle == "none":
            obst = None
        elif self.obstacle == "square":
            obst = SquareObstacle(c, self.size)
        elif self.obstacle == "cavity":
            obst = CavityObstacle(c, self.size, self.wall, self.gap, self.opening)
        else:
            raise ValueError(f"unknown obstacle {self.obstacle!r}")
        mesh = generate_rect_with_obstacle(box, obst, self.h)
        _, g_S = plane_wave(self.k, self.theta_deg)
        return HelmholtzProblem(mesh, self.k, g_S=g_S, g_D=0.0, name=f"plane_wave_{self.obstacle}")


def marmousi_like(raster: VelocityRaster, frequency: float, h: float, source=(0.5, 0.9),
                  width: float = 0.05) -> HelmholtzProblem:
    """Heterogeneous medium on the raster extent, all-absorbing boundary, Gaussian point-like source."""
    ny, nx = raster.values.shape
    box = Box(raster.x0, raster.y0, raster.x0 + nx * raster.dx, raster.y0 + ny * raster.dy)
    mesh = generate_rect_with_obstacle(box, None, h)
    sx = box.x0 + source[0] * (box.x1 - box.x0)
    sy = box.y0 + source[1] * (box.y1 - box.y0)

    def f(x):
        r2 = (x[:, 0] - sx) ** 2 + (x[:, 1] - sy) ** 2
        return np.exp(-r2 / (2 * width ** 2)) / (2 * np.pi * width ** 2)

    return HelmholtzProblem(mesh, 2 * np.pi * frequency, c=raster, f=f, name="marmousi_like")


def synthetic_layered_raster(nx: int = 60, ny: int = 30, width: float = 2.0, depth: float = 1.0,
                             seed: int = 0) -> VelocityRaster:
    """Layered velocity model with a dipping interface and mild random texture (speeds 1.5 to 3.5)."""
    rng = np.random.default_rng(seed)
    xs = (np.arange(nx) + 0.5) / nx
    ys = (np.arange(ny) + 0.5) / ny
    X, Y = np.meshgrid(xs, ys)
    depth_frac = 1.0 - Y
    v = 1.5 + 2.0 * depth_frac + 0.4 * np.tanh(20 * (depth_frac - 0.5 - 0.2 * (X - 0.5)))
    v += 0.05 * rng.standard_normal(v.shape)
    v = np.clip(v, 1.5, 3.5)
    return VelocityRaster(0.0, 0.0, width / nx, depth / ny, v)

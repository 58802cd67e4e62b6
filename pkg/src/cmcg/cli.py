"""Scenario runner: one TOML file in, CSV (and optionally VTK) artifacts out.

    cmcg solve --config configs/sound_soft_1d.toml --out out/
    cmcg converge --config configs/converge_p2.toml

The configuration has the sections [domain], [physics], [discretization],
[solver] and [output]; unknown keys and ill-typed values are rejected with the
line and column of the offending entry.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import re
import sys
import time
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
from numpy.polynomial import legendre as npleg

from . import scenarios
from .controllability import (CmcgOptions, cmcg_solve, cmcg_solve_mixed, do_nothing_solve, prepare,
                              soundhard_solution, write_history)
from .fem import (BoundaryTag, HelmholtzProblem, assemble_system, build_space, l2_error, l2_norm,
                  read_velocity_raster)
from .hdg1d import _ortho_scale
from .helmholtz_ref import assemble_helmholtz, direct_solve, helmholtz_residual, resonance_check
from .linalg import set_threads
from .timestepping import Stepper, write_vtk

log = logging.getLogger("cmcg")

SOLUTION_VERSION = "# cmcg-solution v1"
ORDERS_VERSION = "# cmcg-orders v1"
COMPARE_VERSION = "# cmcg-compare v1"
RUNUP_VERSION = "# cmcg-runup v1"

PROBLEMS_1D = {
    "sound_soft_1d": scenarios.sound_soft_1d,
    "semidiscrete_1d": scenarios.semidiscrete_1d,
    "neumann_1d": scenarios.neumann_1d,
    "sound_hard_1d": scenarios.sound_hard_1d,
}
PROBLEMS_2D = ("plane_wave", "marmousi_like")


class ConfigError(Exception):
    pass


# schema -------------------------------------------------------------------------------


@dataclass
class DomainConfig:
    n: int = 16                    # 1D: number of elements
    box: float = 5.0               # 2D: side of the square box
    obstacle: str = "none"         # none | square | cavity
    size: float = 1.0
    wall: float = 0.2
    gap: float = 0.5
    opening: str = "right"
    center: list[float] | None = None
    h: float = 1.0 / 15
    raster: str | None = None      # velocity raster file for marmousi_like (synthetic if absent)


@dataclass
class PhysicsConfig:
    problem: str = "sound_soft_1d"
    k: float | None = None         # overrides the preset wavenumber
    theta_deg: float = 135.0
    frequency: float = 2.0
    source: list[float] = field(default_factory=lambda: [0.5, 0.9])
    source_width: float = 0.05


@dataclass
class DiscretizationConfig:
    path: str = "second"           # second (continuous FE) | first (HDG, 1D)
    order: int = 2
    scheme: str = "rk4"
    lumped: bool = True
    steps_per_period: int | None = None
    dt: float | None = None
    cfl_safety: float | None = None
    post_process: bool = False
    mass_coeff: str = "c-2"
    sweep: str = "h"               # converge: h | dt
    levels: list[int] = field(default_factory=lambda: [3, 4, 5, 6])
    dt_halvings: int = 4


@dataclass
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 500
    stop_on: str = "cg"
    runup_ell: int = 0
    filter: bool = True
    compute_H: bool = False
    riesz: str = "auto"
    runup_values: list[int] = field(default_factory=lambda: [0, 2, 5, 10, 20])
    donothing_periods: int | None = None


@dataclass
class OutputConfig:
    dir: str = "out"
    vtk: bool = False
    timing: bool = True            # false writes wall_time_s = 0 for bitwise-reproducible histories


@dataclass
class Config:
    domain: DomainConfig = field(default_factory=DomainConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    source: str = "<memory>"

    def options(self) -> CmcgOptions:
        d, s = self.discretization, self.solver
        return CmcgOptions(order=d.order, scheme=d.scheme, lumped=d.lumped, tol=s.tol, max_iter=s.max_iter,
                           runup_ell=s.runup_ell, filter=s.filter, stop_on=s.stop_on, compute_H=s.compute_H,
                           steps_per_period=d.steps_per_period, dt=d.dt, cfl_safety=d.cfl_safety,
                           riesz=s.riesz)


SECTIONS = {f.name: f.type for f in dataclasses.fields(Config) if f.name != "source"}
CHOICES = {
    ("domain", "obstacle"): ("none", "square", "cavity"),
    ("domain", "opening"): ("left", "right", "top", "bottom"),
    ("physics", "problem"): tuple(PROBLEMS_1D) + PROBLEMS_2D,
    ("discretization", "path"): ("second", "first"),
    ("discretization", "scheme"): ("leapfrog", "rk4"),
    ("discretization", "mass_coeff"): ("c-1", "c-2"),
    ("discretization", "sweep"): ("h", "dt"),
    ("solver", "stop_on"): ("cg", "misfit"),
    ("solver", "riesz"): ("auto", "pcg", "direct"),
}


def _locate(text: str, section: str, key: str | None = None) -> tuple[int, int]:
    """1-based (line, column) of ``key`` inside ``[section]``, or of the header."""
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[\s*([A-Za-z0-9_\-]+)\s*\]", line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return i, m.start(1) + 1
            continue
        if key is not None and current == section:
            m = re.match(r"\s*(\"?)" + re.escape(key) + r"\1\s*=", line)
            if m:
                return i, len(line) - len(line.lstrip()) + 1
    return 0, 0


def _where(cfg_path: str, text: str, section: str, key: str | None = None) -> str:
    line, col = _locate(text, section, key)
    return f"{cfg_path}:{line}:{col}" if line else cfg_path


def _check_value(value, tp, name: str):
    """Validate ``value`` against a (possibly optional or list) annotation; returns the coerced value."""
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        inner = [a for a in args if a is not type(None)]
        return _check_value(value, inner[0], name)
    if origin is list:
        if not isinstance(value, list):
            raise TypeError(f"{name} must be a list")
        return [_check_value(v, args[0], name + "[]") for v in value]
    if tp is bool:
        if not isinstance(value, bool):
            raise TypeError(f"{name} must be true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"{name} must be an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{name} must be a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise TypeError(f"{name} must be a string")
        return value
    raise TypeError(f"unsupported type for {name}")


def parse_config(text: str, cfg_path: str = "<string>") -> Config:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"\(at line (\d+), column (\d+)\)", msg)
        if m:
            msg = msg[: m.start()].rstrip()
            raise ConfigError(f"{cfg_path}:{m.group(1)}:{m.group(2)}: malformed TOML: {msg}") from None
        raise ConfigError(f"{cfg_path}: malformed TOML: {msg}") from None
    hints = typing.get_type_hints(Config)
    sections = {}
    for name, body in raw.items():
        if name not in SECTIONS:
            raise ConfigError(f"{_where(cfg_path, text, name)}: unknown section [{name}]; "
                              f"expected one of {sorted(SECTIONS)}")
        if not isinstance(body, dict):
            raise ConfigError(f"{cfg_path}: '{name}' must be a table")
        cls = hints[name]
        fhints = typing.get_type_hints(cls)
        kwargs = {}
        for key, value in body.items():
            loc = _where(cfg_path, text, name, key)
            if key not in fhints:
                raise ConfigError(f"{loc}: unknown key '{key}' in [{name}]; allowed: {sorted(fhints)}")
            try:
                value = _check_value(value, fhints[key], f"{name}.{key}")
            except TypeError as exc:
                raise ConfigError(f"{loc}: {exc}") from None
            choices = CHOICES.get((name, key))
            if choices is not None and value not in choices:
                raise ConfigError(f"{loc}: {name}.{key} = {value!r} is not one of {list(choices)}")
            kwargs[key] = value
        try:
            sections[name] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{_where(cfg_path, text, name)}: {exc}") from None
    cfg = Config(**sections, source=cfg_path)
    _validate(cfg, text)
    return cfg


def _validate(cfg: Config, text: str) -> None:
    p = cfg.source
    d, s, dom = cfg.discretization, cfg.solver, cfg.domain
    if d.path == "second" and d.order not in (1, 2, 3):
        raise ConfigError(f"{_where(p, text, 'discretization', 'order')}: order must be 1, 2 or 3")
    if d.path == "first" and d.order not in (1, 2, 3):
        raise ConfigError(f"{_where(p, text, 'discretization', 'order')}: HDG order must be 1, 2 or 3")
    if d.path == "first" and cfg.physics.problem in PROBLEMS_2D:
        raise ConfigError(f"{_where(p, text, 'discretization', 'path')}: the first-order path is 1D only")
    if s.tol <= 0:
        raise ConfigError(f"{_where(p, text, 'solver', 'tol')}: tol must be positive")
    if s.max_iter < 1:
        raise ConfigError(f"{_where(p, text, 'solver', 'max_iter')}: max_iter must be >= 1")
    if s.runup_ell < 0 or any(v < 0 for v in s.runup_values):
        raise ConfigError(f"{_where(p, text, 'solver', 'runup_ell')}: run-up lengths must be >= 0")
    if dom.n < 1:
        raise ConfigError(f"{_where(p, text, 'domain', 'n')}: n must be >= 1")
    if dom.h <= 0:
        raise ConfigError(f"{_where(p, text, 'domain', 'h')}: h must be positive")
    if cfg.physics.k is not None and cfg.physics.k <= 0:
        raise ConfigError(f"{_where(p, text, 'physics', 'k')}: k must be positive")
    if d.cfl_safety is not None and not 0 < d.cfl_safety <= 1:
        raise ConfigError(f"{_where(p, text, 'discretization', 'cfl_safety')}: cfl_safety must lie in (0, 1]")


def load_config(path) -> tuple[Config, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path)), text


# problem construction ------------------------------------------------------------------


def build_problem(cfg: Config, text: str = "", n: int | None = None) -> HelmholtzProblem:
    ph, dom = cfg.physics, cfg.domain
    try:
        if ph.problem in PROBLEMS_1D:
            kw = {} if ph.k is None else {"k": ph.k}
            return PROBLEMS_1D[ph.problem](n or dom.n, **kw)
        if ph.problem == "plane_wave":
            spec = scenarios.ScatteringSpec(box=dom.box, obstacle=dom.obstacle, size=dom.size, wall=dom.wall,
                                            gap=dom.gap, opening=dom.opening, h=dom.h,
                                            k=ph.k if ph.k is not None else 2 * math.pi, theta_deg=ph.theta_deg,
                                            center=tuple(dom.center) if dom.center else None)
            return spec.build()
        raster = (read_velocity_raster(dom.raster) if dom.raster
                  else scenarios.synthetic_layered_raster())
        return scenarios.marmousi_like(raster, ph.frequency, dom.h, tuple(ph.source), ph.source_width)
    except ValueError as exc:
        raise ConfigError(f"{_where(cfg.source, text, 'domain')}: infeasible geometry: {exc}") from None


def _sound_hard(system) -> bool:
    mesh = system.space.mesh
    return not mesh.has_tag(BoundaryTag.DIRICHLET) and mesh.has_tag(BoundaryTag.SOMMERFELD)


def _warn_resonance(system) -> None:
    mesh = system.space.mesh
    if mesh.has_tag(BoundaryTag.SOMMERFELD):
        return
    near = resonance_check(system)
    if near is not None:
        log.warning("omega^2 = %.6g lies within 1%% of the discrete eigenvalue %.6g; the Helmholtz problem "
                    "is close to resonance", system.omega ** 2, near)


# artifacts ---------------------------------------------------------------------------


def write_solution(path, coords: np.ndarray, u: np.ndarray) -> None:
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if coords.shape[0] != len(u):
        coords = coords.T
    names = ["x", "y", "z"][: coords.shape[1]]
    with open(path, "w", newline="") as fh:
        fh.write(SOLUTION_VERSION + "\n")
        w = csv.writer(fh)
        w.writerow(names + ["re_u", "im_u"])
        for c, val in zip(coords, u):
            w.writerow([f"{x:.16e}" for x in c] + [f"{val.real:.16e}", f"{val.imag:.16e}"])


def _hdg_samples(field_) -> tuple[np.ndarray, np.ndarray]:
    nb = field_.coeffs.shape[1]
    t = np.linspace(0.0, 1.0, nb + 1)
    x = (field_.x_left[:, None] + field_.h[:, None] * t[None, :]).ravel()
    # evaluate inside each element so duplicated interface points keep their element
    e = np.repeat(np.arange(len(field_.h)), len(t))
    xi = np.tile(2 * t - 1, len(field_.h))
    V = npleg.legvander(xi, nb - 1) * _ortho_scale(nb)
    return x, np.sum(field_.coeffs[e] * V, axis=1)


def _history_for_output(history, timing: bool):
    if timing:
        return history
    return [dataclasses.replace(r, wall_time_s=0.0) for r in history]


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


# subcommands -----------------------------------------------------------------------------


def cmd_solve(cfg: Config, text: str, out: Path, args) -> int:
    problem = build_problem(cfg, text)
    opts = cfg.options()
    d = cfg.discretization
    if d.path == "first":
        res = cmcg_solve_mixed(problem, opts, post_process=d.post_process, mass_coeff=d.mass_coeff)
        write_history(_history_for_output(res.history, cfg.output.timing), out / "history.csv")
        x, u = _hdg_samples(res.u)
        write_solution(out / "solution.csv", x, u)
        err = res.u.l2_error(problem.exact) if problem.exact is not None else None
    else:
        system, stepper = prepare(problem, opts)
        _warn_resonance(system)
        res = cmcg_solve(problem, opts, system, stepper)
        u = res.u
        if not opts.filter and _sound_hard(system):
            # the filter removes constants; without it subtract the shift explicitly
            u = soundhard_solution(res).u
        write_history(_history_for_output(res.history, cfg.output.timing), out / "history.csv")
        write_solution(out / "solution.csv", system.space.dof_coords, u)
        if cfg.output.vtk:
            vv = system.space.vertex_values(u)
            write_vtk(problem.mesh, {"re_u": vv.real, "im_u": vv.imag, "abs_u": np.abs(vv)}, out / "solution.vtk")
        err = None
        if problem.exact is not None:
            err = l2_error(system.space, u, problem.exact)
    last = res.history[-1]
    _say(args, f"cmcg: {res.iterations} iterations, converged={res.converged}, "
               f"residual_cg={last.residual_cg:.3e}, misfit={last.misfit_J:.3e}, periods={last.cumulative_wave_periods}"
               + (f", L2 error={err:.3e}" if err is not None else ""))
    return 0 if res.converged else 3


def cmd_direct(cfg: Config, text: str, out: Path, args) -> int:
    problem = build_problem(cfg, text)
    opts = cfg.options()
    enriched = problem.mesh.dim == 2 and opts.order == 2 and opts.lumped
    system = assemble_system(build_space(problem.mesh, opts.order, enriched=enriched), problem)
    _warn_resonance(system)
    hs = assemble_helmholtz(system, lumped=opts.lumped)
    u = direct_solve(hs)
    res = helmholtz_residual(hs, u)
    write_solution(out / "solution.csv", system.space.dof_coords, u)
    if cfg.output.vtk:
        vv = system.space.vertex_values(u)
        write_vtk(problem.mesh, {"re_u": vv.real, "im_u": vv.imag, "abs_u": np.abs(vv)}, out / "solution.vtk")
    msg = f"direct: {len(hs.free)} unknowns, relative residual {res:.3e}"
    if problem.exact is not None:
        msg += f", L2 error={l2_error(system.space, u, problem.exact):.3e}"
    _say(args, msg)
    return 0


def fitted_slope(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    ok = err > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)[0])


def write_orders(path, rows: list[dict], slope: float) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(ORDERS_VERSION + "\n")
        fh.write(f"# fitted_slope = {slope:.6f}\n")
        w = csv.writer(fh)
        w.writerow(["h", "dt", "error", "slope"])
        for r in rows:
            w.writerow([f"{r['h']:.10e}", f"{r['dt']:.10e}", f"{r['error']:.10e}",
                        "" if r["slope"] is None else f"{r['slope']:.6f}"])


def cmd_converge(cfg: Config, text: str, out: Path, args) -> int:
    d = cfg.discretization
    opts = cfg.options()
    rows = []
    if d.sweep == "h":
        for lev in d.levels:
            n = 2 ** lev
            problem = build_problem(cfg, text, n=n)
            if problem.mesh.dim != 1:
                raise ConfigError(f"{_where(cfg.source, text, 'discretization', 'sweep')}: "
                                  "h sweeps are defined for the 1D presets")
            if problem.exact is None:
                raise ConfigError(f"{cfg.source}: problem {cfg.physics.problem} has no exact solution")
            if d.path == "first":
                res = cmcg_solve_mixed(problem, opts, post_process=d.post_process, mass_coeff=d.mass_coeff)
                err, dt = res.u.l2_error(problem.exact), res.system.dt
            else:
                res = cmcg_solve(problem, opts)
                u = res.u
                if not opts.filter and _sound_hard(res.system):
                    u = soundhard_solution(res).u
                err, dt = l2_error(res.system.space, u, problem.exact), res.stepper.dt
            rows.append({"h": 1.0 / n, "dt": dt, "error": err})
            _say(args, f"h = 2^-{lev}: error {err:.4e} ({res.iterations} iterations)")
        xs = [r["h"] for r in rows]
    else:
        if d.path != "second":
            raise ConfigError(f"{_where(cfg.source, text, 'discretization', 'sweep')}: "
                              "dt sweeps use the second-order path")
        problem = build_problem(cfg, text)
        system, stepper0 = prepare(problem, opts)
        u_ref = direct_solve(assemble_helmholtz(system, lumped=opts.lumped))
        for j in range(d.dt_halvings + 1):
            st = Stepper(system, opts.scheme, lumped=opts.lumped, steps_per_period=stepper0.n_T * 2 ** j,
                         cfl_safety=opts.cfl_safety)
            res = cmcg_solve(problem, opts, system, st)
            err = l2_norm(system.space, res.u - u_ref)
            rows.append({"h": float(problem.mesh.element_sizes().max()), "dt": st.dt, "error": err})
            _say(args, f"dt = {st.dt:.4e}: ||u_cmcg - u_direct|| = {err:.4e}")
        xs = [r["dt"] for r in rows]
    prev = None
    for x, r in zip(xs, rows):
        r["slope"] = None if prev is None else math.log(r["error"] / prev[1]) / math.log(x / prev[0])
        prev = (x, r["error"])
    slope = fitted_slope(xs, [r["error"] for r in rows])
    write_orders(out / "orders.csv", rows, slope)
    _say(args, f"fitted slope {slope:.3f}")
    return 0


def cmd_compare(cfg: Config, text: str, out: Path, args) -> int:
    problem = build_problem(cfg, text)
    opts = cfg.options()
    system, stepper = prepare(problem, opts)
    _warn_resonance(system)
    res = cmcg_solve(problem, opts, system, stepper)
    write_history(_history_for_output(res.history, cfg.output.timing), out / "history.csv")
    u_ref = direct_solve(assemble_helmholtz(system, lumped=opts.lumped))
    ref_norm = l2_norm(system.space, u_ref)
    n_dn = cfg.solver.donothing_periods or res.total_periods
    dn = do_nothing_solve(system, stepper, n_dn)
    rows = [("cmcg", res.history[-1].misfit_J, l2_norm(system.space, res.u - u_ref) / ref_norm, res.total_periods),
            ("do_nothing", dn.misfit[-1], l2_norm(system.space, dn.w_h - u_ref) / ref_norm, n_dn),
            ("direct", 0.0, 0.0, 0)]
    with open(out / "compare.csv", "w", newline="") as fh:
        fh.write(COMPARE_VERSION + "\n")
        w = csv.writer(fh)
        w.writerow(["method", "misfit_J", "rel_l2_to_direct", "wave_periods"])
        for r in rows:
            w.writerow([r[0], f"{r[1]:.10e}", f"{r[2]:.10e}", r[3]])
    with open(out / "donothing.csv", "w", newline="") as fh:
        fh.write("# cmcg-donothing v1\n")
        w = csv.writer(fh)
        w.writerow(["period", "misfit_J"])
        for l, m in enumerate(dn.misfit):
            w.writerow([l, f"{m:.10e}"])
    for r in rows[:2]:
        _say(args, f"{r[0]:>10}: misfit {r[1]:.3e}, relative L2 distance to direct {r[2]:.3e}, periods {r[3]}")
    return 0


def cmd_runup(cfg: Config, text: str, out: Path, args) -> int:
    problem = build_problem(cfg, text)
    base = cfg.options()
    system, stepper = prepare(problem, base)
    rows = []
    for ell in cfg.solver.runup_values:
        opts = dataclasses.replace(base, runup_ell=ell)
        res = cmcg_solve(problem, opts, system, stepper)
        rows.append((ell, res.iterations, res.total_periods, res.converged, res.history[0].misfit_J,
                     res.history[-1].misfit_J))
        _say(args, f"ell = {ell:3d}: {res.iterations} iterations, {res.total_periods} periods")
    with open(out / "runup.csv", "w", newline="") as fh:
        fh.write(RUNUP_VERSION + "\n")
        w = csv.writer(fh)
        w.writerow(["ell", "iterations", "total_periods", "converged", "initial_misfit", "final_misfit"])
        for r in rows:
            w.writerow([r[0], r[1], r[2], int(r[3]), f"{r[4]:.10e}", f"{r[5]:.10e}"])
    best = min(rows, key=lambda r: r[2])
    _say(args, f"fewest periods at ell = {best[0]} ({best[2]})")
    return 0


COMMANDS = {"solve": cmd_solve, "direct": cmd_direct, "converge": cmd_converge, "compare": cmd_compare,
            "runup-study": cmd_runup}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmcg", description="Helmholtz solutions by controllability of the wave equation")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="TOML scenario file")
    ap.add_argument("--threads", type=int, default=1, help="row blocks for sparse products (default 1)")
    ap.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    ap.add_argument("--quiet", action="store_true", help="only warnings and errors")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    set_threads(args.threads)
    try:
        cfg, text = load_config(args.config)
        out = Path(args.out or cfg.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        code = COMMANDS[args.command](cfg, text, out, args)
        _say(args, f"{args.command} finished in {time.perf_counter() - t0:.1f} s; artifacts in {out}")
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

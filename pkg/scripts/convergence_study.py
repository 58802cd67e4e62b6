"""Mesh sweeps on the 1D sound-soft problem: continuous P2/P3 and HDG r=2 with and without post-processing."""

import argparse
from pathlib import Path

from cmcg.cli import fitted_slope
from cmcg.controllability import CmcgOptions, cmcg_solve, cmcg_solve_mixed
from cmcg.fem import l2_error
from cmcg.scenarios import sound_soft_1d

METHODS = {
    "P2": dict(path="second", order=2, cfl_safety=None),
    "P3": dict(path="second", order=3, cfl_safety=0.35),
    "HDG2": dict(path="first", order=2, cfl_safety=None, post=False),
    "HDG2+post": dict(path="first", order=2, cfl_safety=0.2, post=True),
}


def error_at(n, m):
    p = sound_soft_1d(n)
    opts = CmcgOptions(order=m["order"], tol=1e-12, cfl_safety=m["cfl_safety"])
    if m["path"] == "first":
        res = cmcg_solve_mixed(p, opts, post_process=m["post"])
        return res.u.l2_error(p.exact)
    res = cmcg_solve(p, opts)
    return l2_error(res.system.space, res.u, p.exact)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, nargs="+", default=[3, 4, 5, 6])
    ap.add_argument("--out", default="out/convergence")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hs = [2.0 ** -l for l in args.levels]
    with open(out / "errors.csv", "w") as fh:
        fh.write("method,h,error\n")
        for name, m in METHODS.items():
            errs = [error_at(2 ** l, m) for l in args.levels]
            for h, e in zip(hs, errs):
                fh.write(f"{name},{h:.6e},{e:.6e}\n")
            print(f"{name:10s} slope {fitted_slope(hs, errs):.3f}  errors " + " ".join(f"{e:.2e}" for e in errs))


if __name__ == "__main__":
    main()

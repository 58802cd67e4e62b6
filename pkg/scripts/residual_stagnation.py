"""CG residual and consistent-mass Helmholtz residual along a lumped-mass CMCG run (square obstacle)."""

import argparse
import dataclasses
from pathlib import Path

from cmcg.cli import build_problem, load_config
from cmcg.controllability import cmcg_solve, write_history

HERE = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=0.1)
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("--out", default="out/residual_H")
    args = ap.parse_args()
    cfg, _ = load_config(HERE / "configs" / "square.toml")
    cfg.domain.h = args.h
    opts = dataclasses.replace(cfg.options(), tol=args.tol, stop_on="cg", compute_H=True)
    res = cmcg_solve(build_problem(cfg), opts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_history(res.history, out / "history.csv")
    for r in res.history[:: max(1, len(res.history) // 15)] + [res.history[-1]]:
        print(f"{r.iter:5d}  cg {r.residual_cg:.3e}  H {r.residual_H:.4e}")


if __name__ == "__main__":
    main()

"""Distance between CMCG and the direct solve with the same mass lumping as dt is halved on a fixed mesh."""

import argparse
from pathlib import Path

from cmcg.cli import main as cli

HERE = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/semidiscrete")
    args = ap.parse_args()
    for name in ("semidiscrete_dt.toml", "semidiscrete_dt_leapfrog.toml"):
        code = cli(["converge", "--config", str(HERE / "configs" / name), "--out",
                    str(Path(args.out) / Path(name).stem)])
        if code:
            raise SystemExit(code)


if __name__ == "__main__":
    main()

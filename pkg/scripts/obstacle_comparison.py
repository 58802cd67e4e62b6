"""CMCG vs do-nothing for a convex square and a trapping cavity (writes compare.csv and donothing.csv)."""

import argparse
from pathlib import Path

from cmcg.cli import main as cli

HERE = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/compare")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    for name in ("square", "cavity"):
        code = cli(["compare", "--config", str(HERE / "configs" / f"{name}.toml"), "--out",
                    str(Path(args.out) / name), "--threads", str(args.threads)])
        if code:
            raise SystemExit(code)


if __name__ == "__main__":
    main()

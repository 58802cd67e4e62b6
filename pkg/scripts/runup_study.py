"""Total wave periods (run-up + 2 per CG iteration) for several run-up lengths on the square obstacle."""

import argparse
from pathlib import Path

from cmcg.cli import main as cli

HERE = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/runup")
    args = ap.parse_args()
    raise SystemExit(cli(["runup-study", "--config", str(HERE / "configs" / "square.toml"), "--out", args.out]))


if __name__ == "__main__":
    main()

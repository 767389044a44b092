#!/usr/bin/env python3
"""Generate a small mass sweep and aggregate it through the CLI driver.

Writes one config per mass into <out>/configs, runs `semiflrw sweep` on the
directory, and leaves sweep.csv plus per-run outputs under <out>.
"""

from __future__ import annotations

import argparse
import json
import pathlib

from semiflrw import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=pathlib.Path)
    parser.add_argument("--masses", type=float, nargs="+", default=[0.1, 0.5, 1.0, 2.0])
    parser.add_argument("--horizon", type=float, default=0.002)
    parser.add_argument("--h0", type=float, default=0.0)
    parser.add_argument("--threads", type=int, default=2)
    args = parser.parse_args()

    config_dir = args.out / "configs"
    config_dir.mkdir(parents=True, exist_ok=True)
    for i, mass in enumerate(args.masses):
        payload = {"mass": mass, "H0": args.h0, "horizon": args.horizon}
        (config_dir / f"mass_{i:02d}.json").write_text(json.dumps(payload, indent=2))

    code = cli.main(
        ["sweep", str(config_dir), "--out", str(args.out), "--threads", str(args.threads)]
    )
    print((args.out / "sweep.csv").read_text(), end="")
    return code


if __name__ == "__main__":
    raise SystemExit(main())

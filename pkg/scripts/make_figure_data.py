#!/usr/bin/env python3
"""Regenerate the plot-ready CSVs for the phase-profile and information-sweep
figures from the shipped configs."""

import pathlib
import sys

from coatrack.cli import main

ROOT = pathlib.Path(__file__).resolve().parents[1]


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out/figures"
    rc = main(["phase-profile", "--config", str(ROOT / "configs/phase_profile_10x10.yaml"),
               "--out-dir", out])
    rc |= main(["fim-sweep", "--config", str(ROOT / "configs/fim_sweep_paper.yaml"),
                "--out-dir", out])
    print(f"wrote phase_profile.csv and fim_sweep.csv under {out}")
    sys.exit(rc)

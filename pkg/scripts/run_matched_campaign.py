#!/usr/bin/env python3
"""Run the bound trace and the full tracking campaign for a scenario config.

Usage: run_matched_campaign.py [config] [out_dir] [threads]
"""

import pathlib
import sys

from coatrack.cli import main

ROOT = pathlib.Path(__file__).resolve().parents[1]


if __name__ == "__main__":
    config = sys.argv[1] if len(sys.argv) > 1 else str(ROOT / "configs/scenario_30x30.yaml")
    out = sys.argv[2] if len(sys.argv) > 2 else "out/campaign"
    threads = sys.argv[3] if len(sys.argv) > 3 else "2"
    rc = main(["bound", "--config", config, "--out-dir", out])
    rc |= main(["track", "--config", config, "--out-dir", out, "--threads", threads])
    print(f"wrote bound.csv, runs.csv, cdf.csv, summary.json under {out}")
    sys.exit(rc)

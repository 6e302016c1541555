#!/usr/bin/env python3
"""Run the bundled desk-scale eps sweep and print the fitted decay rate.

Usage: python scripts/run_sweep.py [config] [out_dir]
Defaults to the bundled sweep2d configuration and out/sweep2d.
"""

import sys

from vmvp.cli import main

if __name__ == "__main__":
    config = sys.argv[1] if len(sys.argv) > 1 else "bundled/sweep2d"
    args = ["sweep", "--config", config]
    if len(sys.argv) > 2:
        args += ["--out", sys.argv[2]]
    sys.exit(main(args))

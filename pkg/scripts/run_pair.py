#!/usr/bin/env python3
"""Run one paired (relativistic vs electrostatic) simulation.

Usage: python scripts/run_pair.py [config] [eps] [out_dir]
"""

import sys

from vmvp.cli import main

if __name__ == "__main__":
    config = sys.argv[1] if len(sys.argv) > 1 else "bundled/small2d"
    args = ["simulate", "--config", config, "--mode", "pair"]
    if len(sys.argv) > 2:
        args += ["--eps", sys.argv[2]]
    if len(sys.argv) > 3:
        args += ["--out", sys.argv[3]]
    sys.exit(main(args))

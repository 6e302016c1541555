#!/usr/bin/env python3
"""Run the analytic-norm fixed-point iteration and print its contraction record.

Usage: python scripts/run_ck.py [config] [out_dir]
"""

import sys

from vmvp.cli import main

if __name__ == "__main__":
    config = sys.argv[1] if len(sys.argv) > 1 else "bundled/ck2d"
    args = ["ck", "--config", config]
    if len(sys.argv) > 2:
        args += ["--out", sys.argv[2]]
    sys.exit(main(args))

#!/usr/bin/env python3
"""Amplitude sweeps probing the a priori estimates at desk scale.

``gradient`` sweeps the gradient-norm quotient over source amplitudes
(optionally with a bounded shear drift); ``maximal`` sweeps the
second-derivative quotient.  Each writes ``report.json``, ``sweep.csv``,
and a log-log ``sweep.svg`` into its own subdirectory of ``--out``.
"""

import argparse
import os
import sys

from hjblab.cli import main as cli_main

GRADIENT_CONFIG = """\
[domain]
kind = torus
dim = 3
resolution = {n}

[problem]
gamma = 3.0
source_kind = mode
{drift_block}
[experiment]
amplitudes = 1, 3, 10, 30, 100
q = 2.5714285714285716
r = 18.0
"""

DRIFT_BLOCK = """drift_kind = shear
drift_amplitude = 1.0
drift_s = 4.0
drift_theta = 0.7825422900366437
"""

MAXIMAL_CONFIG = """\
[domain]
kind = torus
dim = 3
resolution = {n}

[problem]
gamma = 3.0
source_kind = mode

[experiment]
amplitudes = 1, 3, 10, 30, 100, 300, 1000, 3000
q = 2.5
"""


def run_one(kind, text, out, seed):
    os.makedirs(out, exist_ok=True)
    cfg_path = os.path.join(out, "run.ini")
    with open(cfg_path, "w") as fh:
        fh.write(text)
    rc = cli_main([kind, "--config", cfg_path, "--out", out, "--seed", str(seed)])
    print(kind, "report:", os.path.join(out, "report.json"))
    return rc


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/sweeps", help="output directory")
    ap.add_argument(
        "--kind",
        default="both",
        choices=("gradient", "maximal", "both"),
        help="which quotient to sweep",
    )
    ap.add_argument("--resolution", type=int, default=48)
    ap.add_argument("--drift", action="store_true", help="add a bounded shear drift to the gradient sweep")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rc = 0
    if args.kind in ("gradient", "both"):
        text = GRADIENT_CONFIG.format(
            n=args.resolution, drift_block=DRIFT_BLOCK if args.drift else ""
        )
        rc |= run_one("thm1-sweep", text, os.path.join(args.out, "gradient"), args.seed)
    if args.kind in ("maximal", "both"):
        text = MAXIMAL_CONFIG.format(n=max(args.resolution, 64))
        rc |= run_one("thm2-sweep", text, os.path.join(args.out, "maximal"), args.seed)
    return rc


if __name__ == "__main__":
    sys.exit(main())

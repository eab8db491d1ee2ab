"""Sweep a trained checkpoint over the thrust-to-weight grid and compare it
against the embedded fixed-TWR reference curve.

Usage: python scripts/run_twr_sweep.py CHECKPOINT TRACK [OUT_DIR]
"""

import sys

from condor.cli import dispatch


def main() -> int:
    if len(sys.argv) < 3:
        print(__doc__)
        return 1
    ckpt, track = sys.argv[1], sys.argv[2]
    out = sys.argv[3] if len(sys.argv) > 3 else "runs/sweep"
    return dispatch(["sweep", "--checkpoint", ckpt, "--track", track,
                     "--reference", "fixture:fixed", "--label", "policy", "--out", out])


if __name__ == "__main__":
    sys.exit(main())

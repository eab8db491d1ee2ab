"""Train the desk-scale square-track policy (the configuration the acceptance
suite uses) and evaluate it at three conditioning setpoints.

Usage: python scripts/train_square_acceptance.py [out_dir]
"""

import sys

import numpy as np

from condor.cli import dispatch
from condor.evaluation import run_episode
from condor.track import load_track_file


def main() -> int:
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "runs/square_acceptance"
    code = dispatch(["train", "--config", "configs/square_film_star_c.json",
                     "--set", f"out_dir={out_dir}", "--workers", "2"])
    if code != 0:
        return code
    track = load_track_file("tracks/square.json")
    ckpt = f"{out_dir}/checkpoint.ckpt"
    for zeta in (2.5, 3.5, 4.5):
        r = run_episode(ckpt, track, zeta, n_laps=4, deterministic=True)
        med = float(np.median(r.laptimes)) if r.laptimes else float("nan")
        print(f"zeta {zeta}: laptimes {[round(x, 2) for x in r.laptimes]} "
              f"median {med:.2f} s, crashed {r.crashed}, "
              f"twr violations {r.twr_violation_frac:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

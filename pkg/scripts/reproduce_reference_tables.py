"""Recompute the relative-laptime summary tables from the embedded reference
sweep curves (simulation and real-world Split-S) and print them."""

from condor.evaluation import reference_real_sweeps, reference_sim_sweeps, relative_laptime

ARCH_ORDER = ["naive_c", "naive_d", "multihead", "film_c", "film_star_c", "film_star_d"]


def print_table(title, sweeps):
    ref = sweeps["fixed"]
    print(f"\n{title}")
    print(f"{'architecture':<14} {'avg rel %':>10} {'max rel %':>10} {'points':>7}")
    for arch in ARCH_ORDER:
        if arch not in sweeps:
            continue
        rs = relative_laptime(sweeps[arch], ref)
        print(f"{arch:<14} {rs.avg_rel_pct:>10.2f} {rs.max_rel_pct:>10.2f} {rs.n_points:>7}")


if __name__ == "__main__":
    print_table("Split-S, simulation (vs fixed-TWR specialists)", reference_sim_sweeps())
    print_table("Split-S, real world (vs fixed-TWR specialists)", reference_real_sweeps())

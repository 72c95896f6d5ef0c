"""Robot study: default decaying gate against a constant gate and a small slow gate.

Prints the steady band and chatter index of each run, plus the error norm at
the checkpoints. Usage: python3 scripts/gate_comparison.py [--t-end 30]
"""

import argparse
from pathlib import Path

from atl import analysis as an
from atl import scenario_file as sfm
from atl.simulate import run

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
RUNS = ["paper_v_b", "paper_v_b_comparison_const_nu", "paper_v_b_small_gate"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t-end", type=float, default=30.0)
    args = ap.parse_args()
    print(f"{'scenario':<32} {'verdict':<10} {'band':>10} {'chatter':>9}  |e| at checkpoints")
    for name in RUNS:
        sf = sfm.load(SCENARIOS / f"{name}.cfg", [f"integrator.t_end={args.t_end}"])
        trace = run(sfm.build_scenario(sf))
        if not trace.completed:
            print(f"{name:<32} {trace.verdict.value:<10} at t={trace.verdict_time}")
            continue
        checkpoints = [c for c in (5.0, 10.0, 20.0, 30.0) if c <= args.t_end]
        m = an.tracking_metrics(trace, checkpoints)
        at = "  ".join(f"{t:g}:{v:.3g}" for t, v in m.error_at.items())
        print(f"{name:<32} {trace.verdict.value:<10} {m.steady_band:>10.4g} {m.chatter_index:>9.4g}  {at}")


if __name__ == "__main__":
    main()

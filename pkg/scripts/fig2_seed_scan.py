"""How often does the Fig. 2 SDE sweep stay within 10% of the stationary curve?

    python3 scripts/fig2_seed_scan.py --seeds 0 1 2 3

Runs the fig2 config once per master seed and reports the worst pointwise
relative deviation. Each run takes about 20 s on one core.
"""
import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from epnoise.analysis import frequency_sweep
from epnoise.config import load_config
from epnoise.stochastic import TrajectoryConfig

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(8)))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    cfg = load_config(ROOT / "configs" / "fig2.yaml")
    p = cfg.params
    omegas = np.linspace(p["start"], p["stop"], p["num"])
    base = TrajectoryConfig(dt=p["dt"], t_end=p["t_end"], burn_in=p["burn_in"], master_seed=0)
    worst = []
    for s in args.seeds:
        sw = frequency_sweep(cfg.model, omegas, "both", replace(base, master_seed=s), threads=args.threads)
        rel = np.abs(sw.sde / sw.steady - 1)
        worst.append(rel.max())
        print(f"seed {s}: max rel dev {rel.max():.3f}, {int(np.sum(rel >= 0.1))} points >= 10%")
    print(f"{sum(w < 0.1 for w in worst)}/{len(worst)} seeds within 10% everywhere")


if __name__ == "__main__":
    main()

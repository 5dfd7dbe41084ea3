"""Run the three dimer figure configs, write CSVs and print a short summary.

    python3 scripts/reproduce_figures.py [--only fig1 fig2 fig3] [--out results] [--plot]

Each CSV carries the config echo, so it can be fed back to ``epnoise run --config``.
"""
import argparse
import time
from pathlib import Path

import numpy as np

from epnoise.analysis import find_peaks
from epnoise.cli import execute, render
from epnoise.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def summarize_fig1(payload):
    m = payload.meta
    rho, se = m["window_mean"][0], m["window_stderr"][0]
    ss = m.get("stationary", [np.nan])[0]
    print(f"  window mean rho11 = {rho:.5f} +- {se:.5f}, stationary = {ss:.5f} (z = {(rho - ss) / se:+.2f})")


def summarize_fig2(payload):
    a = np.array([r[:3] for r in payload.rows], dtype=float)
    om, steady, sde = a.T
    rel = np.abs(sde / steady - 1)
    peaks = find_peaks(om, steady)
    print(f"  steady peaks at {[round(x, 4) for x, _ in peaks]}; Re eig(H_eff) at "
          f"{[round(x, 4) for x in payload.meta['h_eff_re']]}")
    print(f"  SDE vs steady: max rel dev {rel.max():.3f}, {int(np.sum(rel >= 0.1))}/{len(rel)} points >= 10%")


def summarize_fig3(payload):
    rows = [r for r in payload.rows if r[2] == "L"]
    steps = sorted({r[0] for r in rows})
    top = [max(r[4] for r in rows if r[0] == k) for k in steps]
    print(f"  max Re eig(L): {top[0]:.4f} -> {top[-1]:.4f} over {len(steps)} points")


def plot(name, payload, out):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    if name == "fig1":
        a = np.array(payload.rows, dtype=float)
        ax.plot(a[:, 0], a[:, 1], label="ensemble")
        if "stationary" in payload.meta:
            ax.axhline(payload.meta["stationary"][0], color="k", ls="--", label="stationary")
        ax.set_xlabel("time")
        ax.set_ylabel(r"$\rho_{11}$")
    elif name == "fig2":
        a = np.array([r[:3] for r in payload.rows], dtype=float)
        ax.plot(a[:, 0], a[:, 1], "k-", label="stationary")
        ax.plot(a[:, 0], a[:, 2], ".", label="SDE")
        ax.set_xlabel("detuning")
        ax.set_ylabel(r"$\rho_{11}$")
    else:
        for op, style in (("H_eff", "o-"), ("L", "s--")):
            rows = [r for r in payload.rows if r[2] == op]
            for b in sorted({r[3] for r in rows}):
                pts = np.array([[r[4], r[5]] for r in rows if r[3] == b])
                ax.plot(pts[:, 0], pts[:, 1], style, ms=3, label=op if b == 0 else None)
        ax.set_xlabel("Re")
        ax.set_ylabel("Im")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / f"{name}.png", dpi=150)
    plt.close(fig)


SUMMARIES = {"fig1": summarize_fig1, "fig2": summarize_fig2, "fig3": summarize_fig3}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", nargs="+", choices=sorted(SUMMARIES), default=sorted(SUMMARIES))
    ap.add_argument("--out", type=Path, default=ROOT / "results")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.only:
        cfg = load_config(ROOT / "configs" / f"{name}.yaml")
        t0 = time.perf_counter()
        payload = execute(cfg, threads=args.threads)
        (args.out / f"{name}.csv").write_text(render(cfg, payload))
        print(f"{name}: {cfg.experiment}, {len(payload.rows)} rows, {time.perf_counter() - t0:.1f}s")
        SUMMARIES[name](payload)
        if args.plot:
            plot(name, payload, args.out)


if __name__ == "__main__":
    main()

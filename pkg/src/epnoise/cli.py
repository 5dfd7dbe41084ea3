"""Command-line front end: ``epnoise run --config PATH``.

One experiment per invocation. Output is CSV (``#`` header lines carrying the
tool version, a JSON echo of the normalized config and the column names) or
a JSON document with the same payload. Exit status: 0 success, 1 usage or
config error, 2 numerical failure, 3 unstable model with ``require_stable``.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import eigen_flow, frequency_sweep, scaling_exponent
from .config import ECHO_PREFIX, EXPERIMENT_DEFAULTS, RunConfig, load_config
from .dynamics import effective_hamiltonian, hamiltonian_spectrum
from .errors import ConfigError, EpNoiseError, NumericalError
from .liouville import (
    build_liouvillian,
    degeneracy_report,
    liouville_spectrum,
    microcavity_stability_bound,
    stationary_state,
)
from .numerics import eigvals
from .stochastic import TrajectoryConfig, ensemble_density, simulate_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_UNSTABLE = 0, 1, 2, 3

COLUMNS_HELP = """\
columns per experiment:
  eigs        operator, index, re, im          (H_eff and L spectra)
  degeneracy  operator, cluster, re, im, multiplicity, blocks
  steady      row, col, re, im                 (stationary density matrix)
  sweep       omega, steady, sde, flag         (intensity |psi_k|^2 per pump frequency)
  trajectory  t, I_1..I_n                      (|psi_i|^2 of one realization)
  ensemble    t, rho_11..rho_nn, se_11..se_nn  (ensemble density diagonal, standard errors)
  stability   index, re, im                    (L spectrum; kappa_c, gamma_max in header)
  scaling     strength, splitting              (fit exponent in header)
  flow        step, parameter, operator, branch, re, im
In dimensionless mode times are multiplied and rates divided by the model
scale (alpha for the dimer, Gamma0 for the microcavity); frequencies are
shifted by the reference frequency (omega0, Re Omega0) first.
"""


class UnstableError(EpNoiseError):
    pass


@dataclass
class Payload:
    columns: list[str]
    rows: list[list]
    meta: dict = field(default_factory=dict)


def _sweep_config(cfg: RunConfig, p: dict) -> TrajectoryConfig:
    return TrajectoryConfig(dt=p["dt"], t_end=p["t_end"], burn_in=p["burn_in"], n_traj=p.get("n_traj", 1),
                            master_seed=cfg.master_seed, record_stride=p.get("record_stride", 1),
                            psi0=tuple(complex(*z) for z in p["psi0"]) if p.get("psi0") else None,
                            scheme=p["scheme"], frame=p["frame"])


def _factory(cfg: RunConfig, parameter: str):
    model = cfg.model
    if parameter == "epsilon":
        return lambda s: model.replace(epsilon=s)
    if parameter == "gamma":
        return lambda s: model.with_gamma(s)
    return lambda s: model.replace(kappa=s)


class _Units:
    def __init__(self, cfg: RunConfig):
        on = cfg.output["dimensionless"]
        self.s = cfg.scale if on else 1.0
        self.ref = cfg.reference_frequency if on else 0.0

    def rate(self, x):
        return x / self.s

    def freq(self, x):
        return (x - self.ref) / self.s

    def time(self, t):
        return t * self.s

    def spectrum(self, w, frequency_like: bool):
        w = np.asarray(w)
        re = self.freq(w.real) if frequency_like else self.rate(w.real)
        return re, self.rate(w.imag)


def _eigs(cfg, p, u, threads):
    rows = []
    for name, w, flike in (("H_eff", eigvals(effective_hamiltonian(cfg.model)), True),
                           ("L", build_liouvillian(cfg.model).eigenvalues(), False)):
        re, im = u.spectrum(w, flike)
        rows += [[name, i, float(a), float(b)] for i, (a, b) in enumerate(zip(re, im))]
    hs = hamiltonian_spectrum(cfg.model)
    meta = {"admissible": hs.admissible, "splitting": u.rate(hs.splitting),
            "real_splitting": u.rate(hs.real_splitting)}
    return Payload(["operator", "index", "re", "im"], rows, meta)


def _degeneracy(cfg, p, u, threads):
    rep = degeneracy_report(cfg.model, p["tol"])
    rows = []
    for name, js, flike in (("H_eff", rep.hamiltonian, True), ("L", rep.liouvillian, False)):
        for k, c in enumerate(js.clusters):
            re, im = u.spectrum(np.array([c.eigenvalue]), flike)
            rows.append([name, k, float(re[0]), float(im[0]), c.multiplicity,
                         ";".join(str(b) for b in c.block_sizes)])
    meta = {"tol": p["tol"], "ambiguous_H_eff": rep.hamiltonian.ambiguous,
            "ambiguous_L": rep.liouvillian.ambiguous}
    return Payload(["operator", "cluster", "re", "im", "multiplicity", "blocks"], rows, meta)


def _steady(cfg, p, u, threads):
    st = stationary_state(cfg.model, p["omega"])
    M = st.rho.matrix
    n = cfg.model.dim
    rows = [[i + 1, j + 1, float(M[i, j].real), float(M[i, j].imag)] for i in range(n) for j in range(n)]
    meta = {"stable": st.stable, "max_real_part": u.rate(st.max_real_part), "residual": st.residual,
            "min_eigenvalue": st.rho.min_eigenvalue, "hermiticity_error": st.rho.hermiticity_error}
    return Payload(["row", "col", "re", "im"], rows, meta)


def _sweep(cfg, p, u, threads):
    omegas = np.linspace(p["start"], p["stop"], p["num"])
    tc = _sweep_config(cfg, p) if p["mode"] != "steady" else None
    sw = frequency_sweep(cfg.model, omegas, p["mode"], tc, p["observable"], threads)
    nan = float("nan")
    rows = [[float(u.freq(w)),
             float(sw.steady[i]) if sw.steady is not None else nan,
             float(sw.sde[i]) if sw.sde is not None else nan,
             sw.flags[i]] for i, w in enumerate(omegas)]
    re, im = u.spectrum(sw.h_eff_eigenvalues, True)
    meta = {"warnings": sw.n_flagged, "h_eff_re": [float(x) for x in re], "h_eff_im": [float(x) for x in im]}
    return Payload(["omega", "steady", "sde", "flag"], rows, meta)


def _trajectory(cfg, p, u, threads):
    tc = _sweep_config(cfg, p)
    res = simulate_trajectory(cfg.model, p["omega"], tc, traj_index=p["traj_index"])
    n = cfg.model.dim
    rows = [[float(u.time(t))] + [float(x) for x in obs] for t, obs in zip(res.times, res.observables)]
    meta = {"window_average": [float(x) for x in res.window_average], "window": [u.time(p["burn_in"]),
                                                                               u.time(p["t_end"])]}
    return Payload(["t"] + [f"I_{i + 1}" for i in range(n)], rows, meta)


def _ensemble(cfg, p, u, threads):
    tc = _sweep_config(cfg, p)
    ens = ensemble_density(cfg.model, p["omega"], tc, threads=threads)
    n = cfg.model.dim
    diag = ens.rho.diagonal(axis1=1, axis2=2).real
    rows = [[float(u.time(t))] + [float(x) for x in diag[k]] + [float(x) for x in ens.stderr[k]]
            for k, t in enumerate(ens.times)]
    wm, wse = ens.window_mean()
    meta = {"window_mean": [float(x) for x in wm], "window_stderr": [float(x) for x in wse],
            "n_traj": ens.n_traj, "n_diverged": ens.n_diverged, "warnings": ens.n_diverged}
    try:
        st = stationary_state(cfg.model, p["omega"])
        meta["stationary"] = [float(x) for x in st.rho.matrix.diagonal().real]
    except NumericalError:
        pass
    cols = ["t"] + [f"rho_{i + 1}{i + 1}" for i in range(n)] + [f"se_{i + 1}{i + 1}" for i in range(n)]
    return Payload(cols, rows, meta)


def _stability(cfg, p, u, threads):
    rep = liouville_spectrum(cfg.model)
    re, im = u.spectrum(rep.spectrum, False)
    rows = [[i, float(a), float(b)] for i, (a, b) in enumerate(zip(re, im))]
    meta = {"stable": rep.stable, "max_real_part": u.rate(rep.max_real_part),
            "kappa_c": u.rate(rep.critical_rate)}
    if cfg.microcavity is not None:
        meta["gamma_max"] = u.rate(microcavity_stability_bound(cfg.microcavity))
    return Payload(["index", "re", "im"], rows, meta)


def _scaling(cfg, p, u, threads):
    grid = np.geomspace(p["start"], p["stop"], p["num"])
    fit = scaling_exponent(_factory(cfg, p["parameter"]), grid, p["target"])
    rows = [[float(u.rate(s)), float(u.rate(d))] for s, d in zip(fit.strengths, fit.splittings)]
    meta = {"exponent": fit.exponent, "halfwidth": fit.halfwidth, "r_squared": fit.r_squared,
            "reference": [fit.reference.real, fit.reference.imag], "target": fit.target}
    return Payload(["strength", "splitting"], rows, meta)


def _flow(cfg, p, u, threads):
    grid = np.linspace(p["start"], p["stop"], p["steps"] + 1)
    fl = eigen_flow(_factory(cfg, p["parameter"]), grid)
    rows = []
    for k, s in enumerate(grid):
        for name, W, flike in (("H_eff", fl.hamiltonian, True), ("L", fl.liouvillian, False)):
            re, im = u.spectrum(W[k], flike)
            rows += [[k, float(u.rate(s)), name, b, float(re[b]), float(im[b])] for b in range(W.shape[1])]
    meta = {"branches_H_eff": fl.hamiltonian.shape[1], "branches_L": fl.liouvillian.shape[1],
            "ambiguous": [list(a) for a in fl.ambiguous], "warnings": len(fl.ambiguous)}
    return Payload(["step", "parameter", "operator", "branch", "re", "im"], rows, meta)


RUNNERS = {"eigs": _eigs, "degeneracy": _degeneracy, "steady": _steady, "sweep": _sweep,
           "trajectory": _trajectory, "ensemble": _ensemble, "stability": _stability,
           "scaling": _scaling, "flow": _flow}


def execute(cfg: RunConfig, threads: int = 1) -> Payload:
    """Run the configured experiment and return its payload (raises on failure)."""
    p = cfg.params
    if p.get("require_stable"):
        rep = liouville_spectrum(cfg.model)
        if not rep.stable:
            raise UnstableError(f"max Re eig(L) = {rep.max_real_part:.6g} >= 0 "
                                f"(critical damping {rep.critical_rate:.6g}, kappa = {cfg.model.kappa:.6g})")
    return RUNNERS[cfg.experiment](cfg, p, _Units(cfg), threads)


def _fmt(x, precision):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x) if precision is None else f"{x:.{precision}g}"
    s = str(x)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def _round(obj, precision):
    if precision is None:
        return obj
    if isinstance(obj, float):
        return float(f"{obj:.{precision}g}") if math.isfinite(obj) else obj
    if isinstance(obj, list):
        return [_round(v, precision) for v in obj]
    if isinstance(obj, dict):
        return {k: _round(v, precision) for k, v in obj.items()}
    return obj


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _echo(cfg: RunConfig) -> dict:
    norm = json.loads(json.dumps(cfg.normalized))
    norm["output"].pop("path", None)
    return norm


def render(cfg: RunConfig, payload: Payload) -> str:
    """Serialize a payload in the configured format (LF line endings)."""
    prec = cfg.output["precision"]
    meta = _jsonable(payload.meta)
    if cfg.output["format"] == "json":
        doc = {"tool": "epnoise", "version": __version__, "experiment": cfg.experiment, "config": _echo(cfg),
               "meta": _round(meta, prec), "columns": payload.columns,
               "rows": _round(_jsonable(payload.rows), prec)}
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# tool: epnoise {__version__}\n")
    buf.write(f"# experiment: {cfg.experiment}\n")
    buf.write(ECHO_PREFIX + json.dumps(_echo(cfg), separators=(",", ":")) + "\n")
    for k, v in meta.items():
        buf.write(f"# {k}: {json.dumps(_round(v, prec))}\n")
    buf.write("# columns: " + ",".join(payload.columns) + "\n")
    for row in payload.rows:
        buf.write(",".join(_fmt(x, prec) for x in row) + "\n")
    return buf.getvalue()


def _error_record(exc: BaseException, code: int) -> str:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("field", "line", "time"):
        v = getattr(exc, attr, None)
        if v is not None:
            rec[attr] = v
    return json.dumps(rec)


def build_parser() -> argparse.ArgumentParser:
    defaults = "\n".join(f"  {k}: {json.dumps(v)}" for k, v in EXPERIMENT_DEFAULTS.items())
    parser = argparse.ArgumentParser(
        prog="epnoise", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Noisy exceptional-point sensor simulations.",
        epilog=COLUMNS_HELP + "\nexperiment defaults:\n" + defaults
        + '\n  output: {"format": "csv", "path": "-", "precision": null, "dimensionless": false}'
        + '\n  rng: {"master_seed": 0}\n')
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a config file",
                         formatter_class=argparse.RawDescriptionHelpFormatter, epilog=parser.epilog)
    run.add_argument("--config", required=True, help="YAML/JSON config, or a previous output file")
    run.add_argument("--seed", type=int, help="override rng.master_seed")
    run.add_argument("--threads", type=int, default=1, help="worker threads (output does not depend on it)")
    run.add_argument("--output", help="output path ('-' for stdout); overrides output.path")
    run.add_argument("--format", choices=("csv", "json"), help="overrides output.format")
    run.add_argument("--quiet", action="store_true", help="suppress warnings on stderr")
    return parser


def run(args) -> int:
    err = sys.stderr
    try:
        cfg = load_config(args.config, seed=args.seed)
    except ConfigError as exc:
        err.write(_error_record(exc, EXIT_CONFIG) + "\n")
        return EXIT_CONFIG
    if args.format:
        cfg.output["format"] = args.format
        cfg.normalized["output"]["format"] = args.format
    if args.output:
        cfg.output["path"] = args.output
    if args.threads < 1:
        err.write(_error_record(ValueError("--threads must be >= 1"), EXIT_CONFIG) + "\n")
        return EXIT_CONFIG

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            payload = execute(cfg, threads=args.threads)
        except UnstableError as exc:
            err.write(_error_record(exc, EXIT_UNSTABLE) + "\n")
            return EXIT_UNSTABLE
        except NumericalError as exc:
            err.write(_error_record(exc, EXIT_NUMERICAL) + "\n")
            return EXIT_NUMERICAL
        except (ValueError, EpNoiseError) as exc:
            err.write(_error_record(exc, EXIT_CONFIG) + "\n")
            return EXIT_CONFIG

    text = render(cfg, payload)
    path = cfg.output["path"]
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    if not args.quiet:
        for w in caught:
            err.write(f"warning: {w.message}\n")
        n_warn = payload.meta.get("warnings", 0)
        if n_warn:
            err.write(f"warning: {n_warn} point(s) flagged, see output\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return run(args)


if __name__ == "__main__":
    sys.exit(main())

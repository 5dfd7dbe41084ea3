"""Run configuration: YAML (or JSON) text -> validated RunConfig.

Complex numbers are written as two-element lists ``[re, im]`` (a bare real
number is also accepted). Validation errors name the offending field and,
when the value came from a file, its line number.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ParseError, ValidationError
from .liouville import pt_dimer_critical_rate
from .model import (
    MicrocavityParams,
    NoiseChannel,
    PTDimerParams,
    SensorModel,
    Tip,
    build_microcavity,
    build_pt_dimer,
)

EXPERIMENTS = ("eigs", "degeneracy", "steady", "sweep", "trajectory", "ensemble", "stability", "scaling", "flow")
BUILDERS = ("pt_dimer", "microcavity", "explicit")

EXPERIMENT_DEFAULTS = {
    "eigs": {},
    "degeneracy": {"tol": 1e-8},
    "steady": {"omega": None},
    "sweep": {"mode": "steady", "start": None, "stop": None, "num": 100, "observable": 0,
              "dt": 1e-3, "t_end": 1000.0, "burn_in": 100.0, "scheme": "ito", "frame": "rotating"},
    "trajectory": {"omega": None, "dt": 1e-3, "t_end": 1000.0, "burn_in": 100.0, "record_stride": 100,
                   "psi0": None, "scheme": "ito", "frame": "rotating", "traj_index": 0},
    "ensemble": {"omega": None, "dt": 1e-3, "t_end": 1000.0, "burn_in": 100.0, "record_stride": 100,
                 "psi0": None, "scheme": "ito", "frame": "rotating", "n_traj": 100},
    "stability": {},
    "scaling": {"parameter": "epsilon", "target": "hamiltonian", "start": 1e-8, "stop": 1e-4, "num": 17},
    "flow": {"parameter": "epsilon", "start": 0.0, "stop": None, "steps": 20},
}
OUTPUT_DEFAULTS = {"format": "csv", "path": "-", "precision": None, "dimensionless": False}


class _Lines:
    """Maps dotted field paths to source line numbers (1-based)."""

    def __init__(self, text: str | None):
        self.map: dict[str, int] = {}
        if text:
            try:
                node = yaml.compose(text)
            except yaml.YAMLError:
                node = None
            if node is not None:
                self._walk(node, "")

    def _walk(self, node, path):
        self.map.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                self.map[p] = k.start_mark.line + 1
                self._walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._walk(v, f"{path}[{i}]")

    def line(self, path):
        while path:
            if path in self.map:
                return self.map[path]
            path = path.rsplit(".", 1)[0] if "." in path else ""
        return None


class _Reader:
    def __init__(self, lines: _Lines):
        self.lines = lines

    def fail(self, path, msg):
        raise ValidationError(msg, field=path, line=self.lines.line(path))

    def real(self, d, key, path, default=..., min_value=None):
        p = f"{path}.{key}"
        if key not in d or d[key] is None:
            if default is ...:
                self.fail(p, "required")
            return default
        v = d[key]
        if isinstance(v, bool):
            self.fail(p, f"expected a number, got {v!r}")
        try:
            x = float(v)
        except (TypeError, ValueError):
            self.fail(p, f"expected a number, got {v!r}")
        if not math.isfinite(x):
            self.fail(p, "must be finite")
        if min_value is not None and x < min_value:
            self.fail(p, f"must be >= {min_value}, got {x}")
        return x

    def integer(self, d, key, path, default=..., min_value=None):
        x = self.real(d, key, path, default, min_value)
        if x is None or x is default:
            return x
        if x != int(x):
            self.fail(f"{path}.{key}", f"expected an integer, got {x}")
        return int(x)

    def cplx(self, v, path):
        if isinstance(v, bool):
            self.fail(path, "expected complex [re, im]")
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                self.fail(path, "complex numbers are [re, im]")
            try:
                z = complex(float(v[0]), float(v[1]))
            except (TypeError, ValueError):
                self.fail(path, f"expected complex [re, im], got {v!r}")
        else:
            try:
                z = complex(float(v), 0.0)
            except (TypeError, ValueError):
                self.fail(path, f"expected complex [re, im], got {v!r}")
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            self.fail(path, "must be finite")
        return z

    def cvector(self, v, path):
        if not isinstance(v, (list, tuple)) or not v:
            self.fail(path, "expected a list of complex numbers")
        return np.array([self.cplx(x, f"{path}[{i}]") for i, x in enumerate(v)])

    def cmatrix(self, v, path):
        if not isinstance(v, (list, tuple)) or not v or not all(isinstance(r, (list, tuple)) for r in v):
            self.fail(path, "expected a list of rows")
        rows = [[self.cplx(x, f"{path}[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(v)]
        if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
            self.fail(path, "matrix must be square")
        return np.array(rows)

    def choice(self, d, key, path, options, default=...):
        p = f"{path}.{key}"
        if key not in d or d[key] is None:
            if default is ...:
                self.fail(p, f"required (one of {', '.join(options)})")
            return default
        if d[key] not in options:
            self.fail(p, f"must be one of {', '.join(options)}, got {d[key]!r}")
        return d[key]


def _cjson(z: complex):
    return [z.real, z.imag]


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration. ``normalized`` is the JSON-ready echo with defaults applied."""

    model: SensorModel
    builder: str
    scale: float
    reference_frequency: float
    experiment: str
    params: dict
    output: dict
    master_seed: int
    normalized: dict
    microcavity: MicrocavityParams | None = None
    dimer: PTDimerParams | None = None


def _model_section(r: _Reader, d: dict):
    if not isinstance(d, dict):
        r.fail("model", "must be a mapping")
    builder = r.choice(d, "builder", "model", BUILDERS, default="explicit")
    p = d.get("params", {}) if builder != "explicit" else d
    if not isinstance(p, dict):
        r.fail("model.params", "must be a mapping")
    base = "model.params" if builder != "explicit" else "model"
    extra = {}

    if builder == "pt_dimer":
        alpha = r.real(p, "alpha", base, 1.0, min_value=0.0)
        omega0 = r.real(p, "omega0", base, 1.0)
        gamma = r.real(p, "gamma", base, 0.0, min_value=0.0)
        kc = pt_dimer_critical_rate(alpha, gamma)
        if "epsilon_kc" in p and "epsilon" in p:
            r.fail(f"{base}.epsilon", "give either epsilon or epsilon_kc, not both")
        if "kappa_kc" in p and "kappa" in p:
            r.fail(f"{base}.kappa", "give either kappa or kappa_kc, not both")
        if "epsilon_kc" in p:
            if alpha == 0:
                r.fail(f"{base}.epsilon_kc", "needs alpha > 0")
            eps = r.real(p, "epsilon_kc", base) * kc**2 / alpha
        else:
            eps = r.real(p, "epsilon", base, 0.0)
        kappa = (r.real(p, "kappa_kc", base, min_value=0.0) * kc if "kappa_kc" in p
                 else r.real(p, "kappa", base, 0.0, min_value=0.0))
        pump = r.cvector(p.get("pump", [0, 0]), f"{base}.pump")
        if pump.size != 2:
            r.fail(f"{base}.pump", "dimer pump has 2 components")
        wp = r.real(p, "pump_frequency", base, omega0)
        params = PTDimerParams(omega0, alpha, eps, gamma, kappa, tuple(pump), wp)
        model = build_pt_dimer(params)
        norm = {"builder": builder, "params": {k: v for k, v in p.items()}}
        norm["params"].update({"alpha": alpha, "omega0": omega0, "gamma": gamma, "pump": [_cjson(z) for z in pump],
                               "pump_frequency": wp})
        if "epsilon_kc" not in p:
            norm["params"]["epsilon"] = eps
        if "kappa_kc" not in p:
            norm["params"]["kappa"] = kappa
        scale = alpha if alpha > 0 else 1.0
        return model, builder, scale, omega0, norm, {"dimer": params}

    if builder == "microcavity":
        tips_raw = p.get("tips")
        if not isinstance(tips_raw, list) or len(tips_raw) != 2:
            r.fail(f"{base}.tips", "exactly two tips {V, U, beta} are required")
        tips = []
        for i, t in enumerate(tips_raw):
            tp = f"{base}.tips[{i}]"
            if not isinstance(t, dict):
                r.fail(tp, "must be a mapping with V, U, beta")
            tips.append(Tip(r.cplx(t.get("V", 0), f"{tp}.V"), r.cplx(t.get("U", 0), f"{tp}.U"),
                            r.real(t, "beta", tp, 0.0)))
        vals = {}
        for k in ("Omega0", "A0", "Omega1", "A1", "B1"):
            if k == "Omega0" or k == "A0":
                if k not in p:
                    r.fail(f"{base}.{k}", "required")
            vals[k] = r.cplx(p.get(k, 0), f"{base}.{k}")
        if not vals["Omega0"].imag < 0:
            r.fail(f"{base}.Omega0", "imaginary part must be negative (Gamma0 = -2 Im Omega0 > 0)")
        m = r.integer(p, "m", base, 1, min_value=1)
        if "pump" not in p:
            r.fail(f"{base}.pump", "required (no default pump for the microcavity)")
        pump = r.cvector(p["pump"], f"{base}.pump")
        if pump.size != 2:
            r.fail(f"{base}.pump", "microcavity pump has 2 components")
        params = MicrocavityParams(
            Omega0=vals["Omega0"], A0=vals["A0"], Omega1=vals["Omega1"], A1=vals["A1"], B1=vals["B1"],
            epsilon=r.real(p, "epsilon", base, 0.0), m=m, tips=tuple(tips),
            gamma=r.real(p, "gamma", base, 0.0, min_value=0.0), kappa=r.real(p, "kappa", base, 0.0, min_value=0.0),
            pump=tuple(pump), pump_frequency=r.real(p, "pump_frequency", base),
        )
        model = build_microcavity(params)
        norm = {"builder": builder, "params": {
            **{k: _cjson(v) for k, v in vals.items()}, "epsilon": params.epsilon, "m": m,
            "tips": [{"V": _cjson(complex(t.V)), "U": _cjson(complex(t.U)), "beta": t.beta} for t in tips],
            "gamma": params.gamma, "kappa": params.kappa, "pump": [_cjson(z) for z in pump],
            "pump_frequency": params.pump_frequency}}
        return model, builder, params.Gamma0, vals["Omega0"].real, norm, {"microcavity": params}

    if "h0" not in p:
        r.fail("model.h0", "required for an explicit model (or set model.builder)")
    h0 = r.cmatrix(p["h0"], "model.h0")
    n = h0.shape[0]
    h1 = r.cmatrix(p["h1"], "model.h1") if "h1" in p else np.zeros((n, n), complex)
    if h1.shape != h0.shape:
        r.fail("model.h1", f"shape {h1.shape} does not match h0 {h0.shape}")
    chans = []
    raw_ch = p.get("channels", []) or []
    if not isinstance(raw_ch, list):
        r.fail("model.channels", "must be a list")
    for i, c in enumerate(raw_ch):
        cp = f"model.channels[{i}]"
        if not isinstance(c, dict) or "h_noise" not in c:
            r.fail(cp, "each channel needs h_noise and gamma")
        hn = r.cmatrix(c["h_noise"], f"{cp}.h_noise")
        if hn.shape != h0.shape:
            r.fail(f"{cp}.h_noise", f"shape {hn.shape} does not match h0 {h0.shape}")
        chans.append(NoiseChannel(hn, r.real(c, "gamma", cp, min_value=0.0)))
    pump = r.cvector(p["pump"], "model.pump") if "pump" in p else np.zeros(n, complex)
    if pump.size != n:
        r.fail("model.pump", f"length {pump.size} does not match dimension {n}")
    eps = r.real(p, "epsilon", "model", 0.0)
    kappa = r.real(p, "kappa", "model", 0.0, min_value=0.0)
    wp = r.real(p, "pump_frequency", "model", 0.0)
    scale = r.real(p, "scale", "model", 1.0, min_value=0.0) or 1.0
    ref = r.real(p, "reference_frequency", "model", 0.0)
    model = SensorModel(h0, h1, eps, tuple(chans), kappa, pump, wp)
    mat = lambda M: [[_cjson(complex(z)) for z in row] for row in M]  # noqa: E731
    norm = {"builder": "explicit", "h0": mat(h0), "h1": mat(h1), "epsilon": eps, "kappa": kappa,
            "channels": [{"h_noise": mat(c.h_noise), "gamma": c.gamma} for c in chans],
            "pump": [_cjson(complex(z)) for z in pump], "pump_frequency": wp, "scale": scale,
            "reference_frequency": ref}
    return model, "explicit", scale, ref, norm, extra


def _experiment_section(r: _Reader, d: dict, builder: str, model: SensorModel):
    if not isinstance(d, dict):
        r.fail("experiment", "must be a mapping")
    kind = r.choice(d, "kind", "experiment", EXPERIMENTS)
    defaults = EXPERIMENT_DEFAULTS[kind]
    unknown = set(d) - set(defaults) - {"kind", "require_stable"}
    if unknown:
        r.fail(f"experiment.{sorted(unknown)[0]}", f"unknown parameter for '{kind}'")
    out = {}
    for key, dv in defaults.items():
        v = d.get(key, dv)
        p = f"experiment.{key}"
        if key in ("mode",):
            v = r.choice(d, key, "experiment", ("steady", "sde", "both"), dv)
        elif key == "scheme":
            v = r.choice(d, key, "experiment", ("ito", "stratonovich"), dv)
        elif key == "frame":
            v = r.choice(d, key, "experiment", ("rotating", "lab"), dv)
        elif key == "target":
            v = r.choice(d, key, "experiment", ("hamiltonian", "liouvillian"), dv)
        elif key == "parameter":
            v = r.choice(d, key, "experiment", ("epsilon", "gamma", "kappa"), dv)
        elif key == "psi0":
            if v is not None:
                pv = r.cvector(v, p)
                if pv.size != model.dim:
                    r.fail(p, f"length {pv.size} does not match dimension {model.dim}")
                v = [_cjson(z) for z in pv]
        elif key in ("num", "steps", "n_traj", "record_stride", "observable", "traj_index"):
            v = r.integer(d, key, "experiment", dv, min_value=0 if key in ("observable", "traj_index") else 1)
        elif dv is None and v is None:
            pass
        else:
            v = r.real(d, key, "experiment", dv, min_value=0.0 if key in ("dt", "t_end", "burn_in", "tol") else None)
        out[key] = v

    out["require_stable"] = d.get("require_stable", False)
    if not isinstance(out["require_stable"], bool):
        r.fail("experiment.require_stable", "expected true/false")
    if kind in ("sweep", "trajectory", "ensemble"):
        if not 0 < out["dt"] < out["t_end"]:
            r.fail("experiment.dt", "need 0 < dt < t_end")
        if not 0 <= out["burn_in"] < out["t_end"]:
            r.fail("experiment.burn_in", "need 0 <= burn_in < t_end")
    if kind == "sweep":
        if out["start"] is None or out["stop"] is None:
            r.fail("experiment.start", "sweep needs start and stop pump frequencies")
        if not out["stop"] > out["start"] or out["num"] < 2:
            r.fail("experiment.stop", "need stop > start and num >= 2")
        if out["observable"] >= model.dim:
            r.fail("experiment.observable", f"must be < {model.dim}")
    if kind == "scaling" and not 0 < out["start"] < out["stop"]:
        r.fail("experiment.start", "need 0 < start < stop")
    if kind == "flow" and out["stop"] is None:
        r.fail("experiment.stop", "required")
    if kind in ("scaling", "flow") and out["parameter"] == "gamma" and not model.channels:
        r.fail("experiment.parameter", "model has no noise channels")
    return kind, out


def parse_config(data, text: str | None = None, seed: int | None = None) -> RunConfig:
    """Validate an already-parsed config mapping (``text`` only supplies line numbers)."""
    r = _Reader(_Lines(text))
    if not isinstance(data, dict):
        raise ValidationError("top level must be a mapping", field="", line=1)
    for key in data:
        if key not in ("model", "experiment", "output", "rng"):
            r.fail(key, "unknown section")
    if "model" not in data:
        r.fail("model", "required section")
    if "experiment" not in data:
        r.fail("experiment", "required section")
    try:
        model, builder, scale, ref, mnorm, extra = _model_section(r, data["model"])
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc), field="model", line=r.lines.line("model")) from exc
    kind, params = _experiment_section(r, data["experiment"], builder, model)

    out_raw = data.get("output", {}) or {}
    if not isinstance(out_raw, dict):
        r.fail("output", "must be a mapping")
    output = dict(OUTPUT_DEFAULTS)
    for k in out_raw:
        if k not in OUTPUT_DEFAULTS:
            r.fail(f"output.{k}", "unknown key")
    output["format"] = r.choice(out_raw, "format", "output", ("csv", "json"), "csv")
    output["path"] = str(out_raw.get("path", "-"))
    prec = out_raw.get("precision")
    output["precision"] = None if prec is None else r.integer(out_raw, "precision", "output", min_value=1)
    dl = out_raw.get("dimensionless", False)
    if not isinstance(dl, bool):
        r.fail("output.dimensionless", "expected true/false")
    output["dimensionless"] = dl

    rng_raw = data.get("rng", {}) or {}
    master_seed = r.integer(rng_raw, "master_seed", "rng", 0, min_value=0)
    if seed is not None:
        master_seed = int(seed)

    normalized = {"model": mnorm, "experiment": {"kind": kind, **params}, "output": dict(output),
                  "rng": {"master_seed": master_seed}}
    return RunConfig(model=model, builder=builder, scale=scale, reference_frequency=ref, experiment=kind,
                     params=params, output=output, master_seed=master_seed, normalized=normalized,
                     microcavity=extra.get("microcavity"), dimer=extra.get("dimer"))


ECHO_PREFIX = "# config: "


def load_config(path, seed: int | None = None) -> RunConfig:
    """Read a YAML/JSON config file, or the parameter echo of a previous output file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    echo = _extract_echo(text)
    if echo is not None:
        return parse_config(echo, None, seed)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"{path}: invalid YAML{where}: {getattr(exc, 'problem', exc)}") from exc
    return parse_config(data, text, seed)


def _extract_echo(text: str):
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except ValueError:
            return None
        return doc.get("config") if isinstance(doc, dict) and doc.get("tool") == "epnoise" else None
    for line in text.splitlines():
        if line.startswith(ECHO_PREFIX):
            return json.loads(line[len(ECHO_PREFIX):])
        if not line.startswith("#"):
            return None
    return None

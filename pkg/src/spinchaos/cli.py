"""Command line entry point: one YAML document describes one experiment.

    spinchaos <command> --config run.yaml [--seed S] [--quad-n N] [--out DIR] [--stamp]

Commands: mixture-info, parisi, fixed-point, bound, simulate, gg-check, chaos-scan.
Exit codes: 0 ok, 1 parse or semantic error, 2 size guard, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, DomainError, NumericalError, SizeGuardError
from .mixture import (
    CoupledModelSpec,
    FieldLaw,
    MixtureSpec,
    cauchy_schwarz_gap,
    diagnose_conditions,
    theta_eval,
    xi_eval,
)

__all__ = ["ExperimentConfig", "parse_config", "serialize_config", "run", "main", "COMMANDS"]

COMMANDS = ("mixture-info", "parisi", "fixed-point", "bound", "simulate", "gg-check",
            "chaos-scan")
CONSTANT_FIELD_NOTE = ("a field with zero variance and nonzero mean is outside the setting "
                       "where temperature chaos is established; values are reported as computed")

_TOP_KEYS = ("beta1", "beta2", "t", "field", "seed", "quad_n", "output", "parisi",
             "fixed_point", "bound", "simulate", "gg")
_FIELD_KEYS = ("mean1", "mean2", "std1", "std2", "corr")
BLOCK_DEFAULTS = {
    "parisi": {"k": 1, "restarts": 4},
    "fixed_point": {"tol": 1e-10, "c1": None, "c2": None},
    "bound": {"u_grid": {"start": -0.5, "stop": 0.5, "num": 21}, "schedule": "band",
              "iota": 1, "k": 0, "v1": None, "v2": None},
    "simulate": {"N": 8, "M": 100, "scheme": "tensor"},
    "gg": {"n": 1, "psi": [0.0, 0.0, 1.0], "f": "R[1,1]^2", "N": 8, "M": 100,
           "scheme": "tensor"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description with every default filled in."""

    model: CoupledModelSpec
    seed: int = 0
    quad_n: int = 40
    output: str = "out"
    parisi: dict = field(default_factory=dict)
    fixed_point: dict = field(default_factory=dict)
    bound: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    gg: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = self.model.to_dict()
        out.update({"seed": self.seed, "quad_n": self.quad_n, "output": self.output})
        for name in BLOCK_DEFAULTS:
            out[name] = dict(getattr(self, name))
        return out

    def sha256(self) -> str:
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()


def serialize_config(cfg: ExperimentConfig) -> str:
    """Normalized YAML text; ``parse_config`` of it gives back ``cfg``."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=None)


# --- validation helpers -----------------------------------------------------

def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _number(path, v, lo=None, hi=None, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {v!r}")
    if integer and (not float(v).is_integer()):
        _fail(path, f"expected an integer, got {v!r}")
    v = int(v) if integer else float(v)
    if not np.isfinite(v):
        _fail(path, "must be finite")
    if lo is not None and v < lo:
        _fail(path, f"must be >= {lo}")
    if hi is not None and v > hi:
        _fail(path, f"must be <= {hi}")
    return v


def _number_list(path, v):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        _fail(path, "expected a nonempty list of numbers")
    return [_number(f"{path}[{i}]", x) for i, x in enumerate(v)]


def _mapping(path, v, allowed):
    if v is None:
        return {}
    if not isinstance(v, dict):
        _fail(path, "expected a mapping")
    for key in v:
        if key not in allowed:
            _fail(f"{path}.{key}" if path else str(key), "unknown key")
    return v


def _block(name, raw):
    defaults = BLOCK_DEFAULTS[name]
    raw = _mapping(name, raw, defaults)
    out = {k: raw.get(k, v) for k, v in defaults.items()}
    p = lambda key: f"{name}.{key}"
    if name == "parisi":
        out["k"] = _number(p("k"), out["k"], 0, 6, integer=True)
        out["restarts"] = _number(p("restarts"), out["restarts"], 1, 64, integer=True)
    elif name == "fixed_point":
        out["tol"] = _number(p("tol"), out["tol"], 1e-15, 1e-2)
        for key in ("c1", "c2"):
            if out[key] is not None:
                out[key] = _number(p(key), out[key], 0.0, 1.0)
                if out[key] == 0.0:
                    _fail(p(key), "must be > 0")
    elif name == "bound":
        grid = out["u_grid"]
        if isinstance(grid, dict):
            _mapping(p("u_grid"), grid, ("start", "stop", "num"))
            start = _number(p("u_grid.start"), grid.get("start", -0.5), -1, 1)
            stop = _number(p("u_grid.stop"), grid.get("stop", 0.5), -1, 1)
            num = _number(p("u_grid.num"), grid.get("num", 21), 1, 10001, integer=True)
            out["u_grid"] = {"start": start, "stop": stop, "num": num}
        else:
            out["u_grid"] = [_number(f"{p('u_grid')}[{i}]", x, -1, 1)
                             for i, x in enumerate(_number_list(p("u_grid"), grid))]
        if out["schedule"] not in ("band", "manageable"):
            _fail(p("schedule"), "must be 'band' or 'manageable'")
        out["iota"] = _number(p("iota"), out["iota"], 1, 8, integer=True)
        out["k"] = _number(p("k"), out["k"], 0, 6, integer=True)
        for key in ("v1", "v2"):
            if out[key] is not None:
                out[key] = _number(p(key), out[key], 0.0, 1.0)
                if not 0.0 < out[key] < 1.0:
                    _fail(p(key), "must lie in (0,1)")
    elif name in ("simulate", "gg"):
        out["N"] = _number(p("N"), out["N"], 1, 20, integer=True)
        out["M"] = _number(p("M"), out["M"], 2, 10 ** 6, integer=True)
        if out["scheme"] not in ("tensor", "config-cholesky"):
            _fail(p("scheme"), "must be 'tensor' or 'config-cholesky'")
        if name == "gg":
            out["n"] = _number(p("n"), out["n"], 1, 16, integer=True)
            out["psi"] = _number_list(p("psi"), out["psi"])
            if not isinstance(out["f"], (str, int, float)) or isinstance(out["f"], bool):
                _fail(p("f"), "expected a polynomial expression string")
            out["f"] = str(out["f"])
            from .sim import FunctionSpec
            try:
                FunctionSpec.parse(out["f"])
            except DomainError as exc:
                _fail(p("f"), str(exc))
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML experiment document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown line"
        raise ConfigError(f"parse error at {where}: {getattr(exc, 'problem', exc)}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    _mapping("", raw, _TOP_KEYS)
    if "beta1" not in raw:
        raise ConfigError("beta1: missing required key")
    beta1 = _number_list("beta1", raw["beta1"])
    beta2 = _number_list("beta2", raw.get("beta2", beta1))
    t = _number_list("t", raw.get("t", [1.0]))
    if any(not 0.0 <= v <= 1.0 for v in t):
        raise ConfigError("t: t_p must lie in [0,1]")
    fld = _mapping("field", raw.get("field"), _FIELD_KEYS)
    fvals = {k: _number(f"field.{k}", fld.get(k, 0.0)) for k in _FIELD_KEYS}
    try:
        model = CoupledModelSpec(MixtureSpec(beta1), MixtureSpec(beta2), t, FieldLaw(**fvals))
    except DomainError as exc:
        raise ConfigError(f"model: {exc}") from exc
    seed = _number("seed", raw.get("seed", 0), 0, 2 ** 64 - 1, integer=True)
    quad_n = _number("quad_n", raw.get("quad_n", 40), 4, 200, integer=True)
    output = raw.get("output", "out")
    if not isinstance(output, str) or not output:
        _fail("output", "expected a nonempty path string")
    blocks = {name: _block(name, raw.get(name)) for name in BLOCK_DEFAULTS}
    return ExperimentConfig(model, seed, quad_n, output, **blocks)


# --- output -----------------------------------------------------------------

def _atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class _Output:
    def __init__(self, cfg: ExperimentConfig, out_dir: str, stamp: bool):
        self.dir = out_dir
        self.meta = {"config_sha256": cfg.sha256(), "seed": cfg.seed, "version": __version__}
        if stamp:
            self.meta["timestamp"] = datetime.now(timezone.utc).isoformat()
        self.written = []

    def csv(self, name, header, rows):
        lines = [f"# {k}: {v}" for k, v in self.meta.items()]
        lines.append(",".join(header))
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        self._write(name, "\n".join(lines) + "\n")

    def json(self, name, payload):
        doc = dict(self.meta)
        doc.update(payload)
        self._write(name, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")

    def _write(self, name, text):
        path = os.path.join(self.dir, name)
        _atomic_write(path, text)
        self.written.append(path)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if np.isfinite(f) else str(f)
    return v


# --- commands ---------------------------------------------------------------

def _notes(cfg):
    fl = cfg.model.field_law
    notes = []
    for j, (mean, std) in enumerate(((fl.mean1, fl.std1), (fl.mean2, fl.std2)), start=1):
        if std == 0.0 and mean != 0.0:
            notes.append(f"system {j}: {CONSTANT_FIELD_NOTE}")
    return notes


def _cmd_mixture_info(cfg, out):
    from .chaos import at_index, rs_fixed_point
    m = cfg.model
    systems = {}
    for j in (1, 2):
        spec, fld = m.spec(j), m.field_law.marginal(j)
        c = rs_fixed_point(spec, fld, cfg.quad_n)
        systems[f"system{j}"] = {
            "betas": list(spec.betas),
            "xi(1)": xi_eval(spec, 1.0), "xi'(1)": xi_eval(spec, 1.0, 1),
            "xi''(1)": xi_eval(spec, 1.0, 2), "theta(1)": theta_eval(spec, 1.0),
            "rs_fixed_point": c, "at_index": at_index(spec, fld, c, cfg.quad_n),
        }
    rep = diagnose_conditions(m)
    out.json("mixture-info.json", {
        **systems,
        "cross_coefficients": list(m.cross_coefficients),
        "cauchy_schwarz_gap(1,1)": cauchy_schwarz_gap(m, 1.0, 1.0),
        "conditions": {"proportionality_nu": rep.proportionality_nu,
                       "deviating_index": rep.deviating_index,
                       "shared_support": list(rep.shared_support),
                       "proportional_set": list(rep.proportional_set),
                       "notes": rep.notes},
        "notes": _notes(cfg),
    })


def _solutions(cfg):
    from .parisi import evaluate_functional, minimize_functional, stationarity_residuals
    res = {}
    for j in (1, 2):
        spec, fld = cfg.model.spec(j), cfg.model.field_law.marginal(j)
        if j == 2 and spec == cfg.model.spec1 and fld == cfg.model.field_law.marginal(1):
            res[2] = res[1]
            continue
        mini = minimize_functional(spec, fld, cfg.parisi["k"], cfg.parisi["restarts"],
                                   cfg.seed, cfg.quad_n)
        sol = evaluate_functional(spec, fld, mini.triplet, cfg.quad_n)
        try:
            resid = list(stationarity_residuals(spec, fld, mini.triplet, cfg.quad_n,
                                                solution=sol))
        except DomainError:
            # merged or boundary atoms: the residuals are undefined there
            resid = None
        res[j] = (mini, sol, resid)
    return res


def _c_values(cfg, sols):
    from .chaos import support_min
    c = []
    for j, key in ((1, "c1"), (2, "c2")):
        given = cfg.fixed_point[key]
        c.append(given if given is not None else support_min(sols[j][0].triplet))
    return c


def _cmd_parisi(cfg, out):
    sols = _solutions(cfg)
    payload = {}
    for j in (1, 2):
        mini, sol, resid = sols[j]
        payload[f"system{j}"] = {"value": mini.value, "converged": mini.converged,
                                 "triplet": mini.triplet.to_dict(),
                                 "stationarity_residuals": resid,
                                 "restart_values": list(mini.restart_values)}
    payload["notes"] = _notes(cfg)
    out.json("parisi.json", payload)
    return sols


def _fixed_point(cfg, sols):
    from .chaos import find_uf
    c1, c2 = _c_values(cfg, sols)
    if c1 <= 0.0 or c2 <= 0.0:
        raise DomainError(f"c1={c1}, c2={c2}: the coupled map needs c_j > 0; "
                          "set fixed_point.c1/c2 or use a nondegenerate field")
    fp = find_uf(cfg.model, sols[1][1], sols[2][1], c1, c2, cfg.fixed_point["tol"],
                 cfg.quad_n)
    return fp, c1, c2


def _cmd_fixed_point(cfg, out):
    sols = _solutions(cfg)
    fp, c1, c2 = _fixed_point(cfg, sols)
    out.json("fixed-point.json", {"u_f": fp.u_f, "residual": fp.residual,
                                  "max_abs_derivative": fp.max_abs_derivative,
                                  "contraction": fp.contraction, "method": fp.method,
                                  "iterations": fp.iterations, "c1": c1, "c2": c2,
                                  "notes": _notes(cfg)})


def _u_grid(cfg):
    g = cfg.bound["u_grid"]
    if isinstance(g, dict):
        return np.linspace(g["start"], g["stop"], g["num"])
    return np.asarray(g, dtype=float)


def _band_rows(cfg, sols, c1, c2, us):
    from .guerra import chaos_band_bound
    v1 = cfg.bound["v1"] if cfg.bound["v1"] is not None else c1
    v2 = cfg.bound["v2"] if cfg.bound["v2"] is not None else c2
    if not (0.0 < v1 < 1.0 and 0.0 < v2 < 1.0):
        raise DomainError(f"band bound needs 0 < v_j < 1, got v1={v1}, v2={v2}")
    lim = np.sqrt(v1 * v2)
    rows = []
    for u in us:
        if abs(u) > lim:
            continue
        t = chaos_band_bound(cfg.model, sols[1][1], sols[2][1], c1, c2, v1, v2, float(u),
                             cfg.quad_n, return_terms=True)
        rows.append((float(u), t["bound"], t["P1"], t["P2"], t["penalty"],
                     t["positive_parts"]))
    return rows


def _cmd_bound(cfg, out):
    us = _u_grid(cfg)
    header = ("u", "bound", "P1", "P2", "penalty", "positive_parts")
    if cfg.bound["schedule"] == "band":
        sols = _solutions(cfg)
        c1, c2 = _c_values(cfg, sols)
        rows = _band_rows(cfg, sols, c1, c2, us)
    else:
        rows = _manageable_rows(cfg, us)
    out.csv("bound.csv", header, rows)


def _manageable_rows(cfg, us):
    from .chaos import rs_fixed_point
    from .guerra import manageable_bound_terms
    from .parisi import OrderParameterTriplet
    if cfg.bound["k"] != 0 or cfg.bound["iota"] != 1:
        raise ConfigError("bound: the manageable schedule from the CLI supports k=0, iota=1 "
                          "(replica-symmetric triplets sharing m)")
    trips = []
    for j in (1, 2):
        c = rs_fixed_point(cfg.model.spec(j), cfg.model.field_law.marginal(j), cfg.quad_n)
        trips.append(OrderParameterTriplet.replica_symmetric(c))
    lim = np.sqrt(trips[0].q[1] * trips[1].q[1])
    rows = []
    for u in us:
        if abs(u) > lim:
            continue
        t = manageable_bound_terms(cfg.model, trips[0], trips[1], 1, float(u), cfg.quad_n)
        rows.append((float(u), t["bound"], t["P1"], t["P2"], t["penalty"], t["sub_iota"]))
    return rows


def _simulate(cfg):
    from .sim import overlap_statistics
    s = cfg.simulate
    return overlap_statistics(cfg.model, s["N"], s["M"], cfg.seed, s["scheme"])


def _cmd_simulate(cfg, out):
    rep = _simulate(cfg)
    order = np.argsort(rep.u)
    out.csv("shells.csv", ("u", "shell_logsum", "se"),
            [(rep.u[d], rep.p_shell[d], rep.p_shell_se[d]) for d in order])
    out.csv("histogram.csv", ("bin_lo", "bin_hi", "mass_R", "mass_R1", "mass_R2", "se_R",
                              "se_R1", "se_R2"), rep.histogram_rows())
    out.json("simulate.json", {"N": rep.N, "M": rep.M, "p1": rep.p1, "p1_se": rep.p1_se,
                               "p2": rep.p2, "p2_se": rep.p2_se,
                               "moments": {k: list(v) for k, v in rep.moments.items()}})


def _cmd_gg(cfg, out):
    from .sim import FunctionSpec, gg_residuals
    g = cfg.gg
    res = gg_residuals(cfg.model, g["N"], g["M"], g["n"], g["psi"], FunctionSpec.parse(g["f"]),
                       cfg.seed, g["scheme"])
    out.csv("gg.csv", ("functional", "n", "estimate", "se"), res.rows())


def _cmd_chaos_scan(cfg, out):
    sols = _solutions(cfg)
    fp, c1, c2 = _fixed_point(cfg, sols)
    lim = np.sqrt(c1 * c2)
    us = lim * np.linspace(-1.0, 1.0, 41)
    rows = _band_rows(cfg, sols, c1, c2, us)
    rep = _simulate(cfg)
    hist = rep.histogram_rows()
    mode = max(hist, key=lambda r: r[2])
    out.json("chaos-scan.json", {
        "u_f": fp.u_f, "residual": fp.residual, "max_abs_derivative": fp.max_abs_derivative,
        "c1": c1, "c2": c2, "P1": sols[1][0].value, "P2": sols[2][0].value,
        "band_bound": [dict(zip(("u", "bound", "P1", "P2", "penalty", "positive_parts"), r))
                       for r in rows],
        "histogram": [dict(zip(("bin_lo", "bin_hi", "mass_R", "mass_R1", "mass_R2", "se_R",
                                "se_R1", "se_R2"), r)) for r in hist],
        "mode_bin": [mode[0], mode[1]],
        "mode_bin_contains_u_f": bool(mode[0] <= fp.u_f <= mode[1]),
        "N": rep.N, "M": rep.M, "notes": _notes(cfg)})


_HANDLERS = {"mixture-info": _cmd_mixture_info, "parisi": _cmd_parisi,
             "fixed-point": _cmd_fixed_point, "bound": _cmd_bound, "simulate": _cmd_simulate,
             "gg-check": _cmd_gg, "chaos-scan": _cmd_chaos_scan}


def run(command: str, cfg: ExperimentConfig, out_dir: str | None = None,
        stamp: bool = False) -> list[str]:
    """Execute ``command``; returns the paths written. Errors propagate."""
    if command not in _HANDLERS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
    out = _Output(cfg, out_dir or cfg.output, stamp)
    _HANDLERS[command](cfg, out)
    return out.written


def _parser():
    p = argparse.ArgumentParser(prog="spinchaos", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML experiment file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--quad-n", type=int, help="override the quadrature size")
    p.add_argument("--out", help="output directory (default: config 'output')")
    p.add_argument("--stamp", action="store_true", help="add a timestamp to output headers")
    p.add_argument("--version", action="version", version=__version__)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = parse_config(text)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = _number("--seed", args.seed, 0, 2 ** 64 - 1, integer=True)
        if args.quad_n is not None:
            overrides["quad_n"] = _number("--quad-n", args.quad_n, 4, 200, integer=True)
        if overrides:
            cfg = ExperimentConfig(**{**cfg.__dict__, **overrides})
        for path in run(args.command, cfg, args.out, args.stamp):
            print(path)
        return 0
    except SizeGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

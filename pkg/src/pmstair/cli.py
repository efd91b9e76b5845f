"""Configuration-driven command line: solves and experiments, CSV/JSON output.

Config files are flat ``key = value`` lines (``#`` comments).  Forcing specs:
``affine:M,c``, ``step:base;pos,height;pos,height;...``, ``smooth:<name>``
with named builtins ``sin`` (sin(2*pi*x)) and ``poly3`` (x^3).  Outputs are
deterministic: fixed field order, floats printed with 17 significant digits.

Exit codes: 0 success, 2 validation error, 3 solver budget error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

from .analysis import (PHI_BATTERY, blowup_experiment, scaling_experiment,
                       strict_convergence_report, varifold_lhs, varifold_rhs)
from .energy import SMOOTH_BUILTINS, Affine, Forcing, Step, dpmf_energy
from .solve import (ALPHA_LIMIT, BudgetExceededError, SolveOptions, minimize_dpmf,
                    mu_bounds, mu_numeric, mu_star_formula)
from .staircase import (Staircase, check_local_min_properties, hv_params,
                        staircase_stepfn)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BUDGET = 3

COMMANDS = ("minimize", "scaling", "blowup", "varifold", "mu-table", "check-localmin")


def fmt(x) -> str:
    """17-significant-digit decimal rendering used in every output file."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class ExperimentConfig:
    command: str = ""
    forcing: str = "affine:1,0"
    beta: float = 1.0
    alpha: float = ALPHA_LIMIT
    n: int = 1000
    n_list: tuple = ()
    L_list: tuple = (2.0, 5.0, 10.0)
    M_list: tuple = (1.0,)
    center: float = 0.5
    variant: str = "w"
    resolution: int = 1024
    steps: int = 4
    tol: float = 1e-9
    seed: int = 0
    output: str = ""
    format: str = "csv"
    label_count: int = 64
    refinement_levels: int = 3
    window: int = 8
    max_sweeps: int = 50

    def validate(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        for name in ("beta", "alpha", "center", "tol"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if any(n < 2 for n in self.n_list):
            raise ValueError("every entry of n_list must be >= 2")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if not self.output:
            raise ValueError("output path is required")
        if self.variant not in ("w", "v"):
            raise ValueError("variant must be w or v")


_TUPLE_FLOAT = {"L_list", "M_list"}
_TUPLE_INT = {"n_list"}
_INT = {"n", "seed", "resolution", "steps", "label_count", "refinement_levels",
        "window", "max_sweeps"}
_FLOAT = {"beta", "alpha", "center", "tol"}
_STR = {"command", "forcing", "variant", "output", "format"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _TUPLE_FLOAT:
        return tuple(float(t) for t in raw.split(",") if t.strip())
    if key in _TUPLE_INT:
        return tuple(int(t) for t in raw.split(",") if t.strip())
    if key in _INT:
        return int(raw)
    if key in _FLOAT:
        return float(raw)
    if key in _STR:
        return raw
    raise ValueError(f"unknown config key {key!r}")


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        out[key] = _coerce(key, raw)
    return out


def load_config(command: str, path: str | None, overrides) -> ExperimentConfig:
    data = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            data = parse_config_text(fh.read())
    for item in overrides or ():
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        data[key.strip()] = _coerce(key.strip(), raw)
    data["command"] = command
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**data)
    cfg.validate()
    return cfg


def parse_forcing(spec: str, domain: tuple = (0.0, 1.0)) -> Forcing:
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    if kind == "affine":
        parts = [p for p in rest.split(",") if p.strip()]
        if len(parts) != 2:
            raise ValueError(f"affine forcing needs 'affine:M,c', got {spec!r}")
        return Affine(slope=float(parts[0]), offset=float(parts[1]), domain=domain)
    if kind == "step":
        groups = [g for g in rest.split(";") if g.strip()]
        if not groups:
            raise ValueError(f"step forcing needs 'step:base;pos,height;...', got {spec!r}")
        base = float(groups[0])
        jumps = []
        for g in groups[1:]:
            pos, height = g.split(",")
            jumps.append((float(pos), float(height)))
        return Step(base=base, step_jumps=tuple(jumps), domain=domain)
    if kind == "smooth":
        name = rest.strip()
        if name not in SMOOTH_BUILTINS:
            raise ValueError(f"unknown smooth builtin {name!r}; have {sorted(SMOOTH_BUILTINS)}")
        return SMOOTH_BUILTINS[name](domain)
    raise ValueError(f"unknown forcing kind {kind!r} in {spec!r}")


def _solve_options(cfg: ExperimentConfig) -> SolveOptions:
    return SolveOptions(L_list=cfg.L_list, label_count=cfg.label_count,
                        refinement_levels=cfg.refinement_levels,
                        window=cfg.window, max_sweeps=cfg.max_sweeps)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def to_json(obj) -> str:
    """Minimal JSON writer: sorted keys, 17-significant-digit floats."""
    buf = io.StringIO()
    _write_json(buf, obj)
    return buf.getvalue()


def _write_json(buf, obj, indent: int = 0):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            buf.write("{}")
            return
        buf.write("{\n")
        items = sorted(obj.items())
        for i, (k, v) in enumerate(items):
            buf.write(f'{pad}  "{k}": ')
            _write_json(buf, v, indent + 1)
            buf.write(",\n" if i < len(items) - 1 else "\n")
        buf.write(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            buf.write("[]")
            return
        buf.write("[\n")
        for i, v in enumerate(obj):
            buf.write(pad + "  ")
            _write_json(buf, v, indent + 1)
            buf.write(",\n" if i < len(obj) - 1 else "\n")
        buf.write(pad + "]")
    elif isinstance(obj, bool):
        buf.write("true" if obj else "false")
    elif isinstance(obj, (int,)):
        buf.write(str(obj))
    elif isinstance(obj, float):
        buf.write(fmt(obj))
    elif obj is None:
        buf.write("null")
    else:
        buf.write('"' + str(obj).replace("\\", "\\\\").replace('"', '\\"') + '"')


def write_rows(path: str, fieldnames, rows, out_format: str):
    """Write a row table as CSV (RFC-4180 quoting) or JSON (sorted keys)."""
    if out_format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
            writer.writerow(fieldnames)
            for row in rows:
                writer.writerow([_cell(row[k]) for k in fieldnames])
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(to_json([{k: row[k] for k in fieldnames} for row in rows]))
            fh.write("\n")


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt(v)
    return v


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_minimize(cfg: ExperimentConfig):
    f = parse_forcing(cfg.forcing)
    report = minimize_dpmf(f, cfg.beta, cfg.n, _solve_options(cfg))
    e = report.energy
    rows = [
        {"key": "n", "value": cfg.n},
        {"key": "beta", "value": cfg.beta},
        {"key": "forcing", "value": cfg.forcing},
        {"key": "energy_roughness", "value": e.roughness},
        {"key": "energy_fidelity", "value": e.fidelity},
        {"key": "energy_total", "value": e.total},
        {"key": "iterations", "value": report.iterations},
        {"key": "converged", "value": report.converged},
    ]
    for stage, energy in report.pipeline_trace:
        rows.append({"key": f"stage_{stage}", "value": energy})
    for z, v in enumerate(report.minimizer.values):
        rows.append({"key": str(z), "value": float(v)})
    write_rows(cfg.output, ["key", "value"], rows, cfg.format)
    return f"minimize: n={cfg.n} total={fmt(e.total)}"


def _cmd_scaling(cfg: ExperimentConfig):
    f = parse_forcing(cfg.forcing)
    n_list = cfg.n_list or (cfg.n,)
    opts = _solve_options(cfg)
    workers = max(1, int(os.environ.get("PMSTAIR_THREADS", "1")))
    reports = {}
    if workers > 1 and len(n_list) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = {n: pool.submit(minimize_dpmf, f, cfg.beta, n, opts) for n in n_list}
            reports = {n: fut.result() for n, fut in futs.items()}
    scaling = scaling_experiment(f, cfg.beta, n_list, opts, reports=reports)
    rows = [{"n": r.n, "omega": r.omega, "m_n": r.m_n, "ratio": r.ratio,
             "limit_value": r.limit_value} for r in scaling]
    write_rows(cfg.output, ["n", "omega", "m_n", "ratio", "limit_value"], rows, cfg.format)
    return f"scaling: {len(rows)} rows, limit={fmt(scaling[0].limit_value)}"


def _cmd_blowup(cfg: ExperimentConfig):
    f = parse_forcing(cfg.forcing)
    result = blowup_experiment(f, cfg.beta, cfg.n, cfg.center, cfg.variant,
                               _solve_options(cfg))
    fit = result.fit
    pred_h, pred_v = result.predicted if result.predicted else (0.0, 0.0)
    rows = [
        {"key": "n", "value": cfg.n},
        {"key": "center", "value": cfg.center},
        {"key": "variant", "value": cfg.variant},
        {"key": "predicted_H", "value": pred_h},
        {"key": "predicted_V", "value": pred_v},
        {"key": "degenerate", "value": result.predicted is None},
        {"key": "jumps_detected", "value": 0 if fit is None else len(fit.jump_positions)},
        {"key": "H_est", "value": 0.0 if fit is None else fit.H},
        {"key": "V_est", "value": 0.0 if fit is None else fit.V},
        {"key": "tau0_est", "value": 0.0 if fit is None else fit.tau0},
        {"key": "residual", "value": 0.0 if fit is None else fit.residual},
    ]
    write_rows(cfg.output, ["key", "value"], rows, cfg.format)
    got = "no fit" if fit is None else f"H={fmt(fit.H)} V={fmt(fit.V)}"
    return f"blowup: predicted H={fmt(pred_h)} V={fmt(pred_v)}; {got}"


def _cmd_varifold(cfg: ExperimentConfig):
    f = parse_forcing(cfg.forcing)
    n_list = cfg.n_list or (cfg.n,)
    opts = _solve_options(cfg)
    rows = []
    for n in sorted(n_list):
        report = minimize_dpmf(f, cfg.beta, n, opts)
        for name in sorted(PHI_BATTERY):
            phi = PHI_BATTERY[name]
            lhs = varifold_lhs(report.minimizer, phi)
            rhs = varifold_rhs(f, phi)
            rows.append({"n": n, "phi": name, "lhs": lhs, "rhs_total": rhs.total,
                         "rhs_ac": rhs.ac_term, "rhs_diffuse_plus": rhs.diffuse_plus,
                         "rhs_diffuse_minus": rhs.diffuse_minus,
                         "rhs_jump_plus": rhs.jump_plus, "rhs_jump_minus": rhs.jump_minus,
                         "abs_err": abs(lhs - rhs.total)})
    write_rows(cfg.output, ["n", "phi", "lhs", "rhs_total", "rhs_ac",
                            "rhs_diffuse_plus", "rhs_diffuse_minus", "rhs_jump_plus",
                            "rhs_jump_minus", "abs_err"], rows, cfg.format)
    return f"varifold: {len(rows)} rows"


def _cmd_mu_table(cfg: ExperimentConfig):
    rows = []
    for L in cfg.L_list:
        for M in cfg.M_list:
            formula = mu_star_formula(cfg.alpha, cfg.beta, L, M)
            lower, upper = mu_bounds(cfg.alpha, cfg.beta, L, M)
            free = mu_numeric(cfg.alpha, cfg.beta, L, M, bc=False, resolution=cfg.resolution)
            pinned = mu_numeric(cfg.alpha, cfg.beta, L, M, bc=True, resolution=cfg.resolution)
            rows.append({"alpha": cfg.alpha, "beta": cfg.beta, "L": L, "M": M,
                         "formula_value": formula.value, "formula_m": formula.m_jumps,
                         "lower": lower, "upper": upper,
                         "numeric_free": free.value, "numeric_bc": pinned.value,
                         "resolution": cfg.resolution})
    write_rows(cfg.output, ["alpha", "beta", "L", "M", "formula_value", "formula_m",
                            "lower", "upper", "numeric_free", "numeric_bc", "resolution"],
               rows, cfg.format)
    return f"mu-table: {len(rows)} rows"


def _cmd_check_localmin(cfg: ExperimentConfig):
    M = cfg.M_list[0]
    H, V = hv_params(cfg.beta, M, cfg.alpha)
    if H is None:
        rows = [{"check": "degenerate", "passed": True, "residual": 0.0}]
        write_rows(cfg.output, ["check", "passed", "residual"], rows, cfg.format)
        return "check-localmin: degenerate (M=0)"
    window = (0.0, 2.0 * cfg.steps * H)
    v = staircase_stepfn(Staircase(H=H, V=V), window)
    report = check_local_min_properties(v, M, window, cfg.alpha, cfg.beta, cfg.tol)
    rows = []
    for name, check in (("interval_coverage", report.interval_coverage),
                        ("jump_symmetry", report.jump_symmetry),
                        ("plateau_levels", report.plateau_levels),
                        ("crossing_spacing", report.crossing_spacing)):
        rows.append({"check": name, "passed": check.passed, "residual": check.residual})
    write_rows(cfg.output, ["check", "passed", "residual"], rows, cfg.format)
    return f"check-localmin: all_passed={report.all_passed}"


_DISPATCH = {
    "minimize": _cmd_minimize,
    "scaling": _cmd_scaling,
    "blowup": _cmd_blowup,
    "varifold": _cmd_varifold,
    "mu-table": _cmd_mu_table,
    "check-localmin": _cmd_check_localmin,
}


def run(config: ExperimentConfig) -> int:
    """Dispatch a validated config; returns the process exit code."""
    try:
        config.validate()
        summary = _DISPATCH[config.command](config)
    except BudgetExceededError as exc:
        print(f"pmstair: budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, KeyError, OSError) as exc:
        print(f"pmstair: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(summary)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pmstair",
                                     description="Discrete Perona-Malik experiments")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, args.overrides)
    except (ValueError, OSError) as exc:
        print(f"pmstair: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())

"""
Command-line front end.

    coaldecomp run CONFIG [--threads N] [--output-dir PATH] [--quiet]
    coaldecomp validate CONFIG

Exit codes: 0 success, 2 configuration error, 3 estimation error. Errors are
also written to stderr as one JSON line ``{"error": <category>, "message": ...}``.

Config layout (JSON)::

    {
      "model": {"name": "ishigami", "a": 7, "b": 0.1},
      "inputs": {"type": "independent",
                 "marginals": [{"family": "uniform", "a": "-pi", "b": "pi"}, ...]},
      "qoi": "variance",            # variance | covariance | covmatrix | mmd
      "output": 0,                  # variance only
      "pair": [0, 1],               # covariance only
      "kernel": {"family": "rbf", "bandwidth": "median"},   # mmd only
      "n_outer": 2000, "n_inner": 200, "n_ref": 1000, "seed": 42,
      "emit_csv": true, "emit_shapley": false
    }

Numbers in model and input parameters may be written as multiples of pi
(``"pi"``, ``"-pi"``, ``"2*pi"``, ``"0.5pi"``).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .engine import DecompositionReport, decompose, default_threads
from .estimators import EstimationError, EstimatorBudget, KernelSpec, QoISpec
from .inputs import InputModel, input_model_from_dict
from .lattice import MAX_DIMENSION, format_subset, indices_from_mask, popcount
from .models import Model, model_from_dict

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

REPORT_KEYS = ("meta", "phi", "psi", "ratios", "diagnostics", "attribution")

_PI = re.compile(r"^\s*(-?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*$")


class ConfigError(ValueError):
    pass


def _number(v):
    if isinstance(v, str):
        m = _PI.match(v)
        if not m:
            raise ConfigError(f"cannot read {v!r} as a number")
        coef = float(m.group(2)) if m.group(2) not in ("", ".") else 1.0
        return (-1.0 if m.group(1) else 1.0) * coef * math.pi
    if isinstance(v, list):
        return [_number(x) for x in v]
    if isinstance(v, dict):
        return {k: _number(x) if k not in ("family", "type", "name", "model") else x
                for k, x in v.items()}
    return v


@dataclass
class ExperimentConfig:
    model: Model
    inputs: InputModel
    qoi: QoISpec
    budget: EstimatorBudget
    emit_csv: bool = True
    emit_shapley: bool = False
    output_dir: Optional[Path] = None


def _int(raw: dict, key: str, default: int) -> int:
    v = raw.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    return v


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a decoded config and build the experiment objects."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("model", "inputs", "qoi"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    inputs_raw = raw["inputs"]
    if not isinstance(inputs_raw, dict):
        raise ConfigError("'inputs' must be an object")
    d = len(inputs_raw.get("marginals", inputs_raw.get("mean", [])))
    if d > MAX_DIMENSION:
        raise ConfigError(f"d={d} exceeds the dimension cap of {MAX_DIMENSION}")
    try:
        inputs = input_model_from_dict(_number(inputs_raw))
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"inputs: {exc}") from None

    model_raw = raw["model"]
    if isinstance(model_raw, str):
        model_raw = {"name": model_raw}
    if not isinstance(model_raw, dict):
        raise ConfigError("'model' must be an object or a registered name")
    try:
        model = model_from_dict(_number(model_raw))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from None

    kind = raw["qoi"]
    try:
        if kind == "variance":
            qoi = QoISpec.variance(_int(raw, "output", 0))
        elif kind == "covariance":
            pair = raw.get("pair", [0, 1])
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ConfigError("pair must be a list of two output indices")
            qoi = QoISpec.covariance(*pair)
        elif kind == "covmatrix":
            qoi = QoISpec.covariance_matrix()
        elif kind == "mmd":
            kraw = raw.get("kernel", {})
            qoi = QoISpec.mean_mmd(KernelSpec(kraw.get("family", "rbf"), kraw.get("bandwidth", "median")))
        else:
            raise ConfigError(f"unknown qoi {kind!r}; expected variance, covariance, covmatrix or mmd")
        budget = EstimatorBudget(_int(raw, "n_outer", 2000), _int(raw, "n_inner", 200),
                                 _int(raw, "n_ref", 1000), _int(raw, "seed", 0))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None

    if model.d != inputs.d:
        raise ConfigError(f"model {model.name!r} takes {model.d} inputs but the input model has {inputs.d}")
    try:
        qoi.check_output_dim(model.k)
    except ValueError as exc:
        raise ConfigError(f"incompatible qoi: {exc}") from None

    out_dir = raw.get("output_dir")
    return ExperimentConfig(model, inputs, qoi, budget,
                            emit_csv=bool(raw.get("emit_csv", True)),
                            emit_shapley=bool(raw.get("emit_shapley", False)),
                            output_dir=Path(out_dir) if out_dir else None)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return parse_config(raw)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def _entries(report: DecompositionReport, table, se_table) -> list:
    return [{"subset": indices_from_mask(m), "value": _plain(table[m]), "std_error": _plain(se_table[m])}
            for m in range(len(table))]


def report_to_dict(report: DecompositionReport) -> dict:
    """JSON-ready view of a report; excludes wall time so reruns are byte-identical."""
    qoi = report.qoi.to_dict()
    meta = {
        "model": report.model.to_dict(),
        "inputs": report.inputs.to_dict(),
        "qoi": qoi,
        "budget": report.budget.to_dict(),
        "seed": int(report.budget.seed),
        "d": report.d,
        "k": report.model.k,
        "subset_convention": "1-based input indices; input i is bit i-1 of the mask",
    }
    if report.bandwidth is not None:
        meta["bandwidth"] = report.bandwidth
    ratios = None
    if report.ratios is not None:
        ratios = [{"subset": indices_from_mask(m), "value": float(report.ratios[m]),
                   "std_error": float(report.ratio_se[m])} for m in range(len(report.ratios))]
    diagnostics = {
        "total": _plain(report.total),
        "total_std_error": _plain(report.total_se),
        "sum_residual": _plain(report.sum_residual),
        "sum_tolerance": report.sum_tol,
        "sum_identity_ok": report.sum_identity_ok,
        "total_near_zero": report.total_near_zero,
        "fractional": report.fractional.to_dict(),
        "gradual": report.gradual.to_dict(),
        "std_error_note": "psi standard errors assume independent phi estimates across subsets (approximate)",
    }
    if report.dk_membership is not None:
        diagnostics["dk_membership"] = report.dk_membership
    out = {
        "meta": meta,
        "phi": _entries(report, report.phi, report.phi_se),
        "psi": _entries(report, report.psi, report.psi_se),
        "ratios": ratios,
        "diagnostics": diagnostics,
    }
    if report.attribution is not None:
        out["attribution"] = {
            "method": report.attribution.method,
            "values": report.attribution.values.tolist(),
            "std_errors": None if report.attribution.std_errors is None
            else report.attribution.std_errors.tolist(),
        }
    return out


def dumps_report(report: DecompositionReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, allow_nan=False) + "\n"


def _cell(v) -> str:
    v = _plain(v)
    return json.dumps(v) if isinstance(v, list) else repr(float(v))


def write_csv(report: DecompositionReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subset", "size", "phi", "phi_se", "psi", "psi_se", "ratio"])
        for m in range(len(report.phi)):
            ratio = "" if report.ratios is None else repr(float(report.ratios[m]))
            w.writerow([format_subset(m), popcount(m), _cell(report.phi[m]), _cell(report.phi_se[m]),
                        _cell(report.psi[m]), _cell(report.psi_se[m]), ratio])


def write_shapley_csv(report: DecompositionReport, path: Path) -> None:
    att = report.attribution
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["input", "shapley", "std_error"])
        for i, v in enumerate(att.values):
            se = "" if att.std_errors is None else repr(float(att.std_errors[i]))
            w.writerow([i + 1, repr(float(v)), se])


def _fmt(v) -> str:
    v = np.asarray(v)
    if v.ndim == 0:
        return f"{float(v):12.5g}"
    return np.array2string(v, precision=4, separator=",").replace("\n", "")


def summary(report: DecompositionReport) -> str:
    lines = [f"{report.model.name} | {report.inputs.kind} inputs | qoi={report.qoi.kind} | "
             f"d={report.d} | {report.wall_time:.2f}s"]
    lines.append(f"{'subset':>12} {'phi':>12} {'psi':>12} {'psi_se':>12} {'ratio':>10}")
    for m in range(len(report.phi)):
        ratio = "" if report.ratios is None else f"{report.ratios[m]:10.4f}"
        lines.append(f"{'{' + format_subset(m) + '}':>12} {_fmt(report.phi[m])} {_fmt(report.psi[m])} "
                     f"{_fmt(report.psi_se[m])} {ratio}")
    lines.append(f"fractional: {report.fractional.status}"
                 + (f" {[format_subset(m) for m in report.fractional.violations]}"
                    if report.fractional.violations else ""))
    lines.append(f"sum identity: {'ok' if report.sum_identity_ok else 'FAILED'}")
    if report.attribution is not None:
        lines.append("shapley: " + ", ".join(f"{v:.5g}" for v in report.attribution.values))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _fail(category: str, message: str, code: int) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    if not args.quiet:
        print(f"ok: {cfg.model.name}, {cfg.inputs.kind} inputs, d={cfg.inputs.d}, qoi={cfg.qoi.kind}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        threads = args.threads if args.threads is not None else default_threads()
        if threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {threads}")
    except (ConfigError, ValueError) as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    try:
        report = decompose(cfg.model, cfg.inputs, cfg.qoi, cfg.budget, threads=threads)
    except EstimationError as exc:
        return _fail("estimation", str(exc), EXIT_RUNTIME)

    config_path = Path(args.config)
    out_dir = Path(args.output_dir) if args.output_dir else (cfg.output_dir or config_path.parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = config_path.name[:-5] if config_path.name.endswith(".json") else config_path.name
    (out_dir / f"{stem}.report.json").write_text(dumps_report(report))
    if cfg.emit_csv:
        write_csv(report, out_dir / f"{stem}.csv")
    if cfg.emit_shapley and report.attribution is not None:
        write_shapley_csv(report, out_dir / f"{stem}.shapley.csv")
    if not args.quiet:
        print(summary(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coaldecomp",
                                     description="Möbius decomposition of model output quantities over input coalitions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("run", cmd_run, "estimate and decompose"),
                            ("validate", cmd_validate, "check a config without estimating")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--quiet", action="store_true")
        if name == "run":
            p.add_argument("--threads", type=int, default=None,
                           help="worker threads (default: $COALDECOMP_THREADS or 1); results do not depend on it")
            p.add_argument("--output-dir", default=None)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

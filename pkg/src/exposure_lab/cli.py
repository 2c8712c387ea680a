"""Command-line interface over JSON configs and CSV/JSON outputs.

Exit codes: 0 success, 2 malformed config or usage, 3 enumeration infeasible,
4 any other domain error. All warnings surface in the JSON ``warnings`` array
or on stderr for CSV output; numeric output is serialized at full precision
(17 significant digits round-trips float64).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from typing import Optional

import numpy as np

from . import library
from .errors import EnumerationInfeasible, ExposureLabError
from .estimators import EstimatorSpec, RealizedData, estimate
from .exact import (
    build_support,
    compute_exposure_law,
    compute_ground_truth,
    estimator_moments,
    tau_contrast,
    variance_estimator_expectation,
)
from .diagnostics import dependence_report
from .montecarlo import coverage_experiment, rate_experiment, run_replications
from .scenario import Scenario, correctly_specified_units, validate_scenario
from .variance import bias_decomposition, partial_interference_override

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENUMERATION = 3
EXIT_DOMAIN = 4


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _clean(obj):
    """Make a structure JSON-safe: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(payload: dict, out: Optional[str]) -> None:
    _emit(json.dumps(_clean(payload), indent=2) + "\n", out)


def _emit_csv(header: str, lines: list[str], out: Optional[str]) -> None:
    _emit(header + "\n" + "\n".join(lines) + ("\n" if lines else ""), out)


def _load_config(args) -> dict:
    config: dict = {}
    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
    for key in ("a", "b", "reps", "seed", "workers", "level", "q", "p", "override"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if getattr(args, "out", None):
        config["out"] = args.out
    if getattr(args, "format", None):
        config["format"] = args.format
    return config


def _scenario_from_config(config: dict) -> Scenario:
    spec = config.get("scenario", config)
    if isinstance(spec, str):
        with open(spec) as fh:
            spec = json.load(fh)
    if "family" in spec or "design" in spec:
        return library.scenario_from_json(spec)
    raise KeyError("config carries no scenario")


def _contrast(config: dict) -> tuple[int, int]:
    if "a" not in config or "b" not in config:
        raise KeyError("contrast labels a and b are required")
    a, b = int(config["a"]), int(config["b"])
    if a == b:
        raise KeyError("contrast labels must differ")
    return a, b


def _override_for(scenario: Scenario, config: dict):
    policy = config.get("override", "none")
    if policy in (None, "none", "natural"):
        return None
    if policy == "groups":
        if scenario.groups is None:
            return None
        return partial_interference_override(scenario.groups)
    raise KeyError(f"unknown override policy {policy!r}")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_describe(config: dict) -> int:
    scenario = _scenario_from_config(config)
    report = validate_scenario(scenario)
    payload = library.scenario_to_json(scenario)
    payload["valid"] = report.ok
    if not report.ok:
        payload["violations"] = list(report.violations)
    _emit_json(payload, config.get("out"))
    return EXIT_OK


def cmd_truth(config: dict) -> int:
    scenario = _scenario_from_config(config)
    a, b = _contrast(config)
    support = build_support(scenario)
    law = compute_exposure_law(scenario, support=support)
    truth = compute_ground_truth(scenario, law, support=support)
    payload = {
        "n": scenario.n,
        "a": a,
        "b": b,
        "tau": tau_contrast(truth, a, b),
        "tau_table": truth.tau,
        "conditional_means": truth.ybar,
        "marginal_probabilities": law.pi,
        "correctly_specified": correctly_specified_units(scenario).tolist(),
        "k1": truth.k1,
    }
    _emit_json(payload, config.get("out"))
    return EXIT_OK


def cmd_diagnose(config: dict) -> int:
    scenario = _scenario_from_config(config)
    a, b = _contrast(config)
    support = build_support(scenario)
    law = compute_exposure_law(scenario, support=support)
    truth = compute_ground_truth(scenario, law, support=support)
    report = dependence_report(
        scenario, law, truth, a, b,
        q=float(config.get("q", 1.0)),
        p=float(config.get("p", 2.0)),
        support=support,
    )
    if config.get("format", "json") == "csv":
        header, values = report.csv_row()
        _emit_csv(",".join(header), [",".join(_fmt(v) for v in values)], config.get("out"))
    else:
        _emit_json(report.to_dict(), config.get("out"))
    return EXIT_OK


def _read_dataset(path: str):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["unit"]))
    z = np.array([int(r["z"]) for r in rows])
    d = np.array([int(r["exposure"]) for r in rows])
    y = np.array([float(r["y"]) for r in rows])
    xcols = sorted(c for c in rows[0] if c.startswith("x"))
    x = None
    if xcols:
        x = np.array([[float(r[c]) for c in xcols] for r in rows])
    return RealizedData(z=z, exposures=d, y=y), x


def _read_probs(path: str, n: int) -> np.ndarray:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    K = max(int(r["d"]) for r in rows) + 1
    pi = np.zeros((n, K))
    for r in rows:
        pi[int(r["unit"]), int(r["d"])] = float(r["pi"])
    return pi


def cmd_estimate(config: dict, args) -> int:
    data, x = _read_dataset(args.data)
    pi = _read_probs(args.probs, data.n)
    a, b = _contrast(config)
    wanted = config.get("estimators", ["ht", "hajek"])
    predictor = None
    if args.predictor:
        if args.predictor == "zero":
            predictor = library.ZeroPredictor(data.n)
        elif args.predictor.startswith("constant:"):
            predictor = library.ConstantPredictor(data.n, float(args.predictor.split(":", 1)[1]))
        else:
            raise KeyError(f"unknown predictor {args.predictor!r}")
    results = {}
    warnings = []
    for name in wanted:
        spec = EstimatorSpec(name) if name != "difference" else EstimatorSpec(
            name, predictor=predictor or library.ZeroPredictor(data.n)
        )
        try:
            results[name] = estimate(spec, data, pi, a, b, covariates=x)
        except ExposureLabError as err:
            results[name] = None
            warnings.append(f"{name}: {err}")
    payload = {"a": a, "b": b, "estimates": results, "warnings": warnings}
    _emit_json(payload, config.get("out"))
    return EXIT_OK


def cmd_simulate(config: dict) -> int:
    scenario = _scenario_from_config(config)
    a, b = _contrast(config)
    wanted = config.get("estimators", ["ht", "hajek"])
    specs = [EstimatorSpec(k) for k in wanted]
    summary = run_replications(
        scenario,
        specs,
        a,
        b,
        reps=int(config["reps"]),
        seed=int(config["seed"]),
        workers=int(config.get("workers", 1)),
        include_variance=bool(config.get("with_variance", True)),
        level=float(config.get("level", 0.95)),
        override=_override_for(scenario, config),
    )
    if config.get("format", "csv") == "json":
        payload = {
            "scenario": summary.scenario,
            "n": summary.n,
            "a": a,
            "b": b,
            "reps": summary.reps,
            "tau": summary.tau,
            "estimators": {e.name: vars(e) for e in summary.estimators},
            "warnings": list(summary.warnings),
        }
        _emit_json(payload, config.get("out"))
    else:
        for note in summary.warnings:
            sys.stderr.write(f"warning: {note}\n")
        _emit_csv(summary.CSV_HEADER, summary.csv_lines(), config.get("out"))
    return EXIT_OK


def cmd_rates(config: dict) -> int:
    if "family" not in config:
        raise KeyError("rates needs a scenario family in the config")
    fspec = dict(config["family"])
    kind = fspec.pop("kind")

    def family(n: int) -> Scenario:
        return library.make_family(kind, n, **fspec)

    a, b = _contrast(config)
    table = rate_experiment(
        family,
        [int(v) for v in config["ns"]],
        reps=int(config["reps"]),
        seed=int(config["seed"]),
        a=a,
        b=b,
        workers=int(config.get("workers", 1)),
    )
    if config.get("format", "csv") == "json":
        payload = {
            "slope": table.slope,
            "rows": [vars(r) for r in table.rows],
        }
        _emit_json(payload, config.get("out"))
    else:
        _emit_csv(table.CSV_HEADER, table.csv_lines(), config.get("out"))
    return EXIT_OK


def cmd_coverage(config: dict) -> int:
    scenario = _scenario_from_config(config)
    a, b = _contrast(config)
    rows = coverage_experiment(
        scenario,
        a,
        b,
        reps=int(config["reps"]),
        seed=int(config["seed"]),
        override=_override_for(scenario, config),
        workers=int(config.get("workers", 1)),
        level=float(config.get("level", 0.95)),
    )
    if config.get("format", "json") == "csv":
        header = "method,level,coverage,mcse,mean_varest,negative_varest_share"
        lines = [
            ",".join(
                _fmt(v)
                for v in (r.method, r.level, r.coverage, r.mcse, r.mean_varest,
                          r.negative_varest_share)
            )
            for r in rows
        ]
        _emit_csv(header, lines, config.get("out"))
    else:
        _emit_json({"rows": [vars(r) for r in rows]}, config.get("out"))
    return EXIT_OK


def cmd_varbias(config: dict) -> int:
    scenario = _scenario_from_config(config)
    a, b = _contrast(config)
    support = build_support(scenario)
    law = compute_exposure_law(scenario, support=support)
    truth = compute_ground_truth(scenario, law, support=support)
    override = _override_for(scenario, config)
    decomp = bias_decomposition(scenario, law, truth, a, b, override=override, support=support)
    expectation = variance_estimator_expectation(
        scenario, law, a, b, override=override, support=support
    )
    from .estimators import HT

    exact_var = estimator_moments(scenario, law, truth, HT, a, b, support=support).variance
    payload = decomp.to_dict()
    payload.update(
        {
            "a": a,
            "b": b,
            "expected_variance_estimate": expectation,
            "exact_variance": exact_var,
            "reconciliation_residual": expectation - exact_var - decomp.total_bias,
        }
    )
    _emit_json(payload, config.get("out"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exposure-lab",
        description="Exposure-effect estimation, diagnostics, and verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("describe", "truth", "diagnose", "estimate", "simulate",
                 "rates", "coverage", "varbias"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config (scenario plus parameters)")
        p.add_argument("--a", type=int, help="first contrast label")
        p.add_argument("--b", type=int, help="second contrast label")
        p.add_argument("--reps", type=int, dest="reps")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--level", type=float)
        p.add_argument("--q", type=float, help="design-dependence exponent")
        p.add_argument("--p", type=float, help="positivity-norm exponent")
        p.add_argument("--override", choices=["none", "natural", "groups"])
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=["json", "csv"])
        if name == "estimate":
            p.add_argument("--data", required=True, help="dataset CSV: unit,z,exposure,y[,x1..]")
            p.add_argument("--probs", required=True, help="probability CSV: unit,d,pi")
            p.add_argument("--predictor", help="zero or constant:<value>")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "describe":
            return cmd_describe(config)
        if args.command == "truth":
            return cmd_truth(config)
        if args.command == "diagnose":
            return cmd_diagnose(config)
        if args.command == "estimate":
            return cmd_estimate(config, args)
        if args.command == "simulate":
            return cmd_simulate(config)
        if args.command == "rates":
            return cmd_rates(config)
        if args.command == "coverage":
            return cmd_coverage(config)
        if args.command == "varbias":
            return cmd_varbias(config)
        parser.error(f"unknown command {args.command}")
    except EnumerationInfeasible as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_ENUMERATION
    except (json.JSONDecodeError, KeyError, ValueError, OSError) as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_CONFIG
    except ExposureLabError as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

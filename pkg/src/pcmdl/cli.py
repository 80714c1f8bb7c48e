"""Command-line entry point: ``pcmdl <subcommand> [options]``.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import analytic
from .errors import NUMERICAL_ERRORS, InvalidConfig, IoFailure
from .harness import (
    ExperimentConfig,
    dumps,
    emit_outputs,
    format_float,
    run_bound_validation,
    run_convergence_experiment,
    run_perturbation_experiment,
    run_rate_checks,
    write_text,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with config overrides")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--trials", type=int, help="number of trials (overrides the config)")
    common.add_argument("--out-dir", type=Path, default=None, help="output directory (default: results)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="per-step output format")
    common.add_argument("--paper-defaults", action="store_true", help="start from the reference experiment settings")
    common.add_argument("--workers", type=int, default=1, help="worker processes for trial-parallel runs")

    parser = argparse.ArgumentParser(prog="pcmdl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("compare", parents=[common], help="PC vs BP convergence comparison")
    sub.add_parser("perturb", parents=[common], help="blockwise vs coordinated perturbation probe")
    sub.add_parser("rates", parents=[common], help="contraction, per-sweep descent and stationarity checks")
    sub.add_parser("bounds", parents=[common], help="Occam-bound coverage on fresh test data")
    sub.add_parser("gen-config", parents=[common], help="print the effective configuration")

    reg = sub.add_parser("regress", parents=[common], help="closed-form single-sample regression oracle")
    kind = reg.add_mutually_exclusive_group()
    kind.add_argument("--scalar", dest="vector", action="store_false", help="scalar instance (default)")
    kind.add_argument("--vector", dest="vector", action="store_true", help="vector instance")
    reg.add_argument("--x", default="1", help="input, comma separated for --vector")
    reg.add_argument("--y", default="1", help="target, comma separated for --vector")
    reg.add_argument("--sigma2", type=float, default=1.0)
    reg.add_argument("--alpha", type=float, default=1.0)
    reg.add_argument("--iterations", type=int, default=10)
    reg.set_defaults(vector=False)
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig.paper_defaults() if args.paper_defaults else ExperimentConfig()
    d = base.to_dict()
    if args.config is not None:
        try:
            overrides = json.loads(args.config.read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot read {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{args.config} is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise InvalidConfig("config file must hold a JSON object")
        for key in ("pc", "bp", "softplus_pc"):
            if isinstance(overrides.get(key), dict):
                overrides[key] = {**d[key], **overrides[key]}
        d.update(overrides)
    if args.seed is not None:
        d["base_seed"] = args.seed
    if args.trials is not None:
        d["trials"] = args.trials
    return ExperimentConfig.from_dict(d)


def _out_dir(args) -> Path:
    return args.out_dir if args.out_dir is not None else Path("results")


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise InvalidConfig(f"cannot parse vector {text!r}") from exc


def regress_result(args) -> dict[str, Any]:
    if args.iterations < 1:
        raise InvalidConfig("--iterations must be >= 1")
    try:
        if args.vector:
            inst = analytic.VectorInstance(_parse_vector(args.x), _parse_vector(args.y), args.sigma2, args.alpha)
            v_star, w_star = analytic.vector_fixed_point(inst)
            its = analytic.vector_pc_iterate(
                inst, np.zeros(inst.y.size), np.zeros((inst.y.size, inst.x.size)), args.iterations
            )
            energy_star = analytic.vector_energy(inst, v_star, w_star)
        else:
            inst = analytic.ScalarInstance(float(args.x), float(args.y), args.sigma2, args.alpha)
            v_star, w_star = analytic.scalar_fixed_point(inst)
            its = analytic.scalar_pc_iterate(inst, 0.0, 0.0, args.iterations)
            energy_star = analytic.scalar_energy(inst, v_star, w_star)
    except ValueError as exc:
        if isinstance(exc, NUMERICAL_ERRORS):
            raise
        raise InvalidConfig(str(exc)) from exc
    return {
        "experiment": "regress",
        "kind": "vector" if args.vector else "scalar",
        "instance": {"x": args.x, "y": args.y, "sigma2": args.sigma2, "alpha": args.alpha},
        "fixed_point": {"v": v_star, "w": w_star, "energy": energy_star},
        "iterates": [
            {"t": t, "v": it.v, "w": it.w, "energy": it.energy, "energy_half": it.energy_half}
            for t, it in enumerate(its)
        ],
    }


def _cells(x: Any) -> list[str]:
    return [format_float(float(v)) for v in np.ravel(x)]


def regress_table(result: dict[str, Any]) -> str:
    rows = [["t", "v", "w", "energy"]]
    for it in result["iterates"]:
        rows.append([str(it["t"]), " ".join(_cells(it["v"])), " ".join(_cells(it["w"])),
                     format_float(it["energy"])])
    fp = result["fixed_point"]
    rows.append(["inf", " ".join(_cells(fp["v"])), " ".join(_cells(fp["w"])), format_float(fp["energy"])])
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    return "".join("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in rows)


def regress_csv(result: dict[str, Any]) -> str:
    lines = ["t,v,w,energy,energy_half"]
    for it in result["iterates"]:
        lines.append(",".join([
            str(it["t"]), " ".join(_cells(it["v"])), " ".join(_cells(it["w"])),
            format_float(it["energy"]), format_float(it["energy_half"]),
        ]))
    return "\n".join(lines) + "\n"


def run(args: argparse.Namespace) -> int:
    if args.command == "regress":
        result = regress_result(args)
        print(dumps(result) if args.format == "json" else regress_table(result), end="")
        if args.out_dir is not None:
            if args.format == "json":
                write_text(args.out_dir / "regress.json", dumps(result))
            else:
                write_text(args.out_dir / "regress.csv", regress_csv(result))
        return EXIT_OK

    config = load_config(args)
    out = _out_dir(args)
    workers = max(1, args.workers)

    if args.command == "gen-config":
        text = dumps(config.to_dict())
        if args.out_dir is not None:
            write_text(args.out_dir / "config.json", text)
        else:
            print(text, end="")
        return EXIT_OK

    if args.command == "compare":
        res = run_convergence_experiment(config, workers)
        emit_outputs(res.summary(), out, "compare", res.runs, args.format)
        m = res.final_total_mean
        print(f"final mean codelength  pc {format_float(m['pc'])}  bp {format_float(m['bp'])}")
    elif args.command == "perturb":
        res = run_perturbation_experiment(config)
        emit_outputs(res.summary(), out, "perturb")
        print(f"decrease fraction  blockwise {res.blockwise.decrease_fraction}"
              f"  coordinated {res.coordinated.decrease_fraction}")
    elif args.command == "rates":
        res = run_rate_checks(config, workers)
        emit_outputs(res.summary(), out, "rates")
        print(f"geometric {res.geometric_ok}  descent {res.descent_ok}  stationarity {res.stationarity_ok}")
    elif args.command == "bounds":
        res = run_bound_validation(config, workers)
        emit_outputs(res.summary(), out, "bounds")
        print(f"violation frequency {res.violation_frequency} at delta {config.delta}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IoFailure, OSError) as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvalidConfig, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands: extract, basis, compose, sensitivity, sample. Exit codes are 0
on success, 1 on usage errors and 2 on numerical failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

from . import _jsonio
from .anova import AnchoredConfig, adaptive_decompose, sample_count, sensitivities
from .errors import NumericalError, TtAnovaError, UsageError
from .gpc_basis import GpcSurrogate
from .hier_quadrature import CrossSettings, custom_basis, standardize
from .high_level import HierarchySpec, run_hierarchy, sample_density
from .model_def import model_from_json

log = logging.getLogger("ttanova")

DEFAULTS = dict(order=3, deff=2, sigma=1e-2, m=9, eps=1e-12, max_rank=64, sweeps=10, seed=0,
                threads=1, n=5000, bins=50)


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(message)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model JSON file")
    common.add_argument("--surrogate", help="surrogate JSON file")
    common.add_argument("--hierarchy", help="hierarchy JSON file")
    common.add_argument("-p", "--order", type=int, default=DEFAULTS["order"])
    common.add_argument("--deff", type=int, default=DEFAULTS["deff"])
    common.add_argument("--sigma", type=float, default=DEFAULTS["sigma"])
    common.add_argument("--m", type=int, default=DEFAULTS["m"], help="Gauss points per parameter")
    common.add_argument("--eps", type=float, default=DEFAULTS["eps"])
    common.add_argument("--max-rank", type=int, default=DEFAULTS["max_rank"])
    common.add_argument("--sweeps", type=int, default=DEFAULTS["sweeps"])
    common.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    common.add_argument("--threads", type=int, default=DEFAULTS["threads"])
    common.add_argument("--n", type=int, default=DEFAULTS["n"], help="samples for densities")
    common.add_argument("--bins", type=int, default=DEFAULTS["bins"])
    common.add_argument("--raw", action="store_true", help="also write raw samples")
    common.add_argument("--out", default=".", help="output directory")
    parser = _Parser(prog="ttanova", description="Hierarchical uncertainty quantification")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("extract", parents=[common], help="sparse surrogate by adaptive anchored ANOVA")
    sub.add_parser("basis", parents=[common], help="custom basis and Gauss rule of a surrogate output")
    sub.add_parser("compose", parents=[common], help="two-level composition from a hierarchy file")
    sub.add_parser("sensitivity", parents=[common], help="main and total sensitivities")
    sub.add_parser("sample", parents=[common], help="density histogram by sampling a surrogate")
    return parser


def _require(args, name):
    value = getattr(args, name)
    if not value:
        raise _Usage(f"{args.command} needs --{name}")
    return Path(value)


def _read(path: Path):
    try:
        return _jsonio.read_json(path)
    except FileNotFoundError:
        raise _Usage(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise _Usage(f"{path}: invalid JSON ({exc})") from None


def _sensitivity_rows(report):
    return [(str(k), s, t) for k, s, t in report.rows()]


def _cross(args) -> CrossSettings:
    return CrossSettings(args.eps, args.max_rank, args.sweeps, args.seed)


def _cmd_extract(args, out: Path, summary: dict):
    spec = model_from_json(_read(_require(args, "model")))
    cfg = AnchoredConfig(args.deff, args.sigma, args.order, None, args.threads)
    result = adaptive_decompose(spec, spec.distributions, cfg)
    report = result.report()
    report["sample_count_formula"] = sample_count([len(s) for s in result.level_sets], args.order)
    _jsonio.write_json(out / "surrogate.json", result.assembled.to_json())
    _jsonio.write_json(out / "report.json", report)
    _jsonio.write_csv(out / "sensitivity.csv", ["param", "main", "total"],
                      _sensitivity_rows(sensitivities(result.assembled)))
    summary.update(samples_used=result.samples_used, model_evaluations=result.model_evaluations,
                   level_sizes=[len(s) for s in result.level_sets])


def _cmd_basis(args, out: Path, summary: dict):
    surrogate = GpcSurrogate.from_json(_read(_require(args, "surrogate")))
    z = standardize(surrogate)
    basis = custom_basis(z, args.order, args.m, _cross(args))
    obj = basis.to_json()
    obj.update(shift=z.shift, scale=z.scale)
    _jsonio.write_json(out / "basis.json", obj)
    _jsonio.write_csv(out / "quadrature.csv", ["node", "weight"],
                      zip(basis.rule.nodes.tolist(), basis.rule.weights.tolist()))
    summary.update(tt_ranks=basis.info["a_ranks"], moment_max_ranks=basis.info["moment_max_ranks"],
                   tensor_evaluations=basis.info["evaluations"])


def _cmd_compose(args, out: Path, summary: dict):
    path = _require(args, "hierarchy")
    spec = HierarchySpec.from_json(_read(path), base_dir=path.parent)
    result = run_hierarchy(spec, _cross(args), args.threads)
    groups = out / "groups"
    groups.mkdir(exist_ok=True)
    for g in result.groups:
        name = g["info"]["name"]
        _jsonio.write_json(groups / f"{name}_surrogate.json", g["surrogate"].to_json())
        basis = g["basis"].to_json()
        basis.update(shift=g["variable"].shift, scale=g["variable"].scale)
        _jsonio.write_json(groups / f"{name}_basis.json", basis)
    _jsonio.write_json(out / "high_level.json", result.surrogate.to_json())
    moments = dict(result.moments)
    moments["groups"] = [g["info"] for g in result.groups]
    moments["alg1_runs"] = result.alg1_runs
    moments["alg2_runs"] = result.alg2_runs
    _jsonio.write_json(out / "moments.json", moments)
    hist = sample_density(result.surrogate, args.n, args.bins, args.seed, result.variables, args.raw)
    _jsonio.write_csv(out / "density.csv", ["bin_left", "bin_right", "density"], hist.rows())
    if args.raw:
        _jsonio.write_csv(out / "samples.csv", ["value"], [(float(v),) for v in hist.samples])
    summary.update(testing_samples=result.moments["testing_samples"], alg1_runs=result.alg1_runs,
                   alg2_runs=result.alg2_runs,
                   tt_ranks={g["info"]["name"]: g["info"].get("a_ranks") for g in result.groups},
                   samples_used={g["info"]["name"]: g["info"].get("samples_used") for g in result.groups},
                   stage_times_s=result.timings)


def _cmd_sensitivity(args, out: Path, summary: dict):
    surrogate = GpcSurrogate.from_json(_read(_require(args, "surrogate")))
    _jsonio.write_csv(out / "sensitivity.csv", ["param", "main", "total"],
                      _sensitivity_rows(sensitivities(surrogate)))
    summary.update(terms=len(surrogate.coefficients))


def _cmd_sample(args, out: Path, summary: dict):
    surrogate = GpcSurrogate.from_json(_read(_require(args, "surrogate")))
    if any(getattr(d, "family", "") == "custom" for d in surrogate.distributions):
        raise _Usage("surrogates over intermediate variables are sampled by 'compose'")
    hist = sample_density(surrogate, args.n, args.bins, args.seed, None, args.raw)
    _jsonio.write_csv(out / "density.csv", ["bin_left", "bin_right", "density"], hist.rows())
    if args.raw:
        _jsonio.write_csv(out / "samples.csv", ["value"], [(float(v),) for v in hist.samples])
    summary.update(samples=args.n)


COMMANDS = {"extract": _cmd_extract, "basis": _cmd_basis, "compose": _cmd_compose,
            "sensitivity": _cmd_sensitivity, "sample": _cmd_sample}


def _configure_logging():
    level = os.environ.get("TTANOVA_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv=None) -> int:
    _configure_logging()
    start = time.perf_counter()
    try:
        args = _parser().parse_args(argv)
        if not args.command:
            raise _Usage("missing subcommand (extract, basis, compose, sensitivity, sample)")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary = {"subcommand": args.command,
                   "config": {k: getattr(args, k) for k in
                              ("order", "deff", "sigma", "m", "eps", "max_rank", "sweeps",
                               "seed", "threads", "n", "bins")}}
        COMMANDS[args.command](args, out, summary)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except UsageError as exc:
        print(f"usage error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except TtAnovaError as exc:  # pragma: no cover - every error belongs to one family
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    summary["wall_time_s"] = time.perf_counter() - start
    _jsonio.write_json(out / "run_summary.json", summary)
    log.info("done in %.3f s", summary["wall_time_s"])
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command-line front end.

Exit codes: 0 all checks pass, 1 a check failed, 2 invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ._io import csv_text, records_csv, svg_line_plot, write_text
from .config import ConfigError, ConfigFile, load_config
from .experiments import EXPERIMENTS, ExperimentConfig, ExperimentError, build_class, run_identity_suites
from .function_classes import build_bracket_cover, entropy_condition
from .lrd import CovarianceError, EmbeddingError, sample_path, validate_psd

log = logging.getLogger("lrdsep")

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2
FORMATS = ("json", "csv", "svg")


class InvalidInput(Exception):
    pass


def _formats(args, cfg: ConfigFile) -> set[str]:
    raw = args.format or ",".join(cfg.section("output").get("formats", ["json", "csv"]))
    chosen = {f.strip() for f in raw.split(",") if f.strip()}
    if bad := chosen - set(FORMATS):
        raise InvalidInput(f"unknown output formats {sorted(bad)}")
    return chosen


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, cfg: ConfigFile) -> int:
    model = cfg.model()
    sim = cfg.section("simulate")
    N = int(sim.get("N", 1024))
    seed = args.seed if args.seed is not None else sim.get("seed", 0)
    generator = sim.get("generator", "circulant")
    if N >= 2:
        report = validate_psd(model, min(N, 512) if generator == "cholesky" else N)
        if not report.valid:
            raise CovarianceError(f"covariance is not positive semidefinite at N={report.N} "
                                  f"(min eigenvalue {report.min_eigenvalue:.6g})", report.min_eigenvalue)
    path = sample_path(model, N, seed, generator)
    out = _out_dir(args)
    header = [f"x{i + 1}" for i in range(model.p)]
    write_text(out / "path.csv", csv_text(header, path.values.tolist()))
    write_text(out / "path.json", json.dumps(path.sidecar(), indent=2, sort_keys=True) + "\n")
    log.info("wrote %d x %d path to %s (clipped mass %.3g)", N, model.p, out, path.clipped_mass)
    return EXIT_OK


def cmd_check(args, cfg: ConfigFile) -> int:
    opts = cfg.section("check")
    if args.p_max is not None:
        opts["p_max"] = args.p_max
    if args.negative_control:
        opts["negative_control"] = True
    if args.seed is not None:
        opts["seed"] = args.seed
    report = run_identity_suites(tolerances=cfg.section("tolerances"), **opts)
    _emit(report, args, cfg, plot=None)
    return EXIT_OK if report.passed else EXIT_FAIL


def _experiment_config(args, cfg: ConfigFile) -> ExperimentConfig:
    exp = cfg.section("experiment")
    if args.seed is not None:
        exp["root_seed"] = args.seed
    if args.replicates is not None:
        exp["replicates"] = args.replicates
    kwargs = dict(exp)
    if "class" in cfg.sections:
        kwargs["function_class"] = cfg.section("class")
    return ExperimentConfig(model=cfg.model(), tolerances=cfg.section("tolerances"),
                            quadrature=cfg.quadrature(), **kwargs)


def cmd_experiment(args, cfg: ConfigFile) -> int:
    config = _experiment_config(args, cfg)
    report = EXPERIMENTS[args.kind](config)
    plot = None
    if args.kind == "scaling":
        plot = ("N", "d_N", "exact d_N", "N", "d_N")
    elif args.kind == "reduction":
        plot = ("N", "median", "median of max_n sup_f |S_N(n, f)|", "N", "median sup statistic")
    _emit(report, args, cfg, plot)
    log.info("%s experiment finished in %.2f s", args.kind, report.wall_clock)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_bracket(args, cfg: ConfigFile) -> int:
    model = cfg.model()
    cls = build_class(cfg.section("class"), model.p)
    opts = cfg.section("bracket")
    epsilons = [float(e) for e in opts.get("epsilons", [1.0, 0.5, 0.25, 0.1, 0.05])]
    rs = [int(r) for r in opts.get("r", [1, 2, 3, 4, 5, 6])]
    counts = [(eps, build_bracket_cover(cls, eps).count) for eps in epsilons]
    verdicts = []
    for r in rs:
        v = entropy_condition(r, samples=counts)
        verdicts.append({"r": r, "finite": v.finite, "integral": v.integral, "fitted_exponent": v.exponent})
    out = _out_dir(args)
    formats = _formats(args, cfg)
    if "csv" in formats:
        write_text(out / "bracket.csv", csv_text(["epsilon", "count"], counts))
    if "json" in formats:
        doc = {"class": cfg.section("class"), "counts": [{"epsilon": e, "count": c} for e, c in counts],
               "entropy_condition": [{**v, "integral": v["integral"] if np.isfinite(v["integral"]) else "inf"}
                                     for v in verdicts]}
        write_text(out / "bracket.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print("epsilon,count")
    for e, c in counts:
        print(f"{e:g},{c}")
    for v in verdicts:
        print(f"r={v['r']}: {'finite' if v['finite'] else 'divergent'} (fitted exponent {v['fitted_exponent']:.4g})")
    return EXIT_OK


def _emit(report, args, cfg: ConfigFile, plot) -> None:
    out = _out_dir(args)
    formats = _formats(args, cfg)
    if "json" in formats:
        write_text(out / "report.json", report.to_json())
    if "csv" in formats:
        write_text(out / "summary.csv", records_csv(report.rows))
        write_text(out / "checks.csv", records_csv([{"name": c.name, "passed": c.passed, "value": c.value,
                                                     "tolerance": c.tolerance} for c in report.checks]))
    if "svg" in formats and plot is not None:
        xkey, ykey, title, xlabel, ylabel = plot
        xs = [row[xkey] for row in report.rows]
        ys = [row[ykey] for row in report.rows]
        write_text(out / "plot.svg", svg_line_plot(xs, ys, title, xlabel, ylabel))
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: value={c.value:.6g} tolerance={c.tolerance:.6g}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrdsep", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="override the seed / root seed")
    common.add_argument("--format", help="comma-separated subset of json,csv,svg")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="sample one path")
    check = sub.add_parser("check", parents=[common], help="run the exact identity suites")
    check.add_argument("--negative-control", action="store_true", help="perturb B; the basis suite must fail")
    check.add_argument("--p-max", type=int, help="largest dimension in the suites")
    exp = sub.add_parser("experiment", parents=[common], help="run a Monte Carlo or exact experiment")
    exp.add_argument("kind", choices=sorted(EXPERIMENTS))
    exp.add_argument("--replicates", type=int, help="override the replicate count")
    sub.add_parser("bracket", parents=[common], help="bracketing numbers and entropy verdicts")
    return parser


COMMANDS = {"simulate": cmd_simulate, "check": cmd_check, "experiment": cmd_experiment, "bracket": cmd_bracket}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ExperimentError, CovarianceError, EmbeddingError, InvalidInput,
            ValueError, TypeError, KeyError) as exc:
        body = {"error": str(exc), "type": type(exc).__name__}
        if isinstance(exc, CovarianceError):
            body["min_eigenvalue"] = exc.min_eigenvalue
        text = json.dumps(body, sort_keys=True)
        print(text)
        try:
            write_text(_out_dir(args) / "error.json", text + "\n")
        except OSError:
            log.warning("could not write error.json to %s", args.out)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

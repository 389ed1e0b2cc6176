"""Command-line entry point: ``ddgsolve {generate,solve,sweep,coarse-study,export}``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import io as dio
from .coarse import build_coarse_space
from .harness import (
    DEFAULT_STUDY_H,
    SWEEP_AXES,
    ExperimentConfig,
    StageError,
    _generators,
    _stage,
    build_problem,
    coarse_accuracy_study,
    load_config,
    make_partition,
    run_experiment,
    run_sweep,
)

_HELP = {
    "problem": "benchmark name",
    "size": "nominal n**(1/d) of the generated problem",
    "coarsening_factor": "H/h, subdomain diameter in mesh widths",
    "p": "polynomial degree of the coarse space",
    "delta": "overlap in graph layers",
    "levels": "2 or 3",
    "partitioner": "auto, graph, inertial, box or file",
    "materials": "use material-masked generators when the problem has materials",
    "inner": "subdomain solver: exact or ssor",
    "reference": "convergence reference: first or initial",
    "matrix": "import a Matrix Market matrix instead of generating",
    "coords": "coordinate CSV for an imported matrix",
    "rhs": "right-hand side Matrix Market array",
    "generators": "generating vectors Matrix Market array (with .labels sidecar)",
    "material_file": "material CSV for an imported matrix",
    "partition": "partition file (one part id per line)",
    "output": "CSV file receiving result rows",
    "history": "CSV file receiving the residual history",
}


def _config_flags(parser):
    parser.add_argument("--config", help="flat key=value configuration file")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        kw = {"dest": f.name, "default": argparse.SUPPRESS, "help": _HELP.get(f.name)}
        if f.type in ("bool", bool):
            kw["type"] = lambda s: s
            kw["metavar"] = "BOOL"
        parser.add_argument(flag, **kw)


def _config(args) -> ExperimentConfig:
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names}
    with _stage("config"):
        if args.config:
            return load_config(args.config, overrides)
        return ExperimentConfig.from_mapping(overrides)


def _floats(text):
    out = []
    for tok in text.replace(",", " ").split():
        if "/" in tok:
            a, b = tok.split("/", 1)
            out.append(float(a) / float(b))
        else:
            out.append(float(tok))
    return out


def _print_row(row):
    for key, val in row.items():
        print(f"{key:>24s}  {val}")


def _write_problem(out_dir, P):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dio.write_matrix(out / "A.mtx", P.A)
    dio.write_dense(out / "rhs.mtx", P.rhs)
    dio.write_coordinates(out / "coords.csv", P.coords)
    if P.material_of_node is not None:
        dio.write_materials(out / "materials.csv", P.material_of_node)
    return out


def cmd_generate(args):
    cfg = _config(args)
    with _stage("generate"):
        P = build_problem(cfg)
    with _stage("write"):
        out = _write_problem(args.out_dir, P)
    print(f"{P.label}: n={P.n} d={P.d} q={P.q} components={P.num_components} -> {out}")


def cmd_solve(args):
    cfg = _config(args)
    report, row = run_experiment(cfg)
    _print_row(row)
    print("(iteration_bound is the classical CG estimate from the Lanczos condition number)")
    if report.breakdown:
        print(f"breakdown: {report.breakdown}")
    if not report.converged:
        print(f"not converged within {cfg.max_iter} iterations")


def cmd_sweep(args):
    cfg = _config(args)
    values = _floats(args.values) if args.values else []
    rows = run_sweep(cfg, args.axis, values, output=args.out or cfg.output or None)
    for row in rows:
        print(", ".join(f"{k}={row[k]}" for k in ("problem", "p", "H/h", "delta", "iterations",
                                                    "fractional_iterations")))
    if not rows:
        print("no values given; header only")


def cmd_coarse_study(args):
    cfg = _config(args)
    Hs = _floats(args.H) if args.H else list(DEFAULT_STUDY_H)
    rows, order = coarse_accuracy_study(cfg, Hs, output=args.out or cfg.output or None)
    for r in rows:
        print(f"H={r['H']:.6g} n={r['n']} parts={r['num_parts']} error={r['error']:.6e} l2={r['l2_error']:.6e}")
    print(f"fitted energy-norm order {order:.3f}")
    if rows:
        print(f"fitted L2 order {rows[0]['fitted_l2_order']:.3f}")


def cmd_export(args):
    cfg = _config(args)
    with _stage("generate"):
        P = build_problem(cfg)
    with _stage("partition"):
        part = make_partition(P, cfg)
    with _stage("generators"):
        F = _generators(P, cfg)
    with _stage("coarse"):
        cs = build_coarse_space(P.A, F, part, cfg.rank_tol, factor=False)
    with _stage("write"):
        out = _write_problem(args.out_dir, P)
        dio.write_partition(out / "partition.txt", part)
        dio.write_generators(out / "F.mtx", F)
        dio.write_matrix(out / "R0.mtx", cs.restriction, symmetric=False)
        dio.write_matrix(out / "A0.mtx", cs.coarse_matrix)
    print(f"{P.label}: {part.num_parts} parts, coarse rank {cs.rank} -> {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddgsolve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a benchmark system to Matrix Market and CSV files")
    _config_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="run one experiment")
    _config_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run one experiment per value along an axis")
    _config_flags(p)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", default="", help="comma or space separated values")
    p.add_argument("--out", help="CSV output (defaults to --output)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("coarse-study", help="coarse-solution error as H shrinks at fixed H/h")
    _config_flags(p)
    p.add_argument("--H", default="", help="subdomain widths, e.g. '1/8,1/16,1/32'")
    p.add_argument("--out", help="CSV output (defaults to --output)")
    p.set_defaults(func=cmd_coarse_study)

    p = sub.add_parser("export", help="write the system, partition, F, R0 and A0")
    _config_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except StageError as err:
        print(f"ddgsolve {args.command}: error {err}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as err:
        print(f"ddgsolve {args.command}: error [output] {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line harness for datasets, runs, and studies.

Subcommands::

    ddmech generate-data      sample a dataset and write it to disk
    ddmech run-elastic        tangent-map solve of the tube (or custom mesh)
    ddmech run-plastic        transition-rule solve of the plate cycle
    ddmech convergence-study  RMSD versus dataset size, replicated
    ddmech noise-study        RMSD versus noise level, replicated
    ddmech reference          constitutive reference solve only

Every command reads an optional JSON config (``--config``) whose keys
mirror :class:`ddmech.bench.RunConfig`, writes its outputs under
``--out``, and records a manifest with the config hash and seeds.
Exit codes: 0 success, 1 usage/config error, 2 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ddmech import bench, data, fem
from ddmech.transition import DataCoverageError

USAGE_ERROR = 1
SOLVER_ERROR = 2


def _load_config(args) -> bench.RunConfig:
    raw = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    config = bench.RunConfig.from_dict(raw)
    if args.out is not None:
        config.output_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    return config


def _cmd_generate_data(config: bench.RunConfig) -> int:
    out = Path(config.output_dir)
    problem = bench.build_problem(config)
    ds = bench.make_dataset(config, problem, config.seed)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "dataset.txt"
    data.save_dataset(ds, str(path))
    bench.write_manifest(config, out / "manifest.json",
                         {"records": len(ds), "dataset": str(path)})
    print(f"wrote {len(ds)} records to {path}")
    return 0


def _cmd_run_elastic(config: bench.RunConfig) -> int:
    out = Path(config.output_dir)
    problem = bench.build_problem(config)
    ds = bench.make_dataset(config, problem, config.seed)
    solutions = bench.run_elastic_history(problem, ds, tol=config.tolerance,
                                          max_iter=config.max_iterations)
    rows = bench.step_rows(problem, solutions)
    bench.write_csv(rows, out / "run_elastic.csv")
    bench.write_manifest(config, out / "manifest.json",
                         {"rmsd": bench.history_rmsd(problem, solutions),
                          "meanIterations": float(np.mean([r["iterations"] for r in rows]))})
    print(f"{len(rows)} steps, RMSD {bench.history_rmsd(problem, solutions):.4e}, "
          f"mean iterations {np.mean([r['iterations'] for r in rows]):.2f}")
    return 0


def _cmd_run_plastic(config: bench.RunConfig) -> int:
    out = Path(config.output_dir)
    if config.problem == "tube":
        config.problem = "plateHole"
    problem = bench.build_problem(config)
    ds = bench.make_dataset(config, problem, config.seed)
    solutions, histories = bench.run_plastic_history(
        problem, ds, tol=config.tolerance, max_iter=config.max_iterations)
    rows = bench.step_rows(problem, solutions, histories)
    node = bench.corner_node(problem.model.mesh, bench.PLATE_LENGTH, 0.0)
    for row, u_y in zip(rows, bench.tracked_displacement(solutions, node)):
        row["cornerDisplacement"] = float(u_y)
    bench.write_csv(rows, out / "run_plastic.csv")
    bench.write_manifest(config, out / "manifest.json",
                         {"rmsd": bench.history_rmsd(problem, solutions)})
    print(f"{len(rows)} steps, RMSD {bench.history_rmsd(problem, solutions):.4e}")
    return 0


def _cmd_convergence_study(config: bench.RunConfig) -> int:
    out = Path(config.output_dir)
    rows = bench.convergence_study(config)
    bench.write_csv(rows, out / "convergence.csv")
    bench.write_manifest(config, out / "manifest.json", {"rows": len(rows)})
    for row in rows:
        print(f"size {row['datasetSize']:>4}: mean RMSD {row['meanRMSD']:.4e} "
              f"[{row['minRMSD']:.4e}, {row['maxRMSD']:.4e}]")
    return 0


def _cmd_noise_study(config: bench.RunConfig) -> int:
    out = Path(config.output_dir)
    rows = bench.noise_study(config)
    bench.write_csv(rows, out / "noise.csv")
    bench.write_manifest(config, out / "manifest.json", {"rows": len(rows)})
    for row in rows:
        print(f"{row['distribution']:>14} @ {row['noiseLevel']:4.0%}: "
              f"mean RMSD {row['meanRMSD']:.4e}")
    return 0


def _cmd_reference(config: bench.RunConfig) -> int:
    out = Path(config.output_dir)
    problem = bench.build_problem(config)
    reference = problem.reference()
    rows = [{"step": k + 1, "load": float(problem.magnitudes[k]),
             "newtonIterations": ref.iterations, "residual": ref.residual,
             "maxDisplacement": float(np.abs(ref.displacements).max())}
            for k, ref in enumerate(reference)]
    bench.write_csv(rows, out / "reference.csv")
    bench.write_manifest(config, out / "manifest.json", {"rows": len(rows)})
    print(f"reference solve: {len(rows)} steps, final max displacement "
          f"{rows[-1]['maxDisplacement']:.4e}")
    return 0


_COMMANDS = {
    "generate-data": _cmd_generate_data,
    "run-elastic": _cmd_run_elastic,
    "run-plastic": _cmd_run_plastic,
    "convergence-study": _cmd_convergence_study,
    "noise-study": _cmd_noise_study,
    "reference": _cmd_reference,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddmech",
        description="data-driven computational mechanics benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="JSON config file (RunConfig keys)")
        cmd.add_argument("--out", help="output directory")
        cmd.add_argument("--seed", type=int, help="master seed override")
        cmd.add_argument("--threads", type=int, help="parallel replica workers")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code else 0
    try:
        config = _load_config(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        return _COMMANDS[args.command](config)
    except (fem.NonConvergenceError, fem.SingularSystemError, DataCoverageError) as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return SOLVER_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())

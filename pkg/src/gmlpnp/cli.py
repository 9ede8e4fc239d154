"""Command-line interface: single solves, benchmark sweeps, convergence runs."""

import argparse
import json
import os
import sys

from . import bench, jsonio
from .errors import PnPError, SchemaError
from .gml_solver import OuterLoopConfig, solve
from .ml_solver import InnerSolveConfig

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_SOLVER_ERROR = 2

FIG2_GRID = [bench.GridPoint(n, 0.1, 1.0) for n in range(20, 201, 20)]
FIG3_SIGMAS = (0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
FIG3_GRID = [bench.GridPoint(50, s, 10.0 * s) for s in FIG3_SIGMAS]
TIMING_GRID = [bench.GridPoint(n, 0.1, 1.0) for n in range(20, 201, 20)]
PRESETS = {"fig2": FIG2_GRID, "fig3": FIG3_GRID, "timing": TIMING_GRID}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gmlpnp",
        description="Pose and noise-covariance estimation from 3D-point / "
        "projection-ray correspondences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one correspondence file")
    p_solve.add_argument("input", help="problem JSON file")
    p_solve.add_argument(
        "--init",
        choices=("linear", "file"),
        default="linear",
        help="initial pose: linear resection or the file's initial_pose",
    )
    p_solve.add_argument("--max-outer", type=int, default=None, metavar="N")
    p_solve.add_argument("--cov-threshold", type=float, default=None, metavar="X")

    p_bench = sub.add_parser("bench", help="run a synthetic benchmark sweep")
    p_bench.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p_bench.add_argument("--n", type=int, nargs="+", default=None, metavar="N")
    p_bench.add_argument("--sigma", type=float, nargs="+", default=None, metavar="S")
    p_bench.add_argument("--trials", type=int, default=500)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default=".", metavar="DIR")
    p_bench.add_argument("--threads", type=int, default=None)
    p_bench.add_argument(
        "--methods", nargs="+", default=list(bench.METHODS), choices=bench.METHODS
    )
    p_bench.add_argument(
        "--emit-case",
        metavar="FILE",
        default=None,
        help="write one scene as a problem JSON instead of sweeping",
    )

    p_conv = sub.add_parser(
        "convergence", help="per-iteration diagnostics at n=200, sigma=0.5"
    )
    p_conv.add_argument("--trials", type=int, default=500)
    p_conv.add_argument("--seed", type=int, default=0)
    p_conv.add_argument("--out", default=".", metavar="DIR")
    p_conv.add_argument("--threads", type=int, default=None)
    return parser


def _outer_config(max_outer, cov_threshold):
    kwargs = {}
    if max_outer is not None:
        kwargs["max_outer_iterations"] = max_outer
    if cov_threshold is not None:
        kwargs["covariance_threshold"] = cov_threshold
    return OuterLoopConfig(inner=InnerSolveConfig(), **kwargs)


def _cmd_solve(args):
    problem = jsonio.load_problem(args.input)
    init = None
    if args.init == "file":
        if problem.initial_pose is None:
            raise SchemaError("initial_pose: required by --init file but absent")
        init = problem.initial_pose
    report = solve(
        problem.points,
        problem.rays,
        init=init,
        config=_outer_config(args.max_outer, args.cov_threshold),
    )
    out = jsonio.report_to_dict(report)
    if problem.ground_truth is not None:
        out["ground_truth_error"] = {
            "rotation_deg": bench.rotation_error_deg(
                problem.ground_truth.rotation, report.pose.rotation
            ),
            "translation_rel": bench.translation_error(
                problem.ground_truth.translation, report.pose.translation
            ),
        }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _bench_grid(args):
    if args.preset is not None:
        return list(PRESETS[args.preset])
    ns = args.n if args.n else [50]
    sigmas = args.sigma if args.sigma else [0.1]
    return [bench.GridPoint(n, s, 10.0 * s) for n in ns for s in sigmas]


def _cmd_bench(args):
    if args.emit_case is not None:
        n = args.n[0] if args.n else 20
        sigma = args.sigma[0] if args.sigma else 0.0
        cfg = bench.SceneConfig(n_points=n, rng_seed=(args.seed,))
        scene = bench.generate_scene(
            cfg, bench.NoiseConfig(sigma_obj=sigma, sigma_img=10.0 * sigma)
        )
        case = jsonio.case_to_dict(scene, bench.DEFAULT_CAMERA)
        with open(args.emit_case, "w") as fh:
            json.dump(case, fh, indent=2)
        print(f"# seed={args.seed} n={n} sigma={sigma} -> {args.emit_case}")
        return EXIT_OK

    grid = _bench_grid(args)
    print(f"# seed={args.seed} trials={args.trials} grid_points={len(grid)} "
          f"methods={','.join(args.methods)}")
    records = bench.run_experiment(
        grid, args.trials, methods=tuple(args.methods), seed=args.seed,
        threads=args.threads,
    )
    os.makedirs(args.out, exist_ok=True)
    trials_path = os.path.join(args.out, "trials.csv")
    iters_path = os.path.join(args.out, "iterations.csv")
    bench.write_trials_csv(records, trials_path)
    bench.write_iterations_csv(records, iters_path)
    print(bench.format_summary(bench.aggregate(records)))
    print(f"# wrote {trials_path} and {iters_path}")
    return EXIT_OK


def _cmd_convergence(args):
    grid = [bench.GridPoint(200, 0.5, 5.0)]
    print(f"# seed={args.seed} trials={args.trials} n=200 sigma=0.5")
    records = bench.run_experiment(
        grid, args.trials, methods=("gmlpnp",), seed=args.seed, threads=args.threads
    )
    os.makedirs(args.out, exist_ok=True)
    iters_path = os.path.join(args.out, "iterations.csv")
    bench.write_iterations_csv(records, iters_path)
    det_means = bench.padded_trace_means(records, "det_v")
    frob_means = bench.padded_trace_means(records, "frob_err")
    print(f"{'iteration':>9} {'mean det_V':>14} {'mean frob_err':>14}")
    for i, (d, f) in enumerate(zip(det_means, frob_means)):
        print(f"{i:>9} {d:>14.6g} {f:>14.6g}")
    print(f"# wrote {iters_path}")
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "convergence":
            return _cmd_convergence(args)
        raise AssertionError(f"unhandled command {args.command}")
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except PnPError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())

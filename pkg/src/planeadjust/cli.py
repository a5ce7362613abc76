"""Command-line front end: generate, perturb, solve, compare.

Exit codes: 0 success, 1 usage/IO/data error, 2 solver did not converge.
"""

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

from . import io
from .benchmark import compare_reports, iteration_series, level_verdicts, time_series
from .exceptions import PlaneAdjustError
from .geometry import Pose
from .lm import lm_solve
from .newton import solve
from .report import GAUGE_MODES, SolveReport, SolverConfig
from .scene import NOISE_LEVELS, NoiseSpec, SceneConfig, generate_scene, perturb_poses

EXIT_OK, EXIT_ERROR, EXIT_NONCONVERGENCE = 0, 1, 2


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    command: str
    config: dict
    dataset_hash: str = None
    seed: int = None
    solver: str = None
    tool_version: str = field(default_factory=_version)
    outputs: list = field(default_factory=list)

    def write(self, directory):
        path = Path(directory) / "manifest.json"
        self.outputs = sorted(set(self.outputs) | {path.name})
        path.write_text(json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")
        return path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _shared(p, input_nargs=None, need_input=True):
    if need_input:
        p.add_argument("--input", "-i", required=True, nargs=input_nargs)
    p.add_argument("--output", "-o", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--deterministic", action="store_true",
                   help="zero wall-clock fields so outputs are byte-reproducible")


def build_parser():
    parser = _Parser(prog="planeadjust", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="synthesise a scene")
    _shared(g, need_input=False)
    d = SceneConfig()
    g.add_argument("--planes", type=int, default=d.plane_count)
    g.add_argument("--poses", type=int, default=d.pose_count)
    g.add_argument("--pts", type=int, default=d.points_per_obs, help="points per observation")
    g.add_argument("--visibility", type=float, default=d.visibility_prob)
    g.add_argument("--extent", type=float, default=d.extent)
    g.add_argument("--noise", type=float, default=d.point_noise_sigma, help="point noise std (m)")
    g.add_argument("--raw-points", action="store_true", help="also write the raw-point side file")

    p = sub.add_parser("perturb", help="add pose noise to a dataset")
    _shared(p)
    level = p.add_mutually_exclusive_group(required=True)
    level.add_argument("--level", type=int, choices=sorted(NOISE_LEVELS))
    level.add_argument("--sigma-r", type=float, help="rotation noise std (degrees)")
    p.add_argument("--sigma-t", type=float, default=None, help="translation noise std (m)")
    p.add_argument("--hold-first", action="store_true", help="leave pose 0 unperturbed")

    s = sub.add_parser("solve", help="run a solver on a dataset")
    _shared(s)
    c = SolverConfig()
    s.add_argument("--solver", choices=("newton", "lm"), default="newton")
    s.add_argument("--mu0", type=float, default=c.mu0)
    s.add_argument("--max-iters", type=int, default=c.max_iters)
    s.add_argument("--tol", type=float, default=c.tol_cost_change)
    s.add_argument("--gauge", choices=GAUGE_MODES, default=c.gauge)

    m = sub.add_parser("compare", help="compare solve reports (candidate, baseline pairs)")
    _shared(m, input_nargs="+")
    m.add_argument("--rtol", type=float, default=1e-6,
                   help="relative margin for reaching the baseline's final cost")
    return parser


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args):
    config = SceneConfig(
        plane_count=args.planes, pose_count=args.poses, points_per_obs=args.pts,
        visibility_prob=args.visibility, extent=args.extent,
        point_noise_sigma=args.noise, rng_seed=args.seed,
    )
    problem, gt, raw = generate_scene(config)
    out = _outdir(args.output)
    io.save_problem(problem, out / "problem.json")
    io.save_poses(gt, out / "ground_truth.json")
    outputs = ["problem.json", "ground_truth.json"]
    if args.raw_points:
        io.save_raw_points(raw, out / "raw_points.json")
        outputs.append("raw_points.json")
    RunManifest("generate", asdict(config), io.load_dataset(out / "problem.json").sha256,
                args.seed, outputs=outputs).write(out)
    print(f"wrote {problem!r} to {out}")
    return EXIT_OK


def cmd_perturb(args):
    if args.level is not None:
        if args.sigma_t is not None:
            raise ValueError("--sigma-t cannot be combined with --level")
        noise = NoiseSpec.level(args.level, args.seed)
    else:
        if args.sigma_t is None:
            raise ValueError("--sigma-r requires --sigma-t")
        noise = NoiseSpec(args.sigma_r, args.sigma_t, args.seed)
    dataset = io.load_dataset(args.input)
    poses = perturb_poses(dataset.problem.poses, noise, hold_first=args.hold_first)
    record = {"sigma_r_deg": noise.sigma_r_deg, "sigma_t": noise.sigma_t,
              "seed": noise.rng_seed, "level": noise.preset_level}
    out = _outdir(args.output)
    io.save_problem(dataset.problem.with_poses(poses), out / "problem.json",
                    reference_poses=dataset.problem.poses, noise=record)
    RunManifest("perturb", record, dataset.sha256, args.seed,
                outputs=["problem.json"]).write(out)
    print(f"perturbed {dataset.problem.pose_count} poses with {record}")
    return EXIT_OK


def cmd_solve(args):
    config = SolverConfig(mu0=args.mu0, max_iters=args.max_iters, tol_cost_change=args.tol,
                          tol_grad_norm=args.tol, gauge=args.gauge, threads=args.threads)
    dataset = io.load_dataset(args.input)
    if args.solver == "newton":
        poses, report = solve(dataset.problem, config)
    else:
        poses, _, report = lm_solve(dataset.problem, config)
    report.dataset_hash = dataset.sha256
    report.metadata = {"noise": dataset.noise,
                       "level": None if dataset.noise is None else dataset.noise.get("level")}
    if args.deterministic:
        report.zero_timings()
    out = _outdir(args.output)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    io.save_poses([Pose.from_matrix(X) for X in poses], out / "poses.json")
    RunManifest("solve", vars(config).copy(), dataset.sha256, args.seed, args.solver,
                outputs=["report.json", "report.csv", "poses.json"]).write(out)
    print(f"{args.solver}: {report.termination} after {report.iterations} iterations, "
          f"cost {report.final_tau!r}")
    return EXIT_OK if report.converged else EXIT_NONCONVERGENCE


def cmd_compare(args):
    if len(args.input) % 2:
        raise ValueError("--input takes candidate/baseline report pairs")
    reports = [SolveReport.from_json(Path(p).read_text()) for p in args.input]
    out = _outdir(args.output)
    comparisons, outputs = [], ["summary.csv"]
    rows = ["dataset_hash,level,candidate,baseline,candidate_iters,baseline_iters,target,flag"]
    for k in range(0, len(reports), 2):
        a, b = reports[k], reports[k + 1]
        cmp = compare_reports(a, b, args.rtol)
        comparisons.append(cmp)
        print(cmp.line())
        rows.append(",".join(str("" if v is None else v) for v in (
            cmp.dataset_hash, cmp.level, cmp.candidate, cmp.baseline,
            cmp.candidate_iters, cmp.baseline_iters, repr(cmp.target), cmp.flag)))
        stem = f"series_{k // 2:03d}"
        (out / f"{stem}_iteration.csv").write_text(iteration_series(a, b))
        (out / f"{stem}_time.csv").write_text(time_series(a, b))
        outputs += [f"{stem}_iteration.csv", f"{stem}_time.csv"]
    (out / "summary.csv").write_text("\n".join(rows) + "\n")
    for level, (fewer, total, passed) in sorted(level_verdicts(comparisons).items(), key=str):
        print(f"level {level}: {'PASS' if passed else 'FAIL'} "
              f"(candidate fewer iterations on {fewer}/{total})")
    for cmp in comparisons:
        if cmp.flag != "fewer":
            print(f"counterexample: {cmp.line()}")
    RunManifest("compare", {"inputs": list(args.input), "rtol": args.rtol},
                reports[0].dataset_hash, args.seed, outputs=outputs).write(out)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "perturb": cmd_perturb,
            "solve": cmd_solve, "compare": cmd_compare}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (PlaneAdjustError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

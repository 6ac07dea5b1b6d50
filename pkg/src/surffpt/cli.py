"""Command line entry point: ``surffpt <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import StudyConfig, default_config_text, format_convergence, run_convergence, run_study
from .fields import parse_spec
from .geometry import estimate_curvature_field
from .sampling import BoundaryRule, SamplingPlan, read_cloud, sample_cloud, write_cloud
from .sde import IntegratorConfig, validate_against_pde
from .solver import fpt_problem, evaluate_statistic
from .surfaces import parse_surface


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _diag(**kw) -> None:
    for k, v in kw.items():
        print(f"{k}={v}", file=sys.stderr)


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def cmd_sample(args) -> int:
    model = parse_surface(args.surface)
    plan = SamplingPlan(args.h, args.n, args.iters, args.seed, args.method)
    cloud = sample_cloud(model, plan, boundary=args.boundary)
    write_cloud(args.out, cloud)
    _diag(n=cloud.n, boundary=int(cloud.boundary.sum()), median_spacing=f"{cloud.measured_h:.6g}")
    return 0


def cmd_curvature(args) -> int:
    cloud = read_cloud(args.cloud)
    K = estimate_curvature_field(cloud, args.degree)
    lines = ["index,x,y,z,K"]
    for i, (p, k) in enumerate(zip(cloud.positions.tolist(), K.tolist())):
        lines.append(f"{i},{p[0]!r},{p[1]!r},{p[2]!r},{k!r}")
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def _solve(cloud, spec_text, degree, solver):
    spec = parse_spec(spec_text)
    return spec, evaluate_statistic(cloud, fpt_problem(spec, degree), solver)


def cmd_solve_fpt(args) -> int:
    cloud = read_cloud(args.cloud)
    _, sol = _solve(cloud, args.spec, args.degree, args.solver)
    lines = ["index,x,y,z,u"]
    for i, (p, u) in enumerate(zip(cloud.positions.tolist(), sol.u.tolist())):
        lines.append(f"{i},{p[0]!r},{p[1]!r},{p[2]!r},{u!r}")
    _write(args.out, "\n".join(lines) + "\n")
    _diag(residual=f"{sol.residual:.3e}", iterations=sol.iterations, seconds=f"{sol.seconds:.3f}")
    return 0


def cmd_mc_validate(args) -> int:
    cloud = read_cloud(args.cloud)
    if cloud.source_model is None:
        raise SystemExit("cloud file has no surface in its header")
    model = parse_surface(cloud.source_model)
    rule = BoundaryRule.parse(args.boundary or cloud.meta.get("boundary", "z")).bind(model)
    spec, sol = _solve(cloud, args.spec, args.degree, args.solver)
    config = IntegratorConfig(dt=args.dt, seed=args.seed, max_steps=args.max_steps)
    report = validate_against_pde(sol, cloud.positions, _int_list(args.points), spec, rule, model,
                                  config, args.traj)
    text = report.format() + f"# within_3se={report.within}/{len(report.rows)} passed={str(report.passed).lower()}\n"
    _write(args.out, text)
    return 0


def cmd_converge(args) -> int:
    rows = run_convergence(args.manifold, _int_list(args.degrees), args.levels, args.seed)
    _write(args.out, format_convergence(rows))
    return 0


def cmd_study(args) -> int:
    if args.config:
        config = StudyConfig.load(args.config, args.name)
    else:
        config = StudyConfig(args.name)
    if args.seed is not None:
        config = StudyConfig.from_mapping({**config.__dict__, "seed": args.seed})
    _write(args.out, run_study(config).format())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surffpt", description="Meshless first-passage times on surfaces.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="sample a surface into a cloud file")
    s.add_argument("--surface", required=True,
                   help="A|B|C|D|hemisphere|sphere:R[,zmin]|torus:s1,s2|sliced_torus|truncated_torus|neck:r0|flat_disk:R ...")
    s.add_argument("--h", type=float, required=True, help="target fill distance")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--boundary", default=None, help="band rule kind:center:half_width, e.g. z:0:0.04 or edge::1e-9")
    s.add_argument("--n", type=int, default=None, help="override the point count")
    s.add_argument("--iters", type=int, default=60, help="relaxation sweeps (surfaces with an edge)")
    s.add_argument("--method", default="auto", choices=["auto", "lattice", "relax"])
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("curvature", help="estimate Gaussian curvature at every cloud point")
    s.add_argument("--cloud", required=True)
    s.add_argument("--degree", type=int, default=4)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_curvature)

    s = sub.add_parser("solve-fpt", help="solve for the mean first-passage time")
    s.add_argument("--cloud", required=True)
    s.add_argument("--degree", type=int, default=4)
    s.add_argument("--spec", default="diffusion:D=1", help="drift/diffusion preset, e.g. langevin:k=1,D=1")
    s.add_argument("--solver", default="direct", choices=["direct", "iterative"])
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_solve_fpt)

    s = sub.add_parser("mc-validate", help="compare PDE first-passage times with Monte Carlo")
    s.add_argument("--cloud", required=True)
    s.add_argument("--spec", default="diffusion:D=1")
    s.add_argument("--points", required=True, help="comma-separated cloud indices")
    s.add_argument("--traj", type=int, default=10000)
    s.add_argument("--dt", type=float, default=1e-5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--degree", type=int, default=4)
    s.add_argument("--solver", default="direct", choices=["direct", "iterative"])
    s.add_argument("--boundary", default=None, help="absorbing band; defaults to the rule in the cloud header")
    s.add_argument("--max-steps", type=int, default=10_000_000)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_mc_validate)

    s = sub.add_parser("converge", help="operator convergence table for a catalog manifold")
    s.add_argument("--manifold", required=True, choices=["A", "B", "C", "D"])
    s.add_argument("--degrees", default="2,4")
    s.add_argument("--levels", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_converge)

    s = sub.add_parser("study", help="first-passage-time parameter study",
                       epilog=default_config_text(), formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--name", required=True, choices=["double-well", "diffusivity-depth", "diffusivity-extent", "neck"])
    s.add_argument("--config", default=None, help="YAML file overriding the defaults below")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    np.seterr(all="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

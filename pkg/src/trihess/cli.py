"""Command-line front end.

Thin adapters only: every subcommand parses flags, calls the library, and
writes what the library returned.  Exit codes: 0 success, 1 runtime or
numerical failure, 2 usage error.
"""

import argparse
import pathlib
import sys

import numpy as np

from .experiments import (SOLUTIONS, StudyConfig, StudyError, emit_report,
                          run_study)
from .fem import (Coefficients, FEMError, FESpace, field_to_csv, interpolate,
                  solve_dirichlet)
from .mesh import (PATTERNS, MeshError, dof_coordinates, generate_uniform,
                   load_mesh)
from .polyfit import RankDeficientError
from .recovery import (COMPONENTS, METHODS, RecoveryError, extract_stencil,
                       recover_hessian)

ELEMENTS = {"p1": 1, "p2": 2}


def _write_text(text, out):
    if out == "-":
        sys.stdout.write(text)
    else:
        pathlib.Path(out).write_text(text)


def _mesh_from_args(args, parser):
    if args.pattern is not None:
        if args.n is None:
            parser.error("--n is required with --pattern")
        return generate_uniform(args.pattern, args.n)
    prefix = args.mesh
    if prefix.endswith(".node"):
        prefix = prefix[: -len(".node")]
    return load_mesh(prefix)


def _add_mesh_source(sub, require_n=False):
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--pattern", choices=PATTERNS,
                       help="generate a uniform pattern mesh")
    group.add_argument("--mesh", metavar="PREFIX",
                       help="load PREFIX.node / PREFIX.ele")
    sub.add_argument("--n", type=int, default=None,
                     help="subdivisions per side for --pattern")


def cmd_mesh(args, parser):
    mesh = generate_uniform(args.pattern, args.n)
    mesh.save(args.out)
    return 0


def cmd_solve(args, parser):
    mesh = _mesh_from_args(args, parser)
    space = FESpace(mesh, ELEMENTS[args.element])
    sol = SOLUTIONS[args.solution]
    uh = solve_dirichlet(space, Coefficients(f=sol.rhs), g=sol.u)
    _write_text(field_to_csv(uh), args.out)
    return 0


def cmd_recover(args, parser):
    mesh = _mesh_from_args(args, parser)
    space = FESpace(mesh, ELEMENTS[args.element])
    sol = SOLUTIONS[args.solution]
    if args.source == "fem":
        u = solve_dirichlet(space, Coefficients(f=sol.rhs), g=sol.u)
    else:
        u = interpolate(space, sol.u)
    recovered = recover_hessian(u, args.method)
    lines = ["dof_index,x,y,hxx,hxy,hyx,hyy"]
    for i, ((x, y), row) in enumerate(zip(space.dof_coords, recovered.values)):
        vals = ",".join(f"{v:.17g}" for v in row)
        lines.append(f"{i},{x:.17g},{y:.17g},{vals}")
    _write_text("\n".join(lines) + "\n", args.out)
    return 0


def cmd_stencil(args, parser):
    mesh = _mesh_from_args(args, parser)
    k = ELEMENTS[args.element]
    coords = dof_coordinates(mesh, k)
    target = np.array([args.at[0], args.at[1]])
    node = int(np.argmin(((coords - target) ** 2).sum(axis=1)))
    stencil = extract_stencil(mesh, k, args.method, node, args.component)
    _write_text(stencil.to_json() + "\n", args.out)
    return 0


def cmd_study(args, parser):
    example = {"1": "interpolation_study", "2": "fem_study"}[args.example]
    config = StudyConfig(example=example, pattern=args.pattern,
                         mesh_source=args.mesh, k=ELEMENTS[args.element],
                         methods=tuple(args.methods.split(",")),
                         levels=args.levels, L=args.L, solution=args.solution,
                         base_n=args.base_n, refinement=args.refinement)
    report = run_study(config)
    _write_text(emit_report(report, args.format), args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trihess",
        description="Triangular-mesh derivative recovery and convergence studies.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("mesh", help="generate a uniform pattern mesh")
    p.add_argument("--pattern", choices=PATTERNS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True, metavar="PREFIX",
                   help="write PREFIX.node and PREFIX.ele")
    p.set_defaults(func=cmd_mesh)

    p = subs.add_parser("solve", help="solve the model problem")
    _add_mesh_source(p)
    p.add_argument("--element", choices=sorted(ELEMENTS), default="p1")
    p.add_argument("--solution", choices=sorted(SOLUTIONS), default="sinsin")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_solve)

    p = subs.add_parser("recover", help="recover second derivatives")
    _add_mesh_source(p)
    p.add_argument("--element", choices=sorted(ELEMENTS), default="p1")
    p.add_argument("--method", default="ppr-ppr",
                   help=f"one of {', '.join(m.replace('_', '-') for m in METHODS)}")
    p.add_argument("--solution", choices=sorted(SOLUTIONS), default="sinsin")
    p.add_argument("--source", choices=("fem", "interpolant"), default="fem")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_recover)

    p = subs.add_parser("stencil", help="extract a recovery stencil as JSON")
    _add_mesh_source(p)
    p.add_argument("--element", choices=sorted(ELEMENTS), default="p1")
    p.add_argument("--method", default="ppr-ppr")
    p.add_argument("--component", choices=COMPONENTS, required=True)
    p.add_argument("--at", type=float, nargs=2, required=True,
                   metavar=("X", "Y"), help="extract at the nearest node")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_stencil)

    p = subs.add_parser("study", help="run a convergence study")
    p.add_argument("--example", choices=("1", "2"), required=True,
                   help="1 = interpolation study, 2 = model-problem study")
    _add_mesh_source(p)
    p.add_argument("--element", choices=sorted(ELEMENTS), default="p1")
    p.add_argument("--methods", default="ppr-ppr",
                   help="comma-separated recovery methods")
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--L", type=float, default=0.1)
    p.add_argument("--solution", choices=sorted(SOLUTIONS), default="sinsin")
    p.add_argument("--base-n", type=int, default=10, dest="base_n")
    p.add_argument("--refinement", choices=("red", "smoothed"), default="red")
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_study)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (MeshError, FEMError, RecoveryError, StudyError,
            RankDeficientError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

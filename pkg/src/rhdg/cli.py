"""Command line entry point: convergence studies, invariant checks and mesh utilities."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness import SUITES, StudyConfig, format_checks, run_checks, run_study
from .hdg import HYBRIDS, SCHEMES
from .mesh import MeshError, generate_unit_square, quality_report, read_mesh, refine_uniform, write_mesh
from .problems import PROBLEMS


def _int_list(text: str) -> tuple:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("degrees must be positive integers")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhdg", description="Reduced-stabilisation HDG solver for the Poisson problem")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    st = sub.add_parser("study", help="run a convergence study on refined meshes")
    st.add_argument("--k", type=_int_list, default=(1, 2, 3), help="comma-separated polynomial degrees")
    st.add_argument("--scheme", choices=SCHEMES, default="reduced")
    st.add_argument("--hybrid", choices=HYBRIDS, default="disc")
    st.add_argument("--s", type=float, default=1.0, help="symmetrisation parameter (1, 0 or -1)")
    st.add_argument("--tau0", type=float, default=None, help="penalty scale (tau = tau0 / h_e)")
    st.add_argument("--levels", type=int, default=4)
    st.add_argument("--base-n", type=int, default=14)
    st.add_argument("--perturb", type=float, default=0.15)
    st.add_argument("--seed", type=int, default=42)
    st.add_argument("--problem", choices=sorted(PROBLEMS), default="sinsin")
    st.add_argument("--out", choices=("csv", "md"), default="csv")
    st.add_argument("--outfile", type=Path, default=None)

    ch = sub.add_parser("check", help="run a named invariant suite")
    ch.add_argument("--suite", action="append", choices=SUITES + ("all",), required=True,
                    help="suite to run; may be repeated")
    ch.add_argument("--base-n", type=int, default=14)
    ch.add_argument("--perturb", type=float, default=0.15)
    ch.add_argument("--seed", type=int, default=42)

    me = sub.add_parser("mesh", help="mesh utilities")
    msub = me.add_subparsers(dest="mesh_command", required=True)
    gen = msub.add_parser("gen", help="generate a perturbed criss-cross mesh of the unit square")
    gen.add_argument("--n", type=int, default=14)
    gen.add_argument("--perturb", type=float, default=0.15)
    gen.add_argument("--seed", type=int, default=42)
    gen.add_argument("--outfile", type=Path, default=None)
    ref = msub.add_parser("refine", help="uniform red refinement")
    ref.add_argument("mesh", type=Path)
    ref.add_argument("--times", type=int, default=1)
    ref.add_argument("--outfile", type=Path, default=None)
    qu = msub.add_parser("quality", help="report diameter and shape-regularity statistics")
    qu.add_argument("mesh", type=Path)
    return parser


def _emit(text: str, outfile: Path | None) -> None:
    if outfile is None:
        sys.stdout.write(text)
    else:
        outfile.write_text(text)


def _cmd_study(args) -> int:
    config = StudyConfig(ks=args.k, scheme=args.scheme, hybrid=args.hybrid, s=args.s, tau0=args.tau0,
                         levels=args.levels, base_n=args.base_n, perturb=args.perturb, seed=args.seed,
                         problem=args.problem, out=args.out)
    _emit(run_study(config).render(), args.outfile)
    return 0


def _cmd_check(args) -> int:
    suites = SUITES if "all" in args.suite else tuple(dict.fromkeys(args.suite))
    failed = 0
    for suite in suites:
        results = run_checks(suite, base_n=args.base_n, perturb=args.perturb, seed=args.seed)
        sys.stdout.write(format_checks(results))
        failed += sum(not r.passed for r in results)
    return 1 if failed else 0


def _cmd_mesh(args) -> int:
    if args.mesh_command == "gen":
        _emit(write_mesh(generate_unit_square(args.n, args.perturb, seed=args.seed)), args.outfile)
        return 0
    mesh = read_mesh(args.mesh.read_text())
    if args.mesh_command == "refine":
        for _ in range(args.times):
            mesh = refine_uniform(mesh)
        _emit(write_mesh(mesh), args.outfile)
        return 0
    rep = quality_report(mesh)
    sys.stdout.write(
        f"nodes {mesh.num_nodes}\ntriangles {mesh.num_triangles}\nedges {mesh.num_edges}\n"
        f"h {rep.h:.6e}\nmin_diameter {rep.diameters.min():.6e}\n"
        f"gamma_c {rep.gamma_c:.6e}\nmean_ratio {rep.ratios.mean():.6e}\n"
    )
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"study": _cmd_study, "check": _cmd_check, "mesh": _cmd_mesh}
    try:
        return handlers[args.command](args)
    except (MeshError, ValueError, OSError) as exc:
        print(f"rhdg: error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"rhdg: solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

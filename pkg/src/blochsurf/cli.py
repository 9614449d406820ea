"""Command line driver.

Subcommands: ``solve`` (one configuration), ``table`` (an (N, h) grid in
the layout of the convergence tables), ``selftest`` (property suite and
convention adjudication).  Exit codes: 0 success, 1 self-test failure,
2 invalid configuration, 3 solver non-convergence.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


def _add_common(p):
    p.add_argument("--config", type=str, help="INI run configuration")
    p.add_argument("--preset", type=str, help="named built-in case (example1..example8)")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--jobs", type=int, default=None, help="assembly parallelism cap")
    p.add_argument("--rhs-sign", type=int, choices=(-1, 1), default=None)
    p.add_argument("--direct", action="store_true", help="force the direct sparse solver")
    p.add_argument("-N", type=int, default=None, help="override zone interval count")
    p.add_argument("--h", type=float, default=None, help="override target mesh size")


def _load_config(args):
    from .config import ConfigError, parse_config, preset

    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = parse_config(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        raise ConfigError("a --config file or --preset name is required")
    over = {}
    if args.out is not None:
        over["out_dir"] = args.out
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.rhs_sign is not None:
        over["rhs_sign"] = args.rhs_sign
    if args.direct:
        over["force_direct"] = True
    if args.N is not None:
        over["N"] = args.N
    if args.h is not None:
        over["h"] = args.h
    return replace(cfg, **over) if over else cfg


def cmd_solve(args) -> int:
    from .config import ConfigError
    from . import pipeline
    from .mesh import write_vtk
    from .postprocess import StudyRow, write_summary_csv

    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    import time

    t0 = time.perf_counter()
    res = pipeline.run_case(cfg)
    wall = time.perf_counter() - t0
    rep = res.report
    write_vtk(res.mesh, out / "fields_scattered.vtk", {"u": res.field.values})
    row = StudyRow(
        N=res.grid.N, h_nominal=cfg.h, h_measured=res.mesh.h, dofs=res.system_size,
        relative_error=res.relative_error, physical_error=res.physical_error,
        iterations=rep.iterations, wall_seconds=wall, converged=rep.converged,
    )
    write_summary_csv([row], out / "summary.csv")
    summary = (
        f"case {cfg.label}: N={res.grid.N} mesh {res.mesh.n1}x{res.mesh.n2} "
        f"(h={res.mesh.h:.4g}) size={res.system_size}\n"
        f"  solver: {rep.method}, {rep.iterations} iterations, "
        f"residual {rep.residual:.2e} (true {rep.true_residual:.2e}), {wall:.1f}s\n"
        f"  relative L2 error {res.relative_error:.4e} "
        f"(physical domain {res.physical_error:.4e})\n"
    )
    print(summary, end="")
    (out / "run_summary.txt").write_text(summary)
    return 0 if rep.converged else 3


def cmd_table(args) -> int:
    from .config import ConfigError
    from .postprocess import convergence_study, write_summary_csv, write_table_csv

    try:
        cfg = _load_config(args)
        ns = [int(v) for v in args.N_list.split(",")]
        hs = [float(v) for v in args.h_list.split(",")]
        if not ns or not hs:
            raise ConfigError("empty (N, h) grid")
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = [(N, h) for N in ns for h in hs]
    result = convergence_study(cfg, pairs)
    write_table_csv(result.rows, out / f"table_{cfg.label}.csv")
    write_summary_csv(result.rows, out / "summary.csv")
    failed = [r for r in result.rows if r.failed or not r.converged]
    for r in result.rows:
        status = "FAILED" if r.failed else ("ok" if r.converged else "NOCONV")
        print(
            f"N={r.N:4d} h={r.h_nominal:.3g} err={r.relative_error:.3e} "
            f"t={r.wall_seconds:.1f}s [{status}]"
        )
    return 3 if failed else 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    ok, _ = run_selftest(seed=args.seed, flip_sigma=args.flip_sigma)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="blochsurf",
        description="Scattering from locally perturbed periodic surfaces",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one case")
    _add_common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_table = sub.add_parser("table", help="run an (N, h) grid")
    _add_common(p_table)
    p_table.add_argument("--N-list", type=str, default="20,40,80")
    p_table.add_argument("--h-list", type=str, default="0.16,0.08,0.04")
    p_table.set_defaults(func=cmd_table)

    p_self = sub.add_parser("selftest", help="property suite and conventions")
    p_self.add_argument("--seed", type=int, default=0)
    p_self.add_argument("--flip-sigma", action="store_true", help="negative control")
    p_self.set_defaults(func=cmd_selftest)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver.

Subcommands: solve, sweep, converge, shift-stats, coverage.
Exit codes: 0 success, 2 solver non-convergence (solve), 1 config/internal error.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import sys
from dataclasses import replace

import numpy as np

from .assembly import assemble, shift_statistics
from .fem import DofHandler
from .geometry import unit_circle
from .harness import CSV_HEADER, SolverConfig, run, sweep, verify_convergence
from .mesh import classify_cells, dump_classification, vertex_active_counts
from .smoother import build_patches


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SystemExit2(message)


class SystemExit2(Exception):
    pass


def _int_list(text: str):
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",")]


def _float_list(text: str):
    return [float(t) for t in text.split(",")]


def _add_common(sub):
    sub.add_argument("--p", default="1", help="polynomial degree(s), comma list")
    sub.add_argument("--levels", default="3", help="refinement level(s): N, a,b,c or a:b")
    sub.add_argument("--lambda", dest="lam", default="0.0", help="cell threshold(s)")
    sub.add_argument("--shyness", default="3", help="shyness threshold(s)")
    sub.add_argument("--smooth-steps", default="3", help="smoothing stage count(s)")
    sub.add_argument("--mg", default="h", choices=["h", "p"], help="multigrid mode")
    sub.add_argument("--sigma", type=float, default=5.0)
    sub.add_argument("--tol", type=float, default=1e-8)
    sub.add_argument("--max-iter", type=int, default=100)
    sub.add_argument("--out", default=None, help="output CSV path")
    sub.add_argument("--dump-matrix", default=None, help="MatrixMarket dump path")
    sub.add_argument("--dump-classification", default=None, help="cell classification CSV path")


def _single_config(args) -> SolverConfig:
    return SolverConfig(
        mode=args.mg,
        p=_int_list(args.p)[0],
        refinements=_int_list(args.levels)[0],
        lam=_float_list(args.lam)[0],
        shyness=_int_list(args.shyness)[0],
        smooth_steps=_int_list(args.smooth_steps)[0],
        sigma=args.sigma,
        tol=args.tol,
        max_iter=args.max_iter,
    )


def _cmd_solve(args) -> int:
    config = _single_config(args)
    if args.dump_classification:
        mesh = classify_cells(config.refinements, unit_circle(), config.lam)
        dump_classification(mesh, args.dump_classification)
    rec = run(config)
    if args.dump_matrix:
        from scipy.io import mmwrite

        hier_cfg = config
        mesh = classify_cells(hier_cfg.refinements, unit_circle(), hier_cfg.lam)
        dh = DofHandler(mesh, hier_cfg.p)
        system = assemble(mesh, dh, unit_circle(), sigma=hier_cfg.sigma)
        mmwrite(args.dump_matrix, system.matrix)
        mmwrite(args.dump_matrix + ".rhs", np.atleast_2d(system.rhs).T)
    header = CSV_HEADER.split(",")
    row = rec.to_row()
    for name, value in zip(header, row):
        print(f"{name}: {value}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerow(row)
    return 0 if rec.converged else 2


def _cmd_sweep(args) -> int:
    if not args.out:
        raise SystemExit2("sweep requires --out <csv>")
    configs = [
        SolverConfig(
            mode=args.mg,
            p=p,
            refinements=L,
            lam=lam,
            shyness=xi,
            smooth_steps=s,
            sigma=args.sigma,
            tol=args.tol,
            max_iter=args.max_iter,
        )
        for p, L, lam, xi, s in itertools.product(
            _int_list(args.p),
            _int_list(args.levels),
            _float_list(args.lam),
            _int_list(args.shyness),
            _int_list(args.smooth_steps),
        )
    ]
    records = sweep(configs, args.out)
    done = sum(1 for r in records if r.converged)
    print(f"{len(records)} runs -> {args.out} ({done} converged)")
    return 0


def _cmd_converge(args) -> int:
    levels = _int_list(args.levels)
    base = SolverConfig(
        mode=args.mg, sigma=args.sigma, tol=args.tol, max_iter=args.max_iter,
        shyness=_int_list(args.shyness)[0], smooth_steps=_int_list(args.smooth_steps)[0],
    )
    rows = []
    for p in _int_list(args.p):
        order, errors, hs = verify_convergence(p, levels, base)
        print(f"p={p}: observed L2 order {order:.3f}")
        for L, h, e in zip(levels, hs, errors):
            print(f"  L={L} h={h:.6e} l2_error={e:.6e}")
        rows.append((p, order, errors))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["p", "order"] + [f"err_L{L}" for L in levels])
            for p, order, errors in rows:
                writer.writerow([p, repr(order)] + [repr(e) for e in errors])
    return 0


def _cmd_shift_stats(args) -> int:
    config = _single_config(args)
    geom = unit_circle()
    mesh = classify_cells(config.refinements, geom, config.lam)
    dh = DofHandler(mesh, config.p)
    system = assemble(mesh, dh, geom, sigma=config.sigma)
    smin, smax = shift_statistics(system, mesh.h)
    reported_min = min(0.0, smin)
    print(f"shift_min: {reported_min!r}")
    print(f"shift_max: {smax!r}")
    print(f"literal_min: {smin!r}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["p", "refinements", "lambda", "shift_min", "shift_max", "literal_min"])
            writer.writerow([config.p, config.refinements, repr(config.lam), repr(reported_min), repr(smax), repr(smin)])
    return 0


def _cmd_coverage(args) -> int:
    config = _single_config(args)
    geom = unit_circle()
    mesh = classify_cells(config.refinements, geom, config.lam)
    dh = DofHandler(mesh, config.p)
    patches = build_patches(mesh, dh, None, config.shyness, factorize=False)
    counts = vertex_active_counts(mesh)
    formed = np.zeros_like(counts, dtype=bool)
    n = mesh.cells_per_dim
    for ci in range(len(patches.reg_vertices)):
        for vy, vx in patches.reg_vertices[ci]:
            formed[vy, vx] = True
        for pk in patches.irr_by_color[ci]:
            formed[pk.vertex // (n + 1), pk.vertex % (n + 1)] = True
    uncovered = patches.uncovered_dofs
    print(f"patches: {len(patches)}  uncovered active DoFs: {len(uncovered)}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["vertex_id", "active_cell_count", "patch_formed", "uncovered_dofs"])
            for vy in range(n + 1):
                for vx in range(n + 1):
                    writer.writerow(
                        [vy * (n + 1) + vx, int(counts[vy, vx]), str(bool(formed[vy, vx])).lower(), ""]
                    )
            writer.writerow(["TOTAL", "", "", " ".join(str(d) for d in uncovered.tolist())])
    return 0


def main(argv=None) -> int:
    parser = _Parser(prog="sbmg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("solve", _cmd_solve),
        ("sweep", _cmd_sweep),
        ("converge", _cmd_converge),
        ("shift-stats", _cmd_shift_stats),
        ("coverage", _cmd_coverage),
    ):
        s = sub.add_parser(name)
        _add_common(s)
        s.set_defaults(fn=fn)
    try:
        args = parser.parse_args(argv)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

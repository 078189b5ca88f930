"""Command line entry point: ``bionet run`` and ``bionet accuracy``."""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import accuracy, io
from .linsolve import SolverConfig
from .mesh import build_unit_square_mesh
from .model import SimulationError, run_simulation

log = logging.getLogger("bionet")

ENV_OUT_DIR = "BIONET_OUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer, got {text}")
    return v


def _tolerance(text: str) -> float:
    v = _positive_float(text)
    if v >= 1:
        raise argparse.ArgumentTypeError(f"tolerance must be below 1, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bionet", description="Finite element solver for the Cai-Hu network model.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("config", help=f"preset name ({', '.join(io.PRESETS)}) or key=value file")
    run.add_argument("--out", type=Path, help=f"output directory (default ${ENV_OUT_DIR} or ./bionet-out)")
    run.add_argument("--n-div", type=_positive_int, help="mesh subdivisions per side")
    run.add_argument("--dt", type=_positive_float, help="time step")
    run.add_argument("--t-final", type=_positive_float, help="final time")
    run.add_argument("--snapshot-every", type=_nonneg_int, help="field snapshot cadence in steps (0: first/last only)")
    run.add_argument("--steady-tol", type=_nonneg_float, help="relative increment threshold (0 disables)")
    run.add_argument("--solver-tol", type=_tolerance, help="CG relative tolerance")
    run.add_argument("--formats", help="comma separated subset of vtk,csv")
    run.add_argument("--serial", action="store_true", help="single-threaded, deterministic execution")

    acc = sub.add_parser("accuracy", help="convergence study with dt = h")
    acc.add_argument("preset")
    acc.add_argument("--levels", type=_positive_int, default=4, help="number of meshes (default 4)")
    acc.add_argument("--coarsest", type=_positive_int, default=20, help="n_div of the coarsest mesh")
    acc.add_argument("--out", type=Path)
    acc.add_argument("--solver-tol", type=_tolerance)
    acc.add_argument("--workers", type=_positive_int, default=1)
    acc.add_argument("--serial", action="store_true")
    return parser


def _out_dir(arg: Optional[Path], configured: Optional[Path], name: str) -> Path:
    base = arg or configured or Path(os.environ.get(ENV_OUT_DIR) or "bionet-out")
    return base if (arg or configured) else base / name


@contextlib.contextmanager
def _threads(serial: bool):
    if not serial:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


def _cmd_run(args) -> int:
    cfg = io.load_config(args.config)
    cfg = cfg.with_overrides(
        n_div=args.n_div, dt=args.dt, t_final=args.t_final,
        snapshot_every=args.snapshot_every, steady_tol=args.steady_tol,
        solver_tol=args.solver_tol,
        formats=io.parse_formats(args.formats) if args.formats else None,
    )
    out = _out_dir(args.out, cfg.out_dir, cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.params
    log.info("%s: n_div=%d dt=%g T=%g -> %s", cfg.name, p.n_div, p.dt, p.t_final, out)

    mesh = build_unit_square_mesh(p.n_div)
    written: list[Path] = []

    def save(state, record):
        if record.step % 100 == 0:
            log.info("step %d t=%.4g energy=%.10g increment=%.3e",
                     record.step, record.time, record.energy, record.increment_norm)
        if record.snapshot is None:
            return
        stem = out / f"fields_{record.step:06d}"
        if "vtk" in cfg.formats:
            io.write_fields_vtk(mesh, record.snapshot, stem.with_suffix(".vtk"))
            written.append(stem.with_suffix(".vtk"))
        if "csv" in cfg.formats:
            io.write_fields_csv(mesh, record.snapshot, stem.with_suffix(".csv"))
        record.snapshot = None  # already on disk

    with _threads(args.serial):
        result = run_simulation(
            p, [save], mesh=mesh,
            solver=SolverConfig(rel_tolerance=cfg.solver_tol),
            steady_tol=cfg.steady_tol or None,
            snapshot_every=cfg.snapshot_every or None,
        )
    io.write_energy_csv(result.records, out / "energy.csv")
    last = result.records[-1]
    status = "steady state" if result.steady else "final time"
    print(f"{cfg.name}: {status} at step {last.step} (t={last.time:g}), energy {last.energy:.10g}")
    print(f"wrote {out / 'energy.csv'}" + (f" and {len(written)} VTK files" if written else ""))
    return 0


def _cmd_accuracy(args) -> int:
    params = io.preset_params(args.preset)
    name = io.lookup_preset(args.preset)
    if args.levels < 2:
        raise UsageError("--levels must be at least 2")
    out = _out_dir(args.out, None, name)
    out.mkdir(parents=True, exist_ok=True)
    solver = SolverConfig(rel_tolerance=args.solver_tol) if args.solver_tol else None
    h_list = accuracy.halving_levels(args.coarsest, args.levels)
    with _threads(args.serial):
        rows = accuracy.richardson_study(params, h_list, solver=solver,
                                         workers=1 if args.serial else args.workers)
    table = accuracy.format_table(rows)
    accuracy.write_convergence_csv(rows, out / "convergence.csv")
    (out / "convergence.txt").write_text(f"{name}\n{table}")
    print(f"{name}\n{table}", end="")
    print(f"wrote {out / 'convergence.csv'}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return _cmd_run(args) if args.command == "run" else _cmd_accuracy(args)
    except UsageError as exc:
        print(f"bionet: {exc}", file=sys.stderr)
        return 2
    except io.ConfigError as exc:
        print(f"bionet: configuration error (cli_io): {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        module = type(exc.cause).__module__.removeprefix("bionet.")
        print(f"bionet: error in {module} during {exc.stage} at step {exc.step}: {exc.cause}",
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"bionet: I/O error (cli_io): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``igrid run | bench | dims``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.

With ``--transport tcp`` the command either joins a run as a single rank
(when ``IGRID_RANK`` is set) or spawns ``--ranks`` local copies of itself
that meet at a coordinator on a free localhost port.
"""
import argparse
import json
import logging
import os
import subprocess
import sys
import tempfile
import traceback

import numpy as np

from . import bench as benchmod
from .errors import IGridError
from .heat3d import HeatParams, run_rank, write_field, write_timings
from .topology import dims_create
from .transport import connect_from_env, free_port, run_inproc

log = logging.getLogger("igrid")


class UsageError(Exception):
    pass


def _topology(text):
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AxBxC, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive counts AxBxC, got {text!r}")
    return dims


def _triple(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected bx,by,bz, got {text!r}") from None
    if len(vals) != 3 or min(vals) < 0:
        raise argparse.ArgumentTypeError(f"expected three non-negative widths, got {text!r}")
    return vals


def _periodic(text):
    axes = {a.strip().lower() for a in text.split(",") if a.strip()}
    if not axes <= {"x", "y", "z"}:
        raise argparse.ArgumentTypeError(f"periodic axes must be among x,y,z, got {text!r}")
    return tuple(a in axes for a in "xyz")


def _rank_list(text):
    try:
        vals = sorted({int(v) for v in text.split(",")})
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of rank counts, got {text!r}") from None
    if not vals or vals[0] < 1:
        raise argparse.ArgumentTypeError("rank counts must be positive")
    return vals


def _fixed(text):
    fixed = [None, None, None]
    for item in text.split(","):
        axis, sep, value = item.partition("=")
        axis = axis.strip().lower()
        if not sep or axis not in ("x", "y", "z"):
            raise argparse.ArgumentTypeError(f"expected axis=k entries, got {item!r}")
        try:
            fixed["xyz".index(axis)] = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad count in {item!r}") from None
    return tuple(fixed)


def build_parser():
    parser = argparse.ArgumentParser(prog="igrid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def app_flags(p, n_default, nt_default):
        p.add_argument("--nx", type=int, default=n_default, help="local grid points in x")
        p.add_argument("--ny", type=int, default=n_default)
        p.add_argument("--nz", type=int, default=n_default)
        p.add_argument("--nt", type=int, default=nt_default)
        p.add_argument("--init", choices=["constant", "gaussian"], default="constant")
        p.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
        p.add_argument("--hide-comm", type=_triple, default=None, metavar="BX,BY,BZ")
        p.add_argument("--overlap", type=int, default=2)
        p.add_argument("--seed", type=int, default=0, help="seeds numpy's global RNG")

    run = sub.add_parser("run", help="run the 3-D heat diffusion solver")
    app_flags(run, 32, 100)
    run.add_argument("--ranks", type=int, default=1)
    run.add_argument("--topology", type=_topology, default=None, metavar="AxBxC")
    run.add_argument("--periodic", type=_periodic, default=(False, False, False), metavar="x,y,z")
    run.add_argument("--out", default=None, metavar="FILE", help="gathered field output")
    run.add_argument("--csv", default=None, metavar="FILE", help="per-iteration timing CSV")

    bench = sub.add_parser("bench", help="desk-scale weak-scaling benchmark")
    app_flags(bench, 64, 5)
    bench.add_argument("--ranks", type=_rank_list, default=[1, 2, 4, 8], metavar="N,N,...")
    bench.add_argument("--samples", type=int, default=20)
    bench.add_argument("--warmup", type=int, default=1)
    bench.add_argument("--csv", default=None, metavar="FILE")
    bench.add_argument("--worker-out", default=None, help=argparse.SUPPRESS)

    dims = sub.add_parser("dims", help="print the automatic process grid")
    dims.add_argument("-n", "--nprocs", type=int, required=True)
    dims.add_argument("--fix", type=_fixed, default=None, metavar="x=K,y=K,z=K")
    return parser


def _params(args):
    return HeatParams(nx=args.nx, ny=args.ny, nz=args.nz, nt=args.nt, init=args.init)


def _spawn(argv, nprocs):
    """Launch ``nprocs`` rank processes of ``igrid <argv>`` joined over TCP."""
    env_base = dict(os.environ)
    env_base["IGRID_COORDINATOR"] = f"127.0.0.1:{free_port()}"
    env_base["IGRID_NPROCS"] = str(nprocs)
    procs = []
    for r in range(nprocs):
        env = dict(env_base, IGRID_RANK=str(r))
        procs.append(subprocess.Popen([sys.executable, "-m", "igrid", *argv], env=env))
    codes = [p.wait() for p in procs]
    failed = [(r, c) for r, c in enumerate(codes) if c]
    for r, c in failed:
        print(f"igrid: rank {r} exited with status {c}", file=sys.stderr)
    return 1 if failed else 0


def _joined():
    return os.environ.get("IGRID_RANK") not in (None, "")


def cmd_run(args, argv):
    if args.ranks < 1:
        raise UsageError("--ranks must be at least 1")
    if args.topology is not None and int(np.prod(args.topology)) != args.ranks:
        raise UsageError(f"--topology {args.topology} does not multiply to --ranks {args.ranks}")
    np.random.seed(args.seed)
    params = _params(args)
    options = dict(
        dims=args.topology, periodic=args.periodic, overlap=args.overlap, hide_comm=args.hide_comm
    )
    if args.transport == "tcp" and not _joined():
        return _spawn(argv, args.ranks)
    if args.transport == "tcp":
        comm = connect_from_env()
        try:
            result = run_rank(comm, params, **options)
        finally:
            comm.close()
        is_root = comm.rank == 0
    else:
        result = run_inproc(args.ranks, run_rank, params, **options)[0]
        is_root = True
    if is_root:
        _report_run(args, result)
    return 0


def _report_run(args, result):
    if args.out:
        write_field(args.out, result.T)
    if args.csv:
        write_timings(args.csv, result.timings)
    totals = np.array([t[3] for t in result.timings])
    halos = np.array([t[2] for t in result.timings])
    print(
        f"global grid {result.global_n[0]}x{result.global_n[1]}x{result.global_n[2]} on "
        f"{result.dims[0]}x{result.dims[1]}x{result.dims[2]} ranks, dt={result.dt:.6e}, "
        f"{len(totals)} iterations, median {np.median(totals) if totals.size else 0:.3e} s/it "
        f"(halo {np.median(halos) if halos.size else 0:.3e} s)"
    )


def cmd_bench(args, argv):
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    params = _params(args)
    options = dict(samples=args.samples, warmup=args.warmup, hide_comm=args.hide_comm, overlap=args.overlap)

    if args.transport == "tcp" and _joined():
        comm = connect_from_env()
        try:
            samples = benchmod.bench_rank(comm, params, **options)
        finally:
            comm.close()
        if comm.rank == 0 and args.worker_out:
            with open(args.worker_out, "w") as f:
                json.dump(samples, f)
        return 0

    by_ranks = {}
    for nprocs in args.ranks:
        if args.transport == "tcp":
            with tempfile.TemporaryDirectory() as tmp:
                out = os.path.join(tmp, "samples.json")
                worker = _strip_flag(argv, "--ranks") + ["--ranks", str(nprocs), "--worker-out", out]
                if _spawn(worker, nprocs):
                    return 1
                with open(out) as f:
                    by_ranks[nprocs] = json.load(f)
        else:
            by_ranks[nprocs] = run_inproc(nprocs, benchmod.bench_rank, params, **options)[0]
        log.info("bench: %d ranks done", nprocs)

    rows = benchmod.summarize(by_ranks)
    if args.csv:
        benchmod.write_csv(args.csv, rows)
    benchmod.write_csv(sys.stdout, rows)
    return 0


def _strip_flag(argv, flag):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == flag:
            skip = True
            continue
        if a.startswith(flag + "="):
            continue
        out.append(a)
    return out


def cmd_dims(args, argv):
    dims = dims_create(args.nprocs, 3, args.fix)
    print("x".join(str(d) for d in dims))
    return 0


COMMANDS = {"run": cmd_run, "bench": cmd_bench, "dims": cmd_dims}


def _origin(exc):
    """Innermost igrid module on the traceback of ``exc``."""
    module = "igrid"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("igrid"):
            module = name
    return module


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        parser.error(str(exc))
    except (IGridError, OSError, ValueError) as exc:
        rank = os.environ.get("IGRID_RANK", "0" if not _joined() else "?")
        print(f"igrid: error in {_origin(exc)} (rank {rank}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: generate, solve, bench, sweep, plot.

Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric or solver failure.
The default output directory comes from ``RLTSP_OUT`` (else the current one).
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, svg
from .exceptions import (
    ConstraintViolationError,
    InfeasibleConstraintsError,
    NumericError,
    ParseError,
    SizeLimitError,
    TspError,
)
from .solver import SolverConfig, gap_percent, load_config, solve, sweep
from .tsp_core import (
    HELD_KARP_LIMIT,
    TspInstance,
    check_tour,
    load_instance,
    nearest_neighbor,
    random_instance,
    reference_length,
    serialize_instance,
)

log = logging.getLogger("rltsp")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3
OUT_ENV = "RLTSP_OUT"
HISTORY_COLUMNS = ("step", "best_length", "batch_mean", "critic_mse")
BENCH_COLUMNS = (
    "n", "seeds", "reference", "mean_best_length", "mean_reference", "gap_pct", "mean_seconds",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    return repr(float(x))


def out_dir(args) -> Path:
    base = args.out or os.environ.get(OUT_ENV) or "."
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _int_list(text: str) -> list[int]:
    """``"1,2,5"`` or ``"0-19"`` or a mix of both."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _grid(text: str, name: str) -> list[int]:
    values = _int_list(text)
    uniq = sorted(set(values))
    if len(uniq) != len(values):
        log.warning("duplicate values in %s removed: %s", name, values)
    if not uniq:
        raise UsageError(f"{name} must not be empty")
    return uniq


# -- config ----------------------------------------------------------------


def build_config(args) -> SolverConfig:
    overrides = {
        "steps": args.steps,
        "samples_T": args.samples,
        "batch_B": args.batch,
        "update_K": args.k,
        "epsilon": args.epsilon,
        "init_mode": args.init,
        "boost": args.boost,
        "seed": args.seed,
    }
    if args.k_schedule:
        try:
            start, inc, cap = (int(x) for x in args.k_schedule.split(","))
        except ValueError:
            raise UsageError("--k-schedule expects START,INCREMENT,CAP") from None
        overrides.update(update_K=start, k_increment=inc, k_cap=cap)
    if args.config:
        return load_config(args.config, **overrides)
    return SolverConfig(**{k: v for k, v in overrides.items() if v is not None})


def _instance(args) -> TspInstance:
    if args.instance:
        return load_instance(args.instance)
    if args.n is None:
        raise UsageError("give an instance file or --n")
    return random_instance(args.n, args.seed or 0)


def _reference(instance, kind):
    if kind == "exact" and instance.n > HELD_KARP_LIMIT:
        raise UsageError(
            f"--reference exact needs n <= {HELD_KARP_LIMIT}, instance has n={instance.n}"
        )
    return reference_length(instance, kind or "auto")


# -- records ---------------------------------------------------------------


def run_record(instance, config, result, reference, started, elapsed) -> dict:
    ref_len, ref_name = reference
    return {
        "format": "rltsp-run",
        "artifact_version": __version__,
        "fingerprint": instance.fingerprint(),
        "n": instance.n,
        "config": config.to_dict(),
        "result": {
            "best_length": result.best_length,
            "best_tour": result.best_tour.tolist(),
            "policy": result.policy.tolist(),
            "steps_run": result.steps_run,
            "fallbacks": result.fallbacks,
            "error": result.error,
            "reference": ref_name,
            "reference_length": ref_len,
            "gap_pct": gap_percent(result.best_length, ref_len),
        },
        "wall_clock": {
            "started": started,
            "seconds": elapsed,
            "timings": result.timings,
            "host": platform.node(),
        },
    }


def write_history(path, result):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for r in result.history:
            w.writerow([r.step, _fmt(r.best_length), _fmt(r.batch_mean), _fmt(r.critic_mse)])


def read_history(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != HISTORY_COLUMNS:
        raise ParseError(f"unexpected history header {rows[0]}", 1)
    return np.array([[float(x) for x in r] for r in rows[1:]])


# -- commands --------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.n is None or args.n < 3:
        raise UsageError("--n must be at least 3")
    instance = random_instance(args.n, args.seed or 0)
    path = Path(args.out) if args.out and args.out.endswith((".tsp", ".txt")) else (
        out_dir(args) / f"instance_n{args.n}_s{args.seed or 0}.txt"
    )
    with open(path, "w", newline="\n") as fh:
        fh.write(serialize_instance(instance))
    print(f"{path}\t{instance.fingerprint()}")
    return EXIT_OK


def cmd_solve(args) -> int:
    config = build_config(args)
    instance = _instance(args)
    reference = _reference(instance, args.reference)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    result = solve(instance, config)
    elapsed = time.perf_counter() - t0
    record = run_record(instance, config, result, reference, started, elapsed)
    d = out_dir(args)
    with open(d / "run.json", "w") as fh:
        json.dump(record, fh, indent=2)
    write_history(d / "history.csv", result)
    if args.dump_matrix:
        with open(d / "matrix.csv", "w", newline="") as fh:
            fh.write(result.final_matrix.to_csv())
    ref_len, ref_name = reference
    print(f"best length {result.best_length:.6f}")
    print(f"{ref_name} reference {ref_len:.6f}  gap {record['result']['gap_pct']:.3f}%")
    if not result.ok:
        print(f"solver stopped early (numeric): {result.error}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_bench(args) -> int:
    config = build_config(args)
    sizes = _grid(args.sizes, "--sizes")
    seeds = _int_list(args.seeds)
    if not seeds:
        raise UsageError("--seeds must not be empty")
    rows = []
    for n in sizes:
        best, refs, secs = [], [], []
        name = None
        for s in seeds:
            inst = random_instance(n, s)
            ref_len, name = _reference(inst, args.reference)
            t0 = time.perf_counter()
            result = solve(inst, config.replace(seed=s))
            secs.append(time.perf_counter() - t0)
            if not result.ok:
                log.warning("n=%d seed=%d stopped early: %s", n, s, result.error)
            best.append(result.best_length)
            refs.append(ref_len)
        mb, mr = float(np.mean(best)), float(np.mean(refs))
        rows.append((n, len(seeds), name, mb, mr, gap_percent(mb, mr), float(np.mean(secs))))
        print(f"n={n:<4d} best {mb:.4f}  {name} {mr:.4f}  gap {gap_percent(mb, mr):6.2f}%  "
              f"{np.mean(secs):.2f}s/solve")
    with open(out_dir(args) / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        for n, k, name, mb, mr, gap, sec in rows:
            w.writerow([n, k, name, _fmt(mb), _fmt(mr), _fmt(gap), _fmt(sec)])
    return EXIT_OK


def sweep_table(instances, samples_grid, steps_grid, config, reference=None):
    """Median % gap per cell over ``instances``; seed k goes with instance k."""
    cells = []
    for k, inst in enumerate(instances):
        ref = _reference(inst, reference)[0]
        cells.append(sweep(inst, samples_grid, steps_grid, config.replace(seed=config.seed + k), ref))
    return {key: float(np.median([c[key] for c in cells])) for key in cells[0]}


def write_sweep(path, table, samples_grid, steps_grid):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["samples", *steps_grid])
        for T in samples_grid:
            w.writerow([T, *(_fmt(table[(T, s)]) for s in steps_grid)])


def read_sweep(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    steps = [int(x) for x in rows[0][1:]]
    return {(int(r[0]), s): float(x) for r in rows[1:] for s, x in zip(steps, r[1:])}


def cmd_sweep(args) -> int:
    config = build_config(args)
    samples_grid = _grid(args.samples_grid, "--samples-grid")
    steps_grid = _grid(args.steps_grid, "--steps-grid")
    if args.instance:
        instances = [load_instance(args.instance)]
    else:
        if args.n is None:
            raise UsageError("give an instance file or --n")
        instances = [random_instance(args.n, s) for s in _int_list(args.seeds)]
        if not instances:
            raise UsageError("--seeds must not be empty")
    table = sweep_table(instances, samples_grid, steps_grid, config, args.reference)
    write_sweep(out_dir(args) / "sweep.csv", table, samples_grid, steps_grid)
    print("samples\\steps " + " ".join(f"{s:>8d}" for s in steps_grid))
    for T in samples_grid:
        print(f"{T:>13d} " + " ".join(f"{table[(T, s)]:8.2f}" for s in steps_grid))
    return EXIT_OK


def _plot_tour(args, instance):
    source = args.tour
    if source == "nn":
        return nearest_neighbor(instance, 0), "nearest neighbor"
    if source == "solve":
        config = build_config(args)
        return solve(instance, config).best_tour, "solve"
    with open(source) as fh:
        record = json.load(fh)
    if record.get("fingerprint") not in (None, instance.fingerprint()):
        raise ConstraintViolationError("result file was produced for a different instance")
    return check_tour(instance.n, record["result"]["best_tour"]), Path(source).stem


def cmd_plot(args) -> int:
    if not args.instance:
        raise UsageError("plot needs an instance file")
    instance = load_instance(args.instance)
    tour, title = _plot_tour(args, instance)
    path = Path(args.out) if args.out and args.out.endswith(".svg") else (
        out_dir(args) / f"{Path(args.instance).stem}.svg"
    )
    svg.write_tour_svg(path, instance, tour, title)
    print(path)
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def _shared(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("--config", default=None, help="key = value config file")


def _solver_flags(p):
    p.add_argument("--steps", type=int)
    p.add_argument("--samples", type=int, help="tours sampled per step")
    p.add_argument("--batch", type=int, help="training batch drawn from the samples")
    p.add_argument("--k", type=int, help="steps between matrix updates")
    p.add_argument("--k-schedule", help="START,INCREMENT,CAP growth of K")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--init", choices=("uniform", "nn"))
    p.add_argument("--boost", type=float)
    p.add_argument("--reference", choices=("exact", "two-opt"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rltsp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a uniform random instance")
    _shared(p)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one instance")
    _shared(p)
    p.add_argument("instance", nargs="?")
    p.add_argument("--n", type=int, help="solve a random instance of this size")
    _solver_flags(p)
    p.add_argument("--dump-matrix", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="mean gap per size over seeds")
    _shared(p)
    p.add_argument("--sizes", default="10,20")
    p.add_argument("--seeds", default="0-19")
    _solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="gap over a samples x steps grid")
    _shared(p)
    p.add_argument("instance", nargs="?")
    p.add_argument("--n", type=int)
    p.add_argument("--seeds", default="0")
    p.add_argument("--samples-grid", default="10,50,200")
    p.add_argument("--steps-grid", default="50,150,300")
    _solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="SVG of a tour")
    _shared(p)
    p.add_argument("instance")
    p.add_argument("--tour", default="nn", help="nn, solve, or a run.json file")
    _solver_flags(p)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rltsp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError) as exc:
        print(f"rltsp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"rltsp: numeric error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConstraintViolationError, InfeasibleConstraintsError) as exc:
        print(f"rltsp: constraint error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SizeLimitError, TspError, ValueError) as exc:
        print(f"rltsp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``osbm <command> [flags]``.

Every command writes plain UTF-8 text with LF line endings to ``--out``
(standard output by default).  Floats are written in their shortest
round-trip form, so identical argument vectors give identical bytes.

Exit codes: 0 success, 1 usage or validation error (and a verify run with a
failed case), 2 quadrature that did not converge, 3 work budget exceeded.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import itertools
import json
import math
import sys
from typing import Callable, Sequence

import numpy as np

from . import lawlib
from .core import CouplingParams, OsbmParams, RngSpec, validate_coupling
from .coupling import build_pair, pair_to_csv, simulate_Z
from .errors import (
    BudgetExceeded,
    GridExhausted,
    OsbmError,
    ParameterError,
    QuadratureNonConvergence,
    UnknownSuite,
)
from .kernel import transition_kernel
from .simulate import ENGINES, SimConfig, path_to_csv, sample_terminal, simulate_osbm, simulate_osbm_euler
from .verify import SUITES, SuiteConfig, _plain, run_suite, verify_coupling

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_QUADRATURE = 2
EXIT_BUDGET = 3

DEFAULT_PARAMS = (1.0, 1.0, 1.0)
MAX_WORK = 1e9  # paths * t_max / dt
MAX_PATHS = 1_000_000


class _Usage(Exception):
    """Bad command-line input detected after parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit with 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _grid_spec(text: str) -> np.ndarray:
    """``"v"`` or ``"start:stop:count"`` (inclusive, ``count >= 1``)."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) == 3:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
            if n < 1:
                raise ValueError
            return np.linspace(lo, hi, n)
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected a number or start:stop:count, got {text!r}")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--sigma-plus", type=float, default=d, help="diffusion scale on (0, inf)")
    parser.add_argument("--sigma-minus", type=float, default=d, help="diffusion scale on (-inf, 0)")
    parser.add_argument("--theta", type=float, default=d, help="stickiness at 0")
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 42, help="master seed")
    parser.add_argument("--out", default=argparse.SUPPRESS if suppress else "-", help="output file, '-' for stdout")
    parser.add_argument(
        "--format", choices=("csv", "json"), default=d, help="output format (default depends on the command)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="osbm", description="Oscillating sticky Brownian motion: laws, simulation, verification.")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("kernel", parents=[common], help="tabulate the transition density and atom")
    k.add_argument("--t", type=float, default=1.0)
    k.add_argument("--x", type=float, default=0.0)
    k.add_argument("--y-min", type=float, default=-5.0)
    k.add_argument("--y-max", type=float, default=5.0)
    k.add_argument("--points", type=int, default=1001)
    k.set_defaults(run=cmd_kernel)

    d = sub.add_parser("density", parents=[common], help="tabulate a joint or marginal density")
    d.add_argument("--kind", choices=("trivariate", "joint", "occupation", "localtime"), required=True)
    d.add_argument("--t", type=float, default=1.0)
    d.add_argument("--x", type=float, default=0.0)
    for name in ("y", "l", "tau"):
        d.add_argument(f"--{name}", type=_grid_spec, default=None, metavar="V|A:B:N")
    d.add_argument("--form", choices=("derived", "printed"), default="derived", help="occupation constants")
    d.set_defaults(run=cmd_density)

    s = sub.add_parser("simulate", parents=[common], help="simulate paths and summarise terminal values")
    s.add_argument("--paths", type=int, default=1000)
    s.add_argument("--t-max", type=float, default=1.0)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--x0", type=float, default=0.0)
    s.add_argument("--engine", choices=ENGINES, default="timechange")
    s.add_argument("--dump-paths", type=int, default=0, metavar="K", help="write the first K paths as CSV")
    s.add_argument("--dump-prefix", default="osbm_path", help="dump files are PREFIX_<i>.csv")
    s.add_argument("--max-work", type=float, default=MAX_WORK, help="cap on paths * t_max / dt")
    s.set_defaults(run=cmd_simulate)

    c = sub.add_parser("couple", parents=[common], help="sticky coupling of two drifted Brownian motions")
    c.add_argument("--beta1", type=float, default=0.5)
    c.add_argument("--beta2", type=float, default=-0.5)
    c.add_argument("--x1", type=float, default=0.0)
    c.add_argument("--x2", type=float, default=0.0)
    c.add_argument("--pairs", type=int, default=1000)
    c.add_argument("--t-max", type=float, default=1.0)
    c.add_argument("--dt", type=float, default=1e-3)
    c.add_argument("--dump-pairs", type=int, default=0, metavar="K", help="write the first K pairs as CSV")
    c.add_argument("--dump-prefix", default="osbm_pair", help="dump files are PREFIX_<i>.csv")
    c.add_argument("--max-work", type=float, default=MAX_WORK, help="cap on pairs * t_max / dt")
    c.set_defaults(run=cmd_couple)

    v = sub.add_parser("verify", parents=[common], help="run a verification suite and write its JSON report")
    v.add_argument("--suite", default="all", help=f"one of {', '.join(SUITES)}")
    v.add_argument("--paths", type=int, default=None, help="Monte Carlo paths per sample")
    v.add_argument("--pairs", type=int, default=None, help="coupled pairs per sample")
    v.add_argument("--t", type=float, default=None)
    v.add_argument("--dt", type=float, default=None)
    v.add_argument("--report", default=None, help="report file (default: --out, i.e. stdout)")
    v.set_defaults(run=cmd_verify)
    return parser


# --------------------------------------------------------------------------
# helpers


def _params(args, default=DEFAULT_PARAMS) -> OsbmParams:
    vals = [args.sigma_plus, args.sigma_minus, args.theta]
    return OsbmParams(*(d if v is None else v for v, d in zip(vals, default)))


@contextlib.contextmanager
def _sink(path: str):
    if path == "-":
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def _write_file(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _table(columns: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, allow_nan=False) + "\n"


def _flat_csv(obj, prefix: str = "") -> list[tuple[str, str]]:
    out = []
    for key, val in obj.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out += _flat_csv(val, name + ".")
        elif isinstance(val, str):
            out.append((name, val))
        else:
            out.append((name, _fmt(val)))
    return out


def _emit_summary(args, summary: dict) -> None:
    if (args.format or "json") == "json":
        text = _json(summary)
    else:
        text = "key,value\n" + "".join(f"{k},{v}\n" for k, v in _flat_csv(_plain(summary)))
    with _sink(args.out) as fh:
        fh.write(text)


def _check_budget(count: int, t_max: float, dt: float, cap: float) -> None:
    if count < 0:
        raise _Usage(f"count must be >= 0, got {count}")
    if not (dt > 0 and t_max > 0):
        raise _Usage("--dt and --t-max must be > 0")
    work = count * t_max / dt
    if work > cap:
        raise BudgetExceeded(f"BudgetExceeded: {count} * {t_max!r} / {dt!r} = {work:.3g} > {cap:.3g}")


def _moments(v: np.ndarray) -> dict:
    n = len(v)
    mean = float(np.mean(v)) if n else math.nan
    var = float(np.var(v, ddof=1)) if n > 1 else math.nan
    return {"mean": mean, "var": var, "se": math.sqrt(var / n) if n > 1 else math.nan}


# --------------------------------------------------------------------------
# commands


def cmd_kernel(args) -> int:
    p = _params(args)
    if args.points < 2:
        raise _Usage(f"--points must be >= 2, got {args.points}")
    kern = transition_kernel(args.t, args.x, p)
    ys = np.linspace(args.y_min, args.y_max, args.points)
    dens = np.asarray(kern.density(ys), dtype=float)
    if (args.format or "csv") == "json":
        text = _json({"t": args.t, "x": args.x, "params": p.as_dict(), "y": ys, "density": dens, "atom_at_zero": kern.atom_at_zero})
    else:
        text = _table(("y", "density"), zip(ys, dens)) + f"# atom_at_zero,{_fmt(kern.atom_at_zero)}\n"
    with _sink(args.out) as fh:
        fh.write(text)
    return EXIT_OK


_DENSITY_COORDS = {
    "trivariate": ("y", "l", "tau"),
    "joint": ("y", "l"),
    "occupation": ("tau",),
    "localtime": ("l",),
}


def _density_fn(kind: str, t: float, x: float, p: OsbmParams, form: str) -> Callable:
    if kind == "trivariate":
        return lambda y, l, tau: float(lawlib.phi(t, x, y, l, tau, p))
    if kind == "joint":
        return lambda y, l: float(lawlib.joint_density(t, x, y, l, p))
    if kind == "occupation":
        return lambda tau: lawlib.occupation_density(t, tau, p, form=form)
    return lambda l: float(lawlib.localtime_density(t, l, p))


def cmd_density(args) -> int:
    p = _params(args)
    if not args.t > 0:
        raise _Usage(f"NonPositiveTime: --t must be > 0, got {args.t!r}")
    names = _DENSITY_COORDS[args.kind]
    grids = []
    for name in names:
        g = getattr(args, name)
        if g is None:
            raise _Usage(f"--kind {args.kind} needs --{name}")
        grids.append(g)
    fn = _density_fn(args.kind, args.t, args.x, p, args.form)
    lead = ("t",) if args.kind in ("occupation", "localtime") else ("t", "x")
    lead_vals = (args.t,) if len(lead) == 1 else (args.t, args.x)
    rows = [lead_vals + pt + (fn(*pt),) for pt in itertools.product(*(map(float, g) for g in grids))]
    columns = lead + names + ("density",)
    if (args.format or "csv") == "json":
        text = _json({"kind": args.kind, "params": p.as_dict(), "columns": list(columns), "rows": rows})
    else:
        text = _table(columns, rows)
    with _sink(args.out) as fh:
        fh.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    p = _params(args)
    _check_budget(args.paths, args.t_max, args.dt, args.max_work)
    if args.paths > MAX_PATHS:
        raise BudgetExceeded(f"BudgetExceeded: {args.paths} paths > {MAX_PATHS}")
    cfg = SimConfig(dt=args.dt, t_max=args.t_max, x0=args.x0, rng=RngSpec(args.seed, 0))
    s = sample_terminal(cfg, p, args.paths, engine=args.engine)
    summary = {
        "engine": args.engine,
        "params": p.as_dict(),
        "seed": args.seed,
        "paths": args.paths,
        "t": cfg.t_max,
        "dt": cfg.dt,
        "x0": cfg.x0,
        "x": _moments(s.x),
        "local_time": _moments(s.l),
        "occupation": _moments(s.gamma),
        "quadratic_variation": _moments(s.a),
        "sticky_time": _moments(s.sticky_time),
        "sticky_fraction": float(np.mean(s.sticky)) if len(s) else math.nan,
    }
    simulate_one = simulate_osbm if args.engine == "timechange" else simulate_osbm_euler
    for i in range(min(args.dump_paths, args.paths)):
        path = simulate_one(SimConfig(dt=args.dt, t_max=args.t_max, x0=args.x0, rng=RngSpec(args.seed, i)), p)
        _write_file(f"{args.dump_prefix}_{i}.csv", path_to_csv(path))
    _emit_summary(args, summary)
    return EXIT_OK


def cmd_couple(args) -> int:
    p = _params(args)
    c = validate_coupling(CouplingParams(args.beta1, args.beta2, args.x1, args.x2, p))
    _check_budget(args.pairs, args.t_max, args.dt, args.max_work)
    if args.pairs > MAX_PATHS:
        raise BudgetExceeded(f"BudgetExceeded: {args.pairs} pairs > {MAX_PATHS}")
    rep = verify_coupling(c, args.t_max, args.pairs, args.seed, args.dt)
    for i in range(min(args.dump_pairs, args.pairs)):
        cfg = SimConfig(dt=args.dt, t_max=args.t_max, rng=RngSpec(args.seed, 2 * i))
        pair = build_pair(simulate_Z(c, cfg), c, cfg, rng=RngSpec(args.seed, 2 * i + 1))
        _write_file(f"{args.dump_prefix}_{i}.csv", pair_to_csv(pair))
    with _sink(args.out) as fh:
        fh.write(rep.to_json())
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        raise UnknownSuite(args.suite)
    base = SuiteConfig()
    cfg = SuiteConfig(
        params=_params(args, (base.params.sigma_plus, base.params.sigma_minus, base.params.theta)),
        coupling=base.coupling,
        t=base.t if args.t is None else args.t,
        x=base.x,
        dt=base.dt if args.dt is None else args.dt,
        n_paths=base.n_paths if args.paths is None else args.paths,
        n_pairs=base.n_pairs if args.pairs is None else args.pairs,
        seed=args.seed,
    )
    if not (cfg.t > 0 and cfg.dt > 0):
        raise _Usage("--t and --dt must be > 0")
    if cfg.n_paths < 0 or cfg.n_pairs < 0:
        raise _Usage("--paths and --pairs must be >= 0")
    if max(cfg.n_paths, cfg.n_pairs) > MAX_PATHS:
        raise BudgetExceeded(f"BudgetExceeded: more than {MAX_PATHS} paths requested")
    rep = run_suite(args.suite, cfg)
    target = args.report or args.out
    with _sink(target) as fh:
        fh.write(rep.to_json())
    # keep stdout a pure JSON document when the report goes there
    lines = sys.stderr if target == "-" else sys.stdout
    for line in rep.summary_lines():
        print(line, file=lines)
    return EXIT_OK if rep.passed else EXIT_USAGE


# --------------------------------------------------------------------------


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except QuadratureNonConvergence as err:
        print(f"osbm: {err}", file=sys.stderr)
        return EXIT_QUADRATURE
    except (BudgetExceeded, GridExhausted) as err:
        print(f"osbm: {err}", file=sys.stderr)
        return EXIT_BUDGET
    except (_Usage, ParameterError, UnknownSuite, OsbmError) as err:
        print(f"osbm: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"osbm: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

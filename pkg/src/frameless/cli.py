"""Command-line front end.

Every command writes either JSON or CSV. Both formats carry the resolved
run specification (a ``run_spec`` field, or a leading ``# run_spec:`` comment
line in CSV) so an output file can be regenerated from itself.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Optional, Sequence

from .bounds import BOUND_FORM, bound_for
from .degree_model import ProtocolConfig
from .exact_analysis import DEFAULT_PRUNE_THRESHOLD, ConservationError, DegenerateDistributionError, analyze
from .monte_carlo import simulate
from .optimizer import grid, optimize_floor, optimize_peak, sweep
from .small_oracle import enumerate_exact

OUTPUT_DIR_ENV = "FRAMELESS_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_ORACLE = 4

SIG_DIGITS = 12


class UsageError(Exception):
    pass


def fmt_float(x: float) -> str:
    return format(x, f".{SIG_DIGITS}g")


def _round_floats(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        return float(fmt_float(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def render_json(run_spec: dict, result: Any) -> str:
    payload = {"run_spec": run_spec, "result": result}
    return json.dumps(_round_floats(payload), indent=2) + "\n"


def render_csv(run_spec: dict, rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> str:
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    buf.write("# run_spec: " + json.dumps(_round_floats(run_spec), separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        cells = []
        for col in columns:
            v = row.get(col, "")
            if isinstance(v, bool):
                v = str(v).lower()
            elif isinstance(v, float):
                v = fmt_float(v)
            cells.append(v)
        writer.writerow(cells)
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- argument parsing ---------------------------------------------------


def _common(p: argparse.ArgumentParser, fmt_default: str = "json") -> None:
    p.add_argument("--format", choices=("csv", "json"), default=fmt_default)
    p.add_argument("--output", "-o", help="output file (default: stdout, or $%s/<command>.<format>)" % OUTPUT_DIR_ENV)


def _schedule(p: argparse.ArgumentParser, required_n: bool = True) -> None:
    p.add_argument("--n", type=int, required=required_n, help="number of users")
    p.add_argument("--beta", type=float, help="single-stage access parameter (p = beta/n)")
    p.add_argument("--beta1", type=float, help="first-stage beta of a two-stage schedule")
    p.add_argument("--beta2", type=float, help="second-stage beta of a two-stage schedule")
    p.add_argument("--m-star", type=int, help="last slot of the first stage")


def _prune(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prune-threshold", type=float, default=DEFAULT_PRUNE_THRESHOLD)


def _m_range(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m-from", type=int, required=True)
    p.add_argument("--m-to", type=int, required=True)
    p.add_argument("--m-step", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frameless",
        description="Exact finite-length analysis, simulation and tuning of frameless ALOHA with SIC.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="exact PER/throughput for one configuration")
    _schedule(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--omega-mode", choices=("exact-binomial", "poisson", "two-stage"))
    _prune(p)
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo PER/throughput for one configuration")
    _schedule(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    _common(p)

    p = sub.add_parser("sweep", help="exact (and optionally simulated) curves over a range of m")
    _schedule(p)
    _m_range(p)
    p.add_argument("--trials", type=int, default=0, help="add simulation columns when > 0")
    p.add_argument("--seed", type=int, default=0)
    _prune(p)
    _common(p, "csv")

    p = sub.add_parser("optimize-peak", help="beta and m maximizing throughput")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta-min", type=float)
    p.add_argument("--beta-max", type=float)
    p.add_argument("--beta-step", type=float)
    p.add_argument("--m-from", type=int)
    p.add_argument("--m-to", type=int)
    p.add_argument("--m-step", type=int, default=1)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--trace-csv", help="also write the full search trace here")
    _prune(p)
    _common(p)

    p = sub.add_parser("optimize-floor", help="second-stage beta minimizing PER at a target m/n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta1", type=float, help="first-stage beta (default: run optimize-peak)")
    p.add_argument("--m-star", type=int, help="switch slot (default: run optimize-peak)")
    p.add_argument("--target-ratio", type=float, default=2.0)
    p.add_argument("--beta2-min", type=float)
    p.add_argument("--beta2-max", type=float)
    p.add_argument("--beta2-step", type=float)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--trace-csv", help="also write the full search trace here")
    _prune(p)
    _common(p)

    p = sub.add_parser("bound", help="PER lower bounds (silent-user probability)")
    _schedule(p)
    p.add_argument("--m", type=int)
    p.add_argument("--m-from", type=int)
    p.add_argument("--m-to", type=int)
    p.add_argument("--m-step", type=int, default=1)
    _common(p, "csv")

    p = sub.add_parser("verify-oracle", help="compare the DP with exhaustive enumeration on tiny instances")
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--m-max", type=int, default=5)
    p.add_argument("--betas", type=float, nargs="+", default=[0.5, 1.0, 1.5, 2.5])
    p.add_argument("--tolerance", type=float, default=1e-12)
    _prune(p)
    _common(p, "csv")
    return parser


def _config(args: argparse.Namespace, m: int) -> ProtocolConfig:
    two = [args.beta1, args.beta2, args.m_star]
    if args.beta is not None:
        if any(v is not None for v in two):
            raise UsageError("give either --beta or --beta1/--beta2/--m-star, not both")
        return ProtocolConfig.single(args.n, args.beta, m)
    if all(v is not None for v in two):
        return ProtocolConfig.two_stage(args.n, args.beta1, args.beta2, args.m_star, m)
    raise UsageError("need --beta, or all of --beta1 --beta2 --m-star")


def _m_values(args: argparse.Namespace) -> range:
    if args.m_step < 1 or args.m_from < 1 or args.m_to < args.m_from:
        raise UsageError("need 1 <= --m-from <= --m-to and --m-step >= 1")
    return range(args.m_from, args.m_to + 1, args.m_step)


def _run_spec(args: argparse.Namespace) -> dict:
    spec = {k: v for k, v in vars(args).items() if k != "verbose"}
    return dict(sorted(spec.items(), key=lambda kv: (kv[0] != "command", kv[0])))


def _schedule_columns(cfg: ProtocolConfig) -> list[str]:
    return ["beta1", "beta2", "m_star"] if cfg.is_two_stage else ["beta"]


def _emit(args, spec: dict, result: Any, rows: Optional[list[dict]] = None, columns=None) -> str:
    if args.format == "json":
        return render_json(spec, result)
    if rows is None:
        rows = [result]
    return render_csv(spec, rows, columns)


def _trace_rows(trace) -> list[dict]:
    return [
        {"beta": t.beta, "m": t.m, "throughput": t.throughput, "per": t.per, "pruned_mass": t.pruned_mass}
        for t in trace
    ]


def execute(args: argparse.Namespace) -> tuple[str, int]:
    """Run one parsed command; returns the rendered output and exit status."""
    spec = _run_spec(args)
    cmd = args.command

    if cmd == "analyze":
        cfg = _config(args, args.m)
        res = analyze(cfg, args.omega_mode, args.prune_threshold)
        return _emit(args, spec, res.to_dict()), EXIT_OK

    if cmd == "simulate":
        if args.trials < 1:
            raise UsageError("--trials must be positive")
        res = simulate(_config(args, args.m), args.trials, args.seed)
        return _emit(args, spec, res.to_dict()), EXIT_OK

    if cmd == "sweep":
        cfg = _config(args, 1)
        rows = sweep(cfg, _m_values(args), args.trials, args.seed, args.prune_threshold)
        columns = ["n", "m", "m_over_n", *_schedule_columns(cfg), "per", "throughput"]
        if args.trials > 0:
            columns += ["sim_per", "sim_throughput", "trials", "stderr_per", "stderr_throughput", "seed"]
        return _emit(args, spec, rows, rows, columns), EXIT_OK

    if cmd == "optimize-peak":
        betas = None
        if any(v is not None for v in (args.beta_min, args.beta_max, args.beta_step)):
            if None in (args.beta_min, args.beta_max, args.beta_step):
                raise UsageError("--beta-min, --beta-max and --beta-step go together")
            betas = grid(args.beta_min, args.beta_max, args.beta_step)
        ms = None
        if args.m_from is not None or args.m_to is not None:
            if args.m_from is None or args.m_to is None:
                raise UsageError("--m-from and --m-to go together")
            ms = _m_values(args)
        res = optimize_peak(args.n, betas, ms, refine=False if args.no_refine else None,
                            prune_threshold=args.prune_threshold)
        if args.trace_csv:
            write_atomic(Path(args.trace_csv), render_csv(spec, _trace_rows(res.search_trace)))
        return _emit(args, spec, res.to_dict()), EXIT_OK

    if cmd == "optimize-floor":
        beta1, m_star = args.beta1, args.m_star
        if beta1 is None or m_star is None:
            peak = optimize_peak(args.n, prune_threshold=args.prune_threshold)
            beta1 = peak.beta_max if beta1 is None else beta1
            m_star = peak.m_max if m_star is None else m_star
        betas = None
        if any(v is not None for v in (args.beta2_min, args.beta2_max, args.beta2_step)):
            if None in (args.beta2_min, args.beta2_max, args.beta2_step):
                raise UsageError("--beta2-min, --beta2-max and --beta2-step go together")
            betas = grid(args.beta2_min, args.beta2_max, args.beta2_step)
        ProtocolConfig.two_stage(args.n, beta1, beta1, m_star, 1)  # validates
        res = optimize_floor(args.n, beta1, m_star, betas, args.target_ratio,
                             refine=False if args.no_refine else None, prune_threshold=args.prune_threshold)
        if args.trace_csv:
            write_atomic(Path(args.trace_csv), render_csv(spec, _trace_rows(res.search_trace)))
        return _emit(args, spec, res.to_dict()), EXIT_OK

    if cmd == "bound":
        if args.m is not None:
            ms = [args.m]
        elif args.m_from is not None and args.m_to is not None:
            ms = _m_values(args)
        else:
            raise UsageError("need --m or --m-from/--m-to")
        rows = []
        cfg0 = _config(args, 1)
        for m in ms:
            cfg = cfg0.with_m(m)
            b = bound_for(cfg)
            row = {**cfg.to_dict(), "exact_bound": b.exact_bound, "exp_bound": b.exponential_bound,
                   "extension": b.extension, "form": BOUND_FORM}
            rows.append(row)
        columns = ["n", "m", *_schedule_columns(cfg0), "exact_bound", "exp_bound", "extension"]
        result = rows[0] if len(rows) == 1 else rows
        return _emit(args, spec, result, rows, columns), EXIT_OK

    if cmd == "verify-oracle":
        rows = verify_oracle_rows(args.n_max, args.m_max, args.betas, args.tolerance, args.prune_threshold)
        ok = all(r["pass"] for r in rows)
        return _emit(args, spec, rows, rows), (EXIT_OK if ok else EXIT_ORACLE)

    raise UsageError(f"unknown command {cmd!r}")


def verify_oracle_rows(n_max: int, m_max: int, betas, tolerance: float, prune_threshold: float) -> list[dict]:
    rows = []
    for n in range(1, n_max + 1):
        for m in range(1, m_max + 1):
            for beta in betas:
                if beta > n:
                    continue
                cfg = ProtocolConfig.single(n, beta, m)
                exact = enumerate_exact(cfg)
                dp = analyze(cfg, prune_threshold=prune_threshold)
                diff = abs(dp.per - exact.exact_per)
                rows.append({
                    "n": n, "m": m, "beta": beta,
                    "oracle_per": exact.exact_per, "dp_per": dp.per, "abs_diff": diff,
                    "pass": diff <= tolerance,
                })
    return rows


def _error_record(kind: str, exc: BaseException, spec: Optional[dict]) -> str:
    return json.dumps({"error": kind, "message": str(exc), "run_spec": spec}, default=str) + "\n"


def _destination(args: argparse.Namespace) -> Optional[Path]:
    if args.output:
        out = Path(args.output)
        base = os.environ.get(OUTPUT_DIR_ENV)
        return Path(base) / out if base and not out.is_absolute() else out
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base:
        return Path(base) / f"{args.command}.{args.format}"
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    spec = _run_spec(args)
    try:
        text, status = execute(args)
    except (UsageError, ValueError) as exc:
        sys.stderr.write(_error_record("usage", exc, spec))
        return EXIT_USAGE
    except (DegenerateDistributionError, ConservationError) as exc:
        sys.stderr.write(_error_record("numeric", exc, spec))
        return EXIT_NUMERIC
    dest = _destination(args)
    if dest is None:
        sys.stdout.write(text)
    else:
        write_atomic(dest, text)
    return status


if __name__ == "__main__":
    sys.exit(main())

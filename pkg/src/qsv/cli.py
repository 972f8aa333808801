"""Command-line front end: ``qsv state|gap|optimize|sweep|simulate|bench|compare``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import benchmarks
from .analysis import adversarial_bound, reduction_rate, sample_complexity, spectral_gap, evaluate_at_probabilities
from .optimize import grouped_dicke_optimize, optimize_probabilities
from .protocols import PROTOCOLS, ProtocolError, build_strategy
from .simulator import PreparedSource, pass_probability, run_verification, witness_source, write_records_csv
from .states import (
    DickeLabel,
    PureState,
    StateError,
    dicke,
    ghz,
    haar_random,
    load_state,
    state_to_json,
    w_state,
)

log = logging.getLogger("qsv")

MAX_DIM = 8192
# gaps at or below this are roundoff of an exactly zero gap; sample counts are reported as inf
ZERO_GAP_TOL = 1e-12


class CliError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _name_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _check_size(dim: int, force: bool) -> None:
    if dim > MAX_DIM and not force:
        raise CliError(f"total dimension {dim} exceeds {MAX_DIM}; pass --force to run anyway")


def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _table(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0])
    cells = [[_fmt(r[k]) for k in keys] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    lines = ["  ".join(k.rjust(w) for k, w in zip(keys, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else str(v)


def _csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r.get(k) is None else r[k]) for k in columns})
    return buf.getvalue()


def _render(rows, columns, fmt) -> str:
    if fmt == "json":
        return _json(rows)
    if fmt == "table":
        return _table([{k: r.get(k) for k in columns} for r in rows])
    return _csv(rows, columns)


# --- state ---------------------------------------------------------------------------


def make_state(kind: str, *, d=None, n=None, partition=None, dims=None, seed=0) -> PureState:
    if kind == "ghz":
        return ghz(_need(d, "--d"), _need(n, "--n"))
    if kind == "w":
        return w_state(_need(n, "--n"))
    if kind == "dicke":
        part = tuple(_need(partition, "--partition"))
        if n is not None and sum(part) != n:
            raise CliError(f"partition {part} does not sum to n={n}")
        return dicke(DickeLabel(part, _need(d, "--d")))
    if kind == "haar":
        if dims is None:
            dims = [_need(d, "--d")] * _need(n, "--n")
        return haar_random(dims, seed)
    raise CliError(f"unknown state kind {kind!r}")


def _need(value, flag):
    if value is None:
        raise CliError(f"{flag} is required")
    return value


def cmd_state(args) -> int:
    state = make_state(args.kind, d=args.d, n=args.n, partition=args.partition, dims=args.dims,
                       seed=0 if args.seed is None else args.seed)
    _emit(json.dumps(state_to_json(state)) + "\n", args.out)
    return 0


# --- gap / optimize ----------------------------------------------------------------------


def _load(path, force) -> PureState:
    state = load_state(path)
    _check_size(state.dim, force)
    return state


def cmd_gap(args) -> int:
    state = _load(args.state, args.force)
    strategy = build_strategy(args.protocol, state)
    if args.optimize:
        opt = optimize_probabilities(strategy.tests, state, args.tol)
        report = evaluate_at_probabilities(strategy.tests, state, opt.probabilities)
    elif args.probabilities:
        with open(args.probabilities) as fh:
            probs = np.asarray(json.load(fh), dtype=float)
        report = evaluate_at_probabilities(strategy.tests, state, probs)
    else:
        report = spectral_gap(strategy, state)
    out = report.to_json()
    out["protocol"] = args.protocol
    if not args.witness:
        out.pop("witness")
    _emit(_json(out), args.out)
    return 0


def cmd_optimize(args) -> int:
    state = _load(args.state, args.force)
    if args.grouped:
        report = grouped_dicke_optimize(state, args.tol, method=args.method)
    else:
        strategy = build_strategy(args.protocol, state)
        report = optimize_probabilities(strategy.tests, state, args.tol, method=args.method)
    out = report.to_json()
    out["protocol"] = "3smub-grouped" if args.grouped else args.protocol
    _emit(_json(out), args.out)
    return 0 if report.converged else 1


# --- sweep -----------------------------------------------------------------------------


SWEEP_COLUMNS = ["protocol", "d", "n", "seed", "nu", "beta", "n_exact", "n_upper", "n_adversarial"]


@dataclass
class SweepConfig:
    protocols: list = field(default_factory=lambda: ["sd"])
    dims: list = field(default_factory=lambda: [2])
    parties: list = field(default_factory=lambda: [3])
    samples: int = 1
    seed: int = 0
    epsilon: float = 0.01
    delta: float = 0.01
    optimize: bool = False
    adversarial: bool = False
    family: str = "haar"

    def validate(self) -> None:
        if self.samples < 1:
            raise CliError("samples must be >= 1")
        bad = [p for p in self.protocols if p not in PROTOCOLS]
        if bad:
            raise CliError(f"unknown protocols {bad}")
        if self.family not in ("haar", "ghz", "w", "dicke"):
            raise CliError(f"unknown state family {self.family!r}")


def _sweep_state(family, d, n, seed) -> PureState:
    if family == "haar":
        return haar_random((d,) * n, seed)
    if family == "ghz":
        return ghz(d, n)
    if family == "w":
        if d != 2:
            raise CliError("W states are qubit states")
        return w_state(n)
    # most balanced Dicke state using min(d, n) distinct symbols
    ell = min(d, n)
    part = [n // ell + (1 if i < n % ell else 0) for i in range(ell)]
    return dicke(DickeLabel(tuple(part), d))


def _counts(nu, cfg: SweepConfig):
    if nu <= ZERO_GAP_TOL:
        return math.inf, math.inf, (math.inf if cfg.adversarial else None)
    exact, upper = sample_complexity(min(nu, 1.0), cfg.epsilon, cfg.delta)
    adv = adversarial_bound(min(nu, 1.0), cfg.epsilon, cfg.delta)[1] if cfg.adversarial else None
    return exact, upper, adv


def _sweep_cell(task):
    """One (protocol, d, n, seed) sample; returns (key, row or None, error or None)."""
    cfg, protocol, d, n, seed = task
    key = (protocol, d, n, seed)
    try:
        state = _sweep_state(cfg.family, d, n, seed)
        strategy = build_strategy(protocol, state)
        if cfg.optimize:
            nu = optimize_probabilities(strategy.tests, state).nu
        else:
            nu = spectral_gap(strategy, state).nu
        exact, upper, adv = _counts(nu, cfg)
        row = dict(protocol=protocol, d=d, n=n, seed=seed, nu=nu, beta=1 - nu,
                   n_exact=exact, n_upper=upper, n_adversarial=adv)
        return key, row, None
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        return key, None, f"{type(exc).__name__}: {exc}"


def _aggregate(rows):
    out = []
    for stat in ("mean", "sem"):
        agg = dict(protocol=rows[0]["protocol"], d=rows[0]["d"], n=rows[0]["n"], seed=stat)
        for col in SWEEP_COLUMNS[4:]:
            vals = [r[col] for r in rows if r[col] is not None]
            if not vals:
                agg[col] = None
                continue
            arr = np.asarray(vals, dtype=float)
            if stat == "mean":
                agg[col] = float(arr.mean())
            else:
                agg[col] = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        out.append(agg)
    return out


def run_sweep(cfg: SweepConfig, jobs: int = 1, force: bool = False):
    """Rows for every sample followed by mean/sem rows per cell, plus error messages."""
    cfg.validate()
    tasks = []
    for protocol in cfg.protocols:
        for d in cfg.dims:
            for n in cfg.parties:
                _check_size(d**n, force)
                samples = 1 if cfg.family != "haar" else cfg.samples
                tasks.extend((cfg, protocol, d, n, cfg.seed + i) for i in range(samples))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    order = {p: i for i, p in enumerate(cfg.protocols)}
    results.sort(key=lambda r: (order[r[0][0]], *r[0][1:]))
    cells, errors = {}, []
    for key, row, err in results:
        if err is not None:
            errors.append(f"cell {key}: {err}")
            continue
        cells.setdefault(key[:3], []).append(row)
    rows = []
    for rows_in_cell in cells.values():
        rows.extend(rows_in_cell)
        rows.extend(_aggregate(rows_in_cell))
    return rows, errors


def _load_config(args) -> SweepConfig:
    cfg = SweepConfig()
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        known = {f.name for f in fields(SweepConfig)}
        unknown = set(data) - known
        if unknown:
            raise CliError(f"unknown config keys {sorted(unknown)}")
        cfg = SweepConfig(**data)
    # flags override file values
    for name, value in (("protocols", args.protocols), ("dims", args.dims), ("parties", args.parties),
                        ("samples", args.samples), ("family", args.family)):
        if value is not None:
            setattr(cfg, name, value)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.eps is not None:
        cfg.epsilon = args.eps
    if args.delta is not None:
        cfg.delta = args.delta
    if args.optimize:
        cfg.optimize = True
    if args.adversarial:
        cfg.adversarial = True
    return cfg


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    rows, errors = run_sweep(cfg, args.jobs, args.force)
    for msg in errors:
        log.error(msg)
    _emit(_render(rows, SWEEP_COLUMNS, args.format), args.out)
    return 1 if errors else 0


# --- simulate ------------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    state = _load(args.state, args.force)
    strategy = build_strategy(args.protocol, state)
    gap = spectral_gap(strategy, state)
    if args.source:
        source = PreparedSource.pure(load_state(args.source))
    elif args.eps:
        source = witness_source(state, gap.witness, args.eps)
    else:
        source = PreparedSource.pure(state)
    runs = args.runs
    if runs is None:
        if not args.eps or gap.nu <= ZERO_GAP_TOL:
            raise CliError("--runs is required unless --eps is set and the gap is positive")
        runs = sample_complexity(gap.nu, args.eps, args.delta)[0]
    seed = 0 if args.seed is None else args.seed
    accepted_count, passes, total = 0, 0, 0
    for e in range(args.experiments):
        stream = (e,) if args.experiments > 1 else ()
        accepted, records = run_verification(strategy, source, runs, seed, stream=stream)
        accepted_count += accepted
        passes += sum(r.passed for r in records)
        total += len(records)
        if e == 0 and args.records:
            with open(args.records, "w") as fh:
                write_records_csv(records, fh)
    q = pass_probability(strategy, source)
    summary = {
        "protocol": args.protocol,
        "runs": runs,
        "experiments": args.experiments,
        "nu": gap.nu,
        "pass_probability": q,
        "pass_rate": passes / total,
        "pass_rate_sem": math.sqrt(max(q * (1 - q), 0.0) / total),
        "accepted": accepted_count == args.experiments,
        "acceptance_rate": accepted_count / args.experiments,
        "predicted_acceptance": q**runs,
    }
    _emit(_json(summary), args.out)
    return 0


# --- bench / compare ----------------------------------------------------------------------------


def cmd_bench(args) -> int:
    value = benchmarks.benchmark_gap(args.kind, partition=args.partition, n=args.n)
    out = {"kind": args.kind, "value": value}
    if args.partition is not None:
        out["partition"] = list(args.partition)
    if args.n is not None:
        out["n"] = args.n
    _emit(_json(out), args.out)
    return 0


COMPARE_COLUMNS = ["protocol", "tests", "nu", "n_exact", "n_upper", "reduction_rate"]


def cmd_compare(args) -> int:
    state = _load(args.state, args.force)
    eps = 0.01 if args.eps is None else args.eps
    delta = 0.01 if args.delta is None else args.delta
    rows = []
    for name in args.protocols:
        strategy = build_strategy(name, state)
        if args.optimize:
            nu = optimize_probabilities(strategy.tests, state).nu
        else:
            nu = spectral_gap(strategy, state).nu
        exact, upper = sample_complexity(nu, eps, delta) if nu > ZERO_GAP_TOL else (math.inf, math.inf)
        rows.append(dict(protocol=name, tests=len(strategy.tests), nu=nu, n_exact=exact, n_upper=upper))
    base = rows[0]["n_exact"]
    for r in rows:
        finite = math.isfinite(base) and math.isfinite(r["n_exact"])
        r["reduction_rate"] = reduction_rate(base, r["n_exact"]) if finite else None
    _emit(_render(rows, COMPARE_COLUMNS, args.format), args.out)
    return 0


# --- parser ----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--eps", type=float, default=None, help="target infidelity")
    common.add_argument("--delta", type=float, default=None, help="significance level")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=["csv", "json", "table"], default="csv")
    common.add_argument("--jobs", type=int, default=int(os.environ.get("QSV_JOBS", "1")),
                        help="worker processes (default: $QSV_JOBS or 1)")
    common.add_argument("--force", action="store_true", help=f"allow total dimension above {MAX_DIM}")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qsv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    protocols = sorted(PROTOCOLS)

    p = sub.add_parser("state", parents=[common], help="write a target state as JSON")
    p.add_argument("kind", choices=["ghz", "dicke", "w", "haar"])
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--partition", type=_int_list)
    p.add_argument("--dims", type=_int_list)
    p.set_defaults(func=cmd_state)

    p = sub.add_parser("gap", parents=[common], help="spectral gap of a protocol")
    p.add_argument("state")
    p.add_argument("--protocol", choices=protocols, default="sd")
    p.add_argument("--optimize", action="store_true")
    p.add_argument("--probabilities", help="JSON list of test probabilities")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--witness", action="store_true", help="include the witness vector")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("optimize", parents=[common], help="optimize test probabilities")
    p.add_argument("state")
    p.add_argument("--protocol", choices=protocols, default="sd")
    p.add_argument("--grouped", action="store_true", help="grouped 3-basis weights for qubit Dicke states")
    p.add_argument("--method", choices=["bundle", "mirror"], default="bundle")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", parents=[common], help="gaps and sample costs over a grid")
    p.add_argument("--config", help="JSON file with SweepConfig fields")
    p.add_argument("--protocols", type=_name_list)
    p.add_argument("--dims", type=_int_list)
    p.add_argument("--parties", type=_int_list)
    p.add_argument("--samples", type=int)
    p.add_argument("--family", choices=["haar", "ghz", "w", "dicke"])
    p.add_argument("--optimize", action="store_true")
    p.add_argument("--adversarial", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo verification runs")
    p.add_argument("state")
    p.add_argument("--protocol", choices=protocols, default="sd")
    p.add_argument("--runs", type=int)
    p.add_argument("--source", help="state file of the prepared source (default: the target)")
    p.add_argument("--experiments", type=int, default=1)
    p.add_argument("--records", help="CSV file for the run records of the first experiment")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common], help="closed-form benchmark gaps")
    p.add_argument("kind", choices=["dicke", "w-A", "w-G"])
    p.add_argument("--partition", type=_int_list)
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", parents=[common], help="compare protocols on one state")
    p.add_argument("state")
    p.add_argument("--protocols", type=_name_list, default=["sd", "csd", "mub", "smub"])
    p.add_argument("--optimize", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if getattr(args, "protocols", None) and args.command == "compare":
        bad = [p for p in args.protocols if p not in PROTOCOLS]
        if bad:
            parser.error(f"unknown protocols {bad}")
    if args.command == "simulate" and args.delta is None:
        args.delta = 0.05
    try:
        return args.func(args)
    except (CliError, StateError, ProtocolError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``neurfdiv <subcommand> ...``.

Exit codes: 0 on success, 2 for configuration errors, 3 when a sweep
finished with at least one failed record (or another runtime error).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import bounds as bnd
from .divergences import DivergenceKind, ground_truth
from .errors import ConfigError, NeurFdivError
from .experiments import (
    aggregate,
    append_record,
    emit_csv,
    fit_rate,
    load_config,
    read_csv,
    replica_seed,
    run_experiment,
)
from .network import ParamBounds, expand_bounds
from .training import default_class_spec, train

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _write_json(obj, out):
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_estimate(args) -> int:
    config = load_config(args.config)
    point = config.points()[0]
    seed = args.seed if args.seed is not None else replica_seed(config.master_seed, 0)
    result = train(config.train_config(point, seed), config.pair)
    payload = {"name": config.name, "kind": config.kind.value, "n": point.n, "k": point.k, "seed": seed}
    payload.update(result.to_dict())
    _write_json(payload, args.out)
    return EXIT_OK


def _sweep(args, expected: str) -> int:
    config = load_config(args.config)
    if config.sweep_kind != expected:
        raise ConfigError(f"this subcommand needs a sweep over {expected}; config sweeps over {config.sweep_kind}")
    out = Path(args.out)
    existing = []
    if getattr(args, "resume", False) and out.exists():
        existing = read_csv(out)
    elif out.exists():
        out.unlink()
    timing = not args.no_timing
    records = run_experiment(config, workers=args.workers, existing=existing,
                             sink=lambda rec: append_record(out, rec, timing))
    emit_csv(records, out, timing=timing)
    failed = [r for r in records if not r.ok]
    ok = [r for r in records if r.ok]
    if ok:
        summaries = aggregate(ok)
        summary_path = out.with_name(out.stem + "_summary.csv")
        emit_csv(summaries, summary_path, kind="summaries")
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["n", "k", "replicas", "mean_estimate", "std_estimate", "mean_abs_error", "ground_truth"])
        for s in summaries:
            writer.writerow([s.n, s.k, s.replicas, f"{s.mean_estimate:.6g}", f"{s.std_estimate:.3g}",
                             f"{s.mean_abs_error:.3g}", f"{s.ground_truth:.6g}"])
        if expected == "n" and len(summaries) >= 2:
            try:
                fit = fit_rate(summaries)
                print(f"# rate fit: slope={fit.slope:.4f} intercept={fit.intercept:.4f} r2={fit.r_squared:.4f}")
            except NeurFdivError as exc:
                print(f"# rate fit unavailable: {exc}")
    if failed:
        print(f"{len(failed)} of {len(records)} records failed; see error_msg in {out}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_sweep_n(args) -> int:
    return _sweep(args, "n")


def cmd_sweep_k(args) -> int:
    return _sweep(args, "k")


def cmd_ground_truth(args) -> int:
    config = load_config(args.config)
    _write_json(ground_truth(config.kind, config.pair).to_dict(), None)
    return EXIT_OK


def cmd_bounds(args) -> int:
    kind = DivergenceKind.parse(args.kind)
    rows = []
    for n in args.n:
        for k in args.k:
            need_t = kind is DivergenceKind.HELLINGER and args.t is None
            if None in (args.a1, args.a2, args.a3) or need_t:
                # Unset values come from the star class with c = 0.5 log k (t = 1/log k for Hellinger).
                base = expand_bounds(default_class_spec(kind), k)
            else:
                base = ParamBounds(args.a1, args.a2, args.a3, args.t)
            a1 = base.a1 if args.a1 is None else args.a1
            a2 = base.a2 if args.a2 is None else args.a2
            a3 = base.a3 if args.a3 is None else args.a3
            t = args.t if args.t is not None else base.trunc
            inputs = bnd.BoundInputs(kind, k, ParamBounds(a1, a2, a3, t), n, args.C)
            rows.append(bnd.estimation_constants(inputs).row(args.delta))
    header = list(rows[0])
    if args.csv:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if row[h] is None else (repr(row[h]) if isinstance(row[h], float) else row[h])
                             for h in header])
    else:
        cells = [[_cell(row[h]) for h in header] for row in rows]
        widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(header)]
        print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
        for c in cells:
            print("  ".join(v.rjust(w) for v, w in zip(c, widths)))
        print("# tail bounds hold up to the universal constant C")
    return EXIT_OK


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neurfdiv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="train one network and print the estimate as JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    for name, func, helptext in (("sweep-n", cmd_sweep_n, "estimate-vs-n sweep"),
                                 ("sweep-k", cmd_sweep_k, "estimate-vs-k sweep at fixed n")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--no-timing", action="store_true", help="write wall_time_s as 0 for byte-reproducible CSV")
        if name == "sweep-n":
            p.add_argument("--resume", action="store_true", help="skip records already in --out")
        p.set_defaults(func=func)

    p = sub.add_parser("ground-truth", help="exact divergence of the configured pair")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_ground_truth)

    p = sub.add_parser("bounds", help="estimation-error constants for a grid of (k, n)")
    p.add_argument("--kind", required=True, choices=["kl", "chisq", "hellinger"])
    p.add_argument("--k", type=int, nargs="+", required=True)
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--a1", type=float)
    p.add_argument("--a2", type=float)
    p.add_argument("--a3", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NeurFdivError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

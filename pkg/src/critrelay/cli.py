"""``critrelay`` command line: build-dataset, train, identify, verify, report."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .dataset import build_dataset, load_suite_file, read_dataset, schema_hash, write_dataset
from .dynsim import SimConfig
from .forest import (GridError, ModelFileError, SchemaError, SearchError, fit_forest,
                     grid_search_two_stage, load_grid_file, load_model, save_model)
from .gridcase import CaseError, PowerFlowError

log = logging.getLogger("critrelay")

EXIT_OK, EXIT_OTHER, EXIT_VALIDATION, EXIT_DIVERGENCE, EXIT_SEARCH = 0, 1, 2, 3, 4


def _sim_config(args, case) -> SimConfig:
    kw = {}
    if args.dt is not None:
        kw["dt"] = args.dt
    if args.t_end is not None:
        kw["t_end"] = args.t_end
    return SimConfig.for_case(case, **kw)


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def cmd_build_dataset(args) -> int:
    case = pipeline.load_case(args.case)
    suite = load_suite_file(args.suite)
    if args.seed is not None:
        suite = replace(suite, seed=args.seed)
    cfg = _sim_config(args, case)
    ds = build_dataset(case, suite, cfg, pipeline.policy_for(args.kv_floor), jobs=args.jobs)
    write_dataset(ds, args.out)
    p = ds.provenance
    print(f"{args.out}: {len(ds.rows)} rows from {p['n_contingencies']} contingencies "
          f"x {p['n_relays']} relays; class counts {p['class_counts']}; "
          f"skipped {len(p['skipped'])}")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = read_dataset(args.dataset)
    X, y = ds.X, ds.y
    if len(set(y.tolist())) < 2:
        raise CaseError(f"{args.dataset}: both classes are needed to train")
    grid = load_grid_file(args.grid) if args.grid else load_grid_file(_bundled("grids/default.toml"))
    if args.seed is not None:
        grid = replace(grid, base=replace(grid.base, seed=args.seed))
    seed = args.seed if args.seed is not None else grid.base.seed
    best, entries = grid_search_two_stage(X, y, grid, k=args.k, seed=seed, jobs=args.jobs)
    model = fit_forest(X, y, best, ds.schema_hash, ds.schema)
    Path(args.out).write_text(save_model(model))
    log_path = Path(str(args.out) + ".search.csv")
    names = sorted({k for e in entries for k in e.point})
    with log_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", *names, "mean_recall", "mean_precision", "feasible"])
        for e in entries:
            row = e.as_row()
            w.writerow([row["stage"], *(row.get(n, "") for n in names), row["mean_recall"],
                        row["mean_precision"], row["feasible"]])
    win = next(e for e in entries if e.params == best)
    print(f"winner {win.point}: CV recall {win.mean_recall:.4f}, "
          f"precision {win.mean_precision:.4f} ({len(entries)} candidates); model -> {args.out}")
    return EXIT_OK


def _bundled(rel: str) -> Path:
    return Path(__file__).parent / "data" / rel


def _identify_inputs(args):
    case = pipeline.load_case(args.case)
    conts = pipeline.load_contingency_file(args.contingency, case)
    model = load_model(Path(args.model).read_text())
    cfg = _sim_config(args, case)
    relays = pipeline.default_relays(case, args.kv_floor)
    return case, conts, model, cfg, relays


def cmd_identify(args) -> int:
    case, conts, model, cfg, relays = _identify_inputs(args)
    scored = pipeline.scored_relays(relays, args.line_only)
    results = [pipeline.identify(case, c, model, cfg, scored) for c in conts]
    doc = {"case": case.name, "schema_hash": schema_hash(cfg.dt, case.system_frequency),
           "results": [r.as_dict() for r in results]}
    timing = {"results": [r.timing() for r in results]}
    if args.out:
        _write_json(args.out, doc)
        _write_json(str(args.out) + ".timing.json", timing)
    else:
        json.dump(doc, sys.stdout, indent=2)
        print()
    for r in results:
        print(f"{r.contingency_id}: {len(r.critical)}/{r.n_relays} critical "
              f"({100 * r.critical_fraction:.2f}%)  process1 {r.process1_s:.2f} s  "
              f"process2 {r.process2_s:.2f} s  process3 {r.process3_s:.2f} s  "
              f"total {r.total_s:.2f} s", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    case, conts, model, cfg, relays = _identify_inputs(args)
    out = Path(args.out)
    flagged = 0
    summaries = []
    for c in conts:
        cmp = pipeline.verify(case, c, model, cfg, relays, args.line_only)
        sub = out / c.label if len(conts) > 1 else out
        pipeline.write_comparison(cmp, sub)
        s = cmp.summary()
        summaries.append(s)
        flagged += s["mismatch_flag"]
        status = "MISMATCH" if s["mismatch_flag"] else "match"
        print(f"{c.label}: case 3 vs case 2 {status}; false negatives {s['false_negatives']}; "
              f"max angle deviation {s['max_angle_deviation_rad']}; "
              f"critical {100 * cmp.critical_fraction:.2f}%")
    if len(conts) > 1:
        _write_json(out / "summary.json", {"contingencies": summaries, "flagged": flagged})
    return EXIT_OK


def cmd_report(args) -> int:
    case = pipeline.load_case(args.case)
    relays = pipeline.default_relays(case, args.kv_floor)
    written = pipeline.report(args.input, args.out, relays)
    print(f"{len(written)} files written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critrelay", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="verb", required=True)

    def sim_flags(p):
        p.add_argument("--case", required=True, help="case file or bundled case name")
        p.add_argument("--dt", type=float, help="integration step in seconds")
        p.add_argument("--t-end", type=float, help="simulation horizon in seconds")
        p.add_argument("--kv-floor", type=float,
                       help="lowest voltage (kV) that gets three-zone line relays")

    p = sub.add_parser("build-dataset", help="simulate a suite and write the labeled corpus")
    sim_flags(p)
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the suite seed")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="two-stage grid search, then fit on the whole dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--grid", help="grid file (default: bundled grid)")
    p.add_argument("--k", type=int, default=5, help="cross-validation folds")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(func=cmd_train)

    for verb, func, helptext in (("identify", cmd_identify, "predict the critical relays"),
                                 ("verify", cmd_verify, "run and compare the three cases")):
        p = sub.add_parser(verb, help=helptext)
        sim_flags(p)
        p.add_argument("--contingency", required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--line-only", action="store_true",
                       help="identify among three-zone line relays only")
        p.add_argument("--out", required=(verb == "verify"))
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="tidy plot-data CSVs from a verify directory")
    p.add_argument("--case", required=True)
    p.add_argument("--kv-floor", type=float)
    p.add_argument("--input", required=True, help="verify output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except pipeline.IdentificationAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except SearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.best is not None:
            print(f"best-recall candidate: {exc.best.as_row()}", file=sys.stderr)
        return EXIT_SEARCH
    except (CaseError, GridError, SchemaError, ModelFileError, PowerFlowError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points: simulate, analyze, sweep.

Exit codes: 0 success, 1 validation failure, 2 I/O failure. Errors are
written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import pandas as pd

from . import analytics as A
from .engine import run, sweep
from .fixedpoint import format_wad
from .ledger import AgentCategory, Ledger, LedgerError, Token
from .scenario import ScenarioError, load_scenario, scenario_dict, validate_scenario

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2
REPORTS = ["tables", "loans", "redeposits", "concentration", "network", "liqmatrix",
           "regress-eq4", "regress-eq5", "regress-logit"]


class CliError(Exception):
    def __init__(self, code: int, payload: dict):
        super().__init__(payload.get("error", ""))
        self.code = code
        self.payload = payload


def _fail(code: int, error: str, **extra) -> CliError:
    return CliError(code, {"error": error, **extra})


def _out_dir(path: Optional[str], default_name: str, force: bool) -> Path:
    if path is None:
        path = os.path.join(os.environ.get("LENDSIM_OUT", "runs"), default_name)
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise _fail(EXIT_IO, f"output directory {out} is not empty (use --force)")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _fail(EXIT_IO, str(exc)) from None
    return out


def _load(path: str):
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        raise _fail(EXIT_VALIDATION, "scenario validation failed", fields=exc.errors) from None


# -- simulate -------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load(args.scenario)
    overrides = {}
    data = scenario_dict(cfg)
    if args.seed is not None:
        data["seed"] = overrides["seed"] = args.seed
    if args.blocks is not None:
        data["horizon_blocks"] = overrides["horizon_blocks"] = args.blocks
    if overrides:
        try:
            cfg = validate_scenario(data)
        except ScenarioError as exc:
            raise _fail(EXIT_VALIDATION, "scenario validation failed", fields=exc.errors) from None
    out = _out_dir(args.out, f"{cfg.name}-seed{cfg.seed}", args.force)
    try:
        output = run(cfg)
    except ScenarioError as exc:
        raise _fail(EXIT_VALIDATION, "scenario validation failed", fields=exc.errors) from None
    try:
        output.write(out, {"overrides": overrides})
    except OSError as exc:
        raise _fail(EXIT_IO, str(exc)) from None
    print(json.dumps({"out": str(out), "events": len(output.ledger),
                      "liquidations": len(output.liquidations)}))
    return EXIT_OK


# -- analyze --------------------------------------------------------------

@dataclass
class RunData:
    ledger: Ledger
    snapshots: pd.DataFrame
    tokens: dict
    categories: dict
    seconds_per_block: int
    horizon_blocks: int
    emission_start_block: int


def load_run(run_dir) -> RunData:
    d = Path(run_dir)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
        ledger = Ledger.load(d / "ledger.jsonl")
        snaps = pd.read_csv(d / "snapshots.csv", dtype=str, keep_default_na=False)
    except (OSError, ValueError, LedgerError) as exc:
        raise _fail(EXIT_IO, f"cannot read run directory {d}: {exc}") from None
    if not snaps.empty:
        snaps["block"] = snaps["block"].astype(int)
    meta = manifest["meta"]
    tokens = {t["id"]: Token(**t) for t in meta["tokens"]}
    cats = {int(a): AgentCategory(c) for a, c in meta["categories"].items()}
    return RunData(ledger, snaps, tokens, cats, meta["seconds_per_block"], meta["horizon_blocks"],
                   meta["emission_start_block"])


def _write_csv(path: Path, columns: list, rows: list) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _frame_rows(df: pd.DataFrame, index_name: str):
    cols = [index_name] + [str(c) for c in df.columns]
    rows = [[idx] + [format_wad(v) if isinstance(v, int) and not isinstance(v, bool) else v
                     for v in row] for idx, row in zip(df.index, df.itertuples(index=False))]
    return cols, rows


def _regression_rows(res: A.RegressionResult):
    return (["term", "coef", "se", "t", "p"],
            [[n, b, s, t, p] for n, b, s, t, p in zip(res.names, res.params, res.bse, res.tvalues, res.pvalues)])


def _report(name: str, data: RunData, args, out: Path) -> dict:
    L, spb = list(data.ledger), data.seconds_per_block
    sym = {t.id: t.symbol for t in data.tokens.values()}
    if name == "tables":
        n_days = data.horizon_blocks * spb // 86_400 + (1 if data.horizon_blocks * spb % 86_400 else 0)
        tables = A.summary_tables(L, data.tokens, data.categories, spb, n_days=n_days)
        bundle = {}
        for key, df in tables.items():
            cols, rows = _frame_rows(df, df.index.name)
            _write_csv(out / f"tables_{key}.csv", cols, rows)
            bundle[key] = [dict(zip(cols, r)) for r in rows]
        return bundle
    if name == "loans":
        loans = A.reconstruct_closed_loans(L, spb)
        cols = ["address", "token", "open_block", "close_block", "n_draws", "n_repays", "n_liquidations",
                "drawn_usd", "peak_debt_usd", "duration_days"]
        rows = [[l.address, sym[l.token], l.open_block, l.close_block, len(l.draw_events), len(l.repay_events),
                 len(l.liquidation_events), format_wad(l.drawn_usd), format_wad(l.peak_debt_usd),
                 repr(l.duration_days)] for l in loans]
    elif name == "redeposits":
        days = A.detect_redeposits(L, seconds_per_block=spb)
        cols = ["address", "token", "day", "total_drawn_usd", "redeposited_same_day", "redeposited_within_1d"]
        rows = [[d.address, sym[d.token], d.day, format_wad(d.total_drawn_usd), int(d.redeposited_same_day),
                 int(d.redeposited_within_1d)] for d in days]
    elif name == "concentration":
        cols, rows = ["side", "k", "n_addresses", "share"], []
        for side in ("deposits", "loans"):
            vol = A.address_volumes(L, side)
            if sum(vol.values()) > 0:
                rows.append([side, args.top, len(vol), repr(A.top_k_share(vol, args.top))])
    elif name == "network":
        g = A.flow_network(L, data.categories, data.tokens)
        cols = ["source", "target", "usd"]
        rows = [[u, v, format_wad(w)] for u, v, w in A.network_edges(g)]
    elif name == "liqmatrix":
        cols, rows = _frame_rows(A.liquidation_matrix(L, data.tokens), "repaid")
    elif name in ("regress-eq4", "regress-eq5"):
        if args.token is None:
            raise _fail(EXIT_VALIDATION, f"--token is required for {name}")
        if args.token not in sym.values():
            raise _fail(EXIT_VALIDATION, f"unknown token {args.token!r}")
        market = args.market if args.market in sym.values() else args.token
        fm = A.build_features(data.snapshots, L, args.token, data.tokens, data.emission_start_block, spb, market)
        X, y, names = fm.design(name[-3:])
        res = A.ols_newey_west(X, y, lag=args.lag, names=names)
        title = ("Daily net deposits" if name == "regress-eq4" else "Daily loans") + f", {args.token} pool"
        (out / f"{name.replace('-', '_')}.txt").write_text(res.summary_table(title))
        cols, rows = _regression_rows(res)
    elif name == "regress-logit":
        days = A.detect_redeposits(L, seconds_per_block=spb)
        X, y, clusters, names = A.redeposit_design(days, data.categories)
        res = A.logistic_clustered(X, y, clusters, names)
        (out / "regress_logit.txt").write_text(res.summary_table("Redeposit within one day"))
        cols, rows = _regression_rows(res)
    else:
        raise _fail(EXIT_VALIDATION, f"unknown report {name!r}", choices=REPORTS)
    fname = {"liqmatrix": "liquidation_matrix", "regress-eq4": "regress_eq4", "regress-eq5": "regress_eq5",
             "regress-logit": "regress_logit"}.get(name, name)
    _write_csv(out / f"{fname}.csv", cols, rows)
    return [dict(zip(cols, r)) for r in rows]


def cmd_analyze(args) -> int:
    data = load_run(args.run_dir)
    out = Path(args.out) if args.out else Path(args.run_dir) / "reports"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _fail(EXIT_IO, str(exc)) from None
    bundle_path = out / "bundle.json"
    bundle = json.loads(bundle_path.read_text()) if bundle_path.exists() else {}
    for name in args.report:
        try:
            bundle[name] = _report(name, data, args, out)
        except (A.AnalyticsError, A.RegressionError, A.InsufficientHistory, ValueError) as exc:
            raise _fail(EXIT_VALIDATION, f"{name}: {exc}") from None
    bundle_path.write_text(json.dumps(bundle, indent=1, sort_keys=True, default=str) + "\n")
    print(json.dumps({"out": str(out), "reports": args.report}))
    return EXIT_OK


# -- sweep ----------------------------------------------------------------

def _parse_values(text: str) -> list:
    vals = []
    for item in (v.strip() for v in text.split(",")):
        if not item:
            continue
        try:
            vals.append(json.loads(item))
        except json.JSONDecodeError:
            vals.append(item)
    return vals


def cmd_sweep(args) -> int:
    cfg = _load(args.scenario)
    values = _parse_values(args.values)
    if not values:
        raise _fail(EXIT_VALIDATION, "empty values list", fields=[{"field": "values", "error": "empty"}])
    out = _out_dir(args.out, f"{cfg.name}-sweep", args.force)
    dirs = [out / f"{i:03d}_{str(v).replace('/', '_')}" for i, v in enumerate(values)]
    try:
        results = sweep(cfg, args.param, values, args.parallel, dirs)
    except ScenarioError as exc:
        raise _fail(EXIT_VALIDATION, "sweep validation failed", fields=exc.errors) from None
    cols = ["value", "n_events", "n_liquidations", "liquidation_usd", "max_wave", "n_rejections", "ledger_sha256"]
    _write_csv(out / "sweep_summary.csv", ["param", "run_dir"] + cols,
               [[args.param, d.name] + [r[c] for c in cols] for d, r in zip(dirs, results)])
    print(json.dumps({"out": str(out), "runs": len(results)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lendsim", description="Lending protocol simulator and ledger analytics")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--blocks", type=int, help="override horizon_blocks")
    s.add_argument("--out", help="output directory (default $LENDSIM_OUT/<name>-seed<seed>)")
    s.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="reports on a run directory")
    a.add_argument("run_dir")
    a.add_argument("--report", action="append", choices=REPORTS, help="repeatable; default tables")
    a.add_argument("--top", type=int, default=100)
    a.add_argument("--token")
    a.add_argument("--market", default="ETH", help="token whose price drives return controls")
    a.add_argument("--lag", type=int, default=1)
    a.add_argument("--out", help="report directory (default <run_dir>/reports)")
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("sweep", help="one run per parameter value")
    w.add_argument("--scenario", required=True)
    w.add_argument("--param", required=True, help="dotted path, e.g. pools.0.haircut")
    w.add_argument("--values", required=True, help="comma-separated values")
    w.add_argument("--parallel", type=int, default=1)
    w.add_argument("--out")
    w.add_argument("--force", action="store_true")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    if args.command == "analyze" and not args.report:
        args.report = ["tables"]
    try:
        return args.func(args)
    except CliError as exc:
        print(json.dumps(exc.payload, default=str), file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

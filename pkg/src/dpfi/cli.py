"""Command-line driver: solve, simulate, sweep and reproduce the preset studies.

Every output file is rendered in memory first and written only once the whole
run has succeeded, so a failing run leaves no partial output behind.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import plotting
from .config import ConfigError, RunConfig
from .model import check_assumptions
from .simulation import (
    DistributionSpec,
    PolicySolver,
    SimulationError,
    robustness_sweep,
    scenario_matrix,
    sensitivity_sweep,
)
from .solver import (
    ConvergenceError,
    InfeasibleMarketError,
    build_feasible_set,
    check_best_responses,
    discretize,
    solve_equilibrium,
)

log = logging.getLogger("dpfi")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_INFEASIBLE = 4


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _num(x) -> str:
    return repr(float(x))


class Outputs:
    """Named output files held in memory until the run commits."""

    def __init__(self):
        self.files: dict = {}
        self.timings: dict = {}

    def add(self, name: str, data) -> None:
        if isinstance(data, str):
            data = data.encode("utf-8")
        self.files[name] = data

    @contextlib.contextmanager
    def timed(self, label: str):
        start = time.perf_counter()
        yield
        self.timings[label] = round(time.perf_counter() - start, 3)

    def commit(self, out_dir: Path, manifest: dict) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        listing = []
        for name in sorted(self.files):
            data = self.files[name]
            (out_dir / name).write_bytes(data)
            listing.append({"file": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
        manifest = dict(manifest, files=listing, timings_s=self.timings)
        (out_dir / "manifest.json").write_bytes(_json_bytes(manifest))


def _versions() -> dict:
    import matplotlib
    import scipy

    from importlib import metadata

    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__, "artifact": own}


# ------------------------------------------------------------ experiments

def _emit_solution(out: Outputs, res, prefix: str, certify: bool = True) -> dict:
    doc = res.to_dict()
    if certify:
        brs = check_best_responses(res)
        doc["best_response_relative_improvement"] = [br.relative_improvement for br in brs]
    out.add(f"{prefix}.json", _json_bytes(doc))
    out.add(f"{prefix}.csv", res.to_csv())
    return doc


def _path_plots(out: Outputs, res, prefix: str, title: str) -> None:
    t = res.market.grid.nodes
    names = [f"seller {s + 1}" for s in range(res.profile.n_sellers)]
    out.add(f"{prefix}_prices.svg", plotting.line_plot(
        t, dict(zip(names, res.profile.prices)), title=f"{title}: prices", ylabel="price"))
    out.add(f"{prefix}_inventory.svg", plotting.line_plot(
        t, dict(zip(names, res.remaining_inventory())), title=f"{title}: remaining inventory", ylabel="units"))
    out.add(f"{prefix}_demand.svg", plotting.line_plot(
        t, dict(zip(names, res.profile.plans)), title=f"{title}: planned demand", ylabel="units per time"))


def run_solve(rc: RunConfig, out: Outputs) -> dict:
    with out.timed("solve"):
        res = solve_equilibrium(rc.market, rc.mode, rc.rules, rc.solver)
    with out.timed("certify"):
        doc = _emit_solution(out, res, "solution")
    _path_plots(out, res, "solution", f"{rc.mode} equilibrium")
    out.add("revenues.csv", _csv_bytes(
        ["seller", "revenue"], [[s + 1, _num(r)] for s, r in enumerate(res.revenues)]))
    for w in res.warnings:
        log.warning(w)
    return {"iterations": res.iterations, "revenues": res.revenues.tolist(), "vi_gap": res.vi_gap,
            "best_response_relative_improvement": doc["best_response_relative_improvement"]}


def _report_files(out: Outputs, reports, stem: str) -> None:
    for rep in reports:
        out.add(f"{stem}.csv", rep.to_csv())
        for s, st in enumerate(rep.stats):
            out.add(f"{stem}_seller{s + 1}.svg", plotting.histogram_plot(
                st.edges, st.counts, title=f"{rep.label}, {rep.dist.label}, seller {s + 1}"))


def run_matrix(rc: RunConfig, out: Outputs) -> dict:
    policies = PolicySolver(rc.market, rc.solver, rc.rules)
    with out.timed("matrix"):
        mat = scenario_matrix(rc.market, rc.distributions, rc.n_draws, rc.seed, policies=policies)
    tau = max(u.tau for u in rc.market.uncertainty)
    nominal, robust = policies(0.0), policies(tau)
    _emit_solution(out, nominal, "solution_nominal")
    _emit_solution(out, robust, "solution_robust")
    t = rc.market.grid.nodes
    series = {}
    for s in range(rc.market.n_sellers):
        series[f"seller {s + 1} N"] = nominal.profile.prices[s]
        series[f"seller {s + 1} R"] = robust.profile.prices[s]
    out.add("prices_nominal_vs_robust.svg", plotting.line_plot(
        t, series, title="equilibrium prices, nominal vs robust", ylabel="price"))
    rows, summary = [], {}
    for label, reports in mat.items():
        tag = label.replace("(", "").replace(")", "").replace(",", "-")
        summary[label] = [r.to_dict() for r in reports]
        for rep in reports:
            for row in rep.summary_rows():
                rows.append([row["distribution"], row["cell"], row["seller"], _num(row["min"]), _num(row["max"]),
                             _num(row["mean"]), _num(row["sd"])])
            _report_files(out, [rep], f"draws_{tag}_{rep.label}")
    out.add("matrix.csv", _csv_bytes(["distribution", "cell", "seller", "min", "max", "mean", "sd"], rows))
    out.add("matrix.json", _json_bytes(summary))
    return {"cells": {k: [(r.label, [st.mean for st in r.stats]) for r in v] for k, v in mat.items()}}


def run_sweep(rc: RunConfig, out: Outputs) -> dict:
    sw = rc.experiment["sweep"]
    seller = sw["seller"] - 1
    with out.timed("sweep"):
        points = sensitivity_sweep(rc.market, seller, sw["coefficient"], sw["values"], rc.solver, rc.rules)
    name = f"{sw['coefficient']}{sw['seller']}"
    rows, docs = [], []
    ok = [p for p in points if p.result is not None]
    for p in points:
        docs.append({"value": p.value, "error": p.error,
                     "revenues": None if p.result is None else p.result.revenues.tolist(),
                     "prices": None if p.result is None else p.result.profile.prices.tolist(),
                     "vi_gap": None if p.result is None else p.result.vi_gap})
        if p.result is not None:
            for s, r in enumerate(p.result.revenues):
                rows.append([_num(p.value), s + 1, _num(r)])
    out.add("sweep.csv", _csv_bytes([name, "seller", "revenue"], rows))
    out.add("sweep.json", _json_bytes({"coefficient": sw["coefficient"], "seller": sw["seller"], "points": docs}))
    if ok:
        t = rc.market.grid.nodes
        for s in range(rc.market.n_sellers):
            out.add(f"sweep_prices_seller{s + 1}.svg", plotting.line_plot(
                t, {f"{name}={p.value:g}": p.result.profile.prices[s] for p in ok},
                title=f"seller {s + 1} prices as {name} varies", ylabel="price"))
        xs = [p.value for p in ok]
        out.add("sweep_revenues.svg", plotting.line_plot(
            xs, {f"seller {s + 1}": [p.result.revenues[s] for p in ok] for s in range(rc.market.n_sellers)},
            title=f"revenue as {name} varies", xlabel=name, ylabel="revenue"))
    if not ok:
        raise ConvergenceError("every sweep point failed")
    return {"failed_points": [p.value for p in points if p.result is None]}


def run_robustness(rc: RunConfig, out: Outputs) -> dict:
    exp = rc.experiment
    dist = rc.distributions[0]
    with out.timed("robustness"):
        reps = robustness_sweep(rc.market, exp["case"], exp["tau_bar_values"], dist, rc.n_draws, rc.seed, rc.solver)
    rows, draws, panels = [], [], []
    for v, rep in zip(exp["tau_bar_values"], reps):
        for s, st in enumerate(rep.stats):
            rows.append([_num(v), s + 1, _num(st.min), _num(st.max), _num(st.mean), _num(st.sd)])
        for k in range(rep.profits.shape[0]):
            draws.append([_num(v), k, _num(rep.profits[k, 1])])
        st2 = rep.stats[1]
        panels.append((f"tau_bar={v:g}: mean {st2.mean:,.0f}, sd {st2.sd:,.0f}", st2.edges, st2.counts))
    out.add("robustness.csv", _csv_bytes(["tau_bar", "seller", "min", "max", "mean", "sd"], rows))
    out.add("robustness_draws_seller2.csv", _csv_bytes(["tau_bar", "draw_index", "profit"], draws))
    out.add("robustness.json", _json_bytes({"case": exp["case"], "distribution": dist.to_dict(),
                                            "reports": [r.to_dict() for r in reps]}))
    out.add("robustness_hist_seller2.svg", plotting.histogram_grid(
        panels, title=f"seller 2 profit, case {exp['case']}, {dist.label}"))
    vals = exp["tau_bar_values"]
    out.add("robustness_sd_seller2.svg", plotting.line_plot(
        vals, {"sd": [r.stats[1].sd for r in reps]}, title=f"seller 2 profit sd, case {exp['case']}",
        xlabel="tau_bar", ylabel="sd"))
    out.add("robustness_mean_seller2.svg", plotting.line_plot(
        vals, {"mean": [r.stats[1].mean for r in reps]}, title=f"seller 2 mean profit, case {exp['case']}",
        xlabel="tau_bar", ylabel="mean"))
    return {"sd_seller2": [r.stats[1].sd for r in reps]}


def run_check(rc: RunConfig, out: Outputs) -> dict:
    report = check_assumptions(rc.market)
    doc = {"assumptions": report.to_dict(), "all_assumptions_pass": report.all_passed}
    disc = discretize(rc.market)
    feas = {}
    for mode in ("nominal", "robust"):
        try:
            build_feasible_set(disc, mode, rc.rules)
            feas[mode] = "feasible"
        except InfeasibleMarketError as exc:
            feas[mode] = f"infeasible: {exc}"
    doc["feasible_set"] = feas
    out.add("check.json", _json_bytes(doc))
    if not report.all_passed:
        names = ", ".join(c.name for c in report.failures())
        raise ConfigError(f"assumption checks failed: {names}")
    if feas[rc.mode] != "feasible":
        raise InfeasibleMarketError(feas[rc.mode])
    return {"assumptions": "pass", "feasible_set": feas}


RUNNERS = {"solve": run_solve, "matrix": run_matrix, "sweep": run_sweep, "robustness": run_robustness,
           "check": run_check}


# ------------------------------------------------------------------- CLI

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (default: config 'output' or ./out-<command>)")
    common.add_argument("--seed", type=int, help="Monte Carlo seed")
    common.add_argument("--dist", action="append", metavar="FAMILY:A,B",
                        help="shock distribution, e.g. beta:1,3 (repeatable)")
    common.add_argument("--draws", type=int, metavar="N", help="number of Monte Carlo draws")
    common.add_argument("--grid", type=int, metavar="N", help="number of time-grid nodes")
    common.add_argument("--rho", type=float, metavar="X", help="discount rate")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry by dotted path, e.g. market.sellers.0.inventory_K=2000")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dpfi", description="Robust competitive dynamic pricing with fixed inventories.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [
        ("solve", "compute an equilibrium"),
        ("matrix", "simulate the nominal/robust policy matrix"),
        ("sweep", "sensitivity sweep over one demand coefficient"),
        ("robustness", "sweep the policy robustness magnitude"),
        ("check", "check assumptions and feasibility only"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    rp = sub.add_parser("reproduce", parents=[common], help="run a built-in preset")
    rp.add_argument("preset", choices=cfgmod.PRESET_NAMES)
    sub.add_parser("presets", help="list presets")
    sc = sub.add_parser("schema", help="print the configuration JSON schema")
    sc.add_argument("--out", help="write the schema to this file instead")
    return p


def _resolve(args) -> tuple:
    if args.command == "reproduce":
        doc = cfgmod.preset_document(args.preset)
        if args.config:
            raise ConfigError("reproduce takes a preset name, not --config")
    else:
        if not args.config:
            raise ConfigError(f"{args.command} needs --config")
        doc = cfgmod.load(args.config)
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc.setdefault("experiment", {})
        if isinstance(doc["experiment"], dict):
            doc["experiment"]["kind"] = args.command
    if args.grid is not None:
        doc = cfgmod.apply_override(doc, f"market.grid.n={args.grid}")
    if args.rho is not None:
        doc = cfgmod.apply_override(doc, f"market.rho={args.rho!r}")
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.draws is not None:
        doc["n_draws"] = args.draws
    if args.dist:
        try:
            doc["distributions"] = [DistributionSpec.parse(d).to_dict() for d in args.dist]
        except SimulationError as exc:
            raise ConfigError(str(exc)) from None
    for assignment in args.set:
        doc = cfgmod.apply_override(doc, assignment)
    rc = cfgmod.from_dict(doc)
    out_dir = Path(args.out or rc.output or f"out-{args.preset if args.command == 'reproduce' else args.command}")
    return rc, doc, out_dir


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "presets":
        for name in cfgmod.PRESET_NAMES:
            print(f"{name}\t{cfgmod.preset_document(name)['experiment']['kind']}")
        return EXIT_OK
    if args.command == "schema":
        text = json.dumps(cfgmod.SCHEMA, indent=2, sort_keys=True)
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
        return EXIT_OK
    try:
        rc, doc, out_dir = _resolve(args)
        out = Outputs()
        summary = RUNNERS[rc.kind](rc, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleMarketError as exc:
        print(f"error: infeasible market: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"error: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (SimulationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = {
        "command": args.command,
        "preset": getattr(args, "preset", None),
        "config": doc,
        "summary": summary,
        "versions": _versions(),
    }
    if rc.raw.get("note"):
        print(f"note: {rc.raw['note']}", file=sys.stderr)
    out.commit(out_dir, json.loads(json.dumps(manifest, default=float)))
    print(f"wrote {len(out.files) + 1} files to {out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

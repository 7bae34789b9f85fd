"""Batch front-end: simulate -> build-panel -> estimate -> report, plus a
montecarlo driver.  Configuration comes from an optional JSON file of
flat key-value pairs; command-line flags win over file values.  Every run
directory receives a manifest with the configuration hash, seed, and
library versions, which is sufficient to reproduce the artifacts."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np
import pandas as pd

from . import __version__
from .dgp import DgpConfig, calibration_preset, gen_network, regime, simulate_panel
from .montecarlo import (regime_grid, rejection_rate, resolve_jobs,
                         run_monte_carlo, summarize_recovery)
from .network import read_edge_csv, stable_network, write_id_map
from .panel import build_rows, median_split, read_attribute_csv, read_status_csv, yearly_degrees
from .pipeline import PipelineSettings, estimate_design
from .report import coefficient_frame, diagnostics_frame, format_ladder
from .treatment import SPEC_TABLE, DesignSpec, build_design

PRESETS = ("base", "calibration", "valid-iv", "violated-iv", "no-contextual")


class StageError(RuntimeError):
    def __init__(self, stage, err, hint):
        super().__init__(f"[{stage}] {err}\n  hint: {hint}")


def _stage(stage, hint):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(stage, exc, hint) from exc
            return False
    return _Ctx()


def _float_fmt(x):
    return f"{x:.17g}"


def _write_manifest(outdir, command, config_dict, seed=None):
    payload = json.dumps(config_dict, sort_keys=True, default=str)
    manifest = {
        "command": command,
        "config": config_dict,
        "config_sha256": hashlib.sha256(payload.encode()).hexdigest(),
        "seed": seed,
        "versions": {
            "netspill": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        values = json.load(fh)
    if not isinstance(values, dict):
        raise ValueError(f"{path}: config file should hold a flat JSON object.")
    return values


def _dgp_config(args) -> DgpConfig:
    file_values = _load_config_file(args.config)
    if args.preset == "calibration":
        cfg = calibration_preset(seed=args.seed)
    else:
        cfg = DgpConfig(seed=args.seed)
    known = {f.name for f in dataclasses.fields(DgpConfig)}
    bad = sorted(set(file_values) - known)
    if bad:
        raise ValueError(f"unknown DGP config key(s): {bad}.")
    if file_values:
        cfg = cfg.replace(**file_values)
    # flags win over the file
    if args.n_firms is not None:
        cfg = cfg.replace(n_firms=args.n_firms)
    if args.years is not None:
        cfg = cfg.replace(n_years=args.years)
    cfg = cfg.replace(seed=args.seed)
    if args.preset in ("valid-iv", "violated-iv", "no-contextual"):
        cfg = regime(cfg, args.preset)
    return cfg


def cmd_simulate(args) -> int:
    with _stage("dgp", "check the preset name and config file keys"):
        cfg = _dgp_config(args)
        net = gen_network(cfg)
        dataset = simulate_panel(net, cfg)
        os.makedirs(args.out, exist_ok=True)
        paths = dataset.write_csv(args.out)
        _write_manifest(args.out, "simulate", dataclasses.asdict(cfg), seed=args.seed)
    print(f"[dgp] wrote {', '.join(sorted(paths))} to {args.out} "
          f"(n={cfg.n_firms}, edges={net.edge_count}, clamp={dataset.clamp_rate:.3%})")
    return 0


def _load_inputs(data_dir, window, max_gap, min_value):
    with _stage("netcore", "expected edges.csv with supplier_id, customer_id, year, value"):
        edges = read_edge_csv(os.path.join(data_dir, "edges.csv"), min_value=min_value)
        years = np.arange(edges.year_range[0], edges.year_range[1] + 1)
        if window is None:
            window = (int(years[1]), int(years[-1]))   # paper-style: skip baseline year
        net, report = stable_network(edges, window, max_gap=max_gap)
    with _stage("panel", "expected attributes.csv and imports.csv aligned with edges"):
        attrs = read_attribute_csv(os.path.join(data_dir, "attributes.csv"),
                                   edges.firm_labels, years)
        n_sup, n_cus = yearly_degrees(edges, years)
        attrs.attach_degrees(n_sup, n_cus)
        status = read_status_csv(os.path.join(data_dir, "imports.csv"),
                                 edges.firm_labels, years)
    return edges, net, report, attrs, status


def _parse_window(text):
    if text is None:
        return None
    lo, hi = text.split(":")
    return int(lo), int(hi)


def cmd_build_panel(args) -> int:
    edges, net, report, attrs, status = _load_inputs(
        args.data, _parse_window(args.window), args.max_gap, args.min_value)
    with _stage("panel", "mode should be per-origin or pooled"):
        rows = build_rows(status, mode=args.mode)
        os.makedirs(args.out, exist_ok=True)
        rows.to_frame().to_csv(os.path.join(args.out, "panel.csv"), index=False,
                               float_format="%.17g")
        write_id_map(os.path.join(args.out, "id_map.csv"), edges.firm_labels)
        summary = pd.DataFrame([
            ("firms", net.n), ("stable_edges", report.kept_edges),
            ("dropped_edges", report.dropped_edges),
            ("value_share_dropped", report.value_share_dropped),
            ("window", f"{report.window[0]}-{report.window[1]}"),
            ("presence_required", report.presence_required),
            ("rows", rows.n_rows),
        ], columns=["key", "value"])
        summary.to_csv(os.path.join(args.out, "network_summary.csv"), index=False)
        _write_manifest(args.out, "build-panel", {
            "data": args.data, "window": args.window, "max_gap": args.max_gap,
            "min_value": args.min_value, "mode": args.mode})
    print(f"[panel] {rows.n_rows} rows over {net.n} firms "
          f"({report.kept_edges} stable edges) -> {args.out}")
    return 0


def _design_spec(args) -> DesignSpec:
    return DesignSpec(
        name=args.spec, characteristic=args.characteristic,
        predicate=args.predicate, weights=args.weights,
        strict_instruments=not args.loose_instruments)


def cmd_estimate(args) -> int:
    with _stage("treatment", f"spec should be one of {sorted(SPEC_TABLE)}"):
        spec = _design_spec(args)
        plan = spec.resolve()   # config errors surface before any compute
    edges, net, report, attrs, status = _load_inputs(
        args.data, _parse_window(args.window), args.max_gap, args.min_value)
    with _stage("panel", "attributes found for too few firms?"):
        rows = build_rows(status, mode=plan["mode"])
        split = None
        if plan["heterogeneity"] in ("h1", "h2", "h3"):
            split = median_split(attrs, spec.characteristic, int(status.years[0]))
    with _stage("treatment", "network treatments failed to assemble"):
        design = build_design(rows, net, status, attrs, spec, split=split)
    with _stage("estimator", "see the rank or convergence message above"):
        settings = PipelineSettings(demean_tol=args.tol,
                                    drop_singletons=not args.keep_singletons)
        result = estimate_design(design, settings)
    os.makedirs(args.out, exist_ok=True)
    coefficient_frame(result).to_csv(os.path.join(args.out, "results.csv"),
                                     index=False, float_format="%.17g")
    diagnostics_frame(result).to_csv(os.path.join(args.out, "diagnostics.csv"),
                                     index=False, float_format="%.17g")
    drops = pd.DataFrame(sorted(result.drop_ledger.items()), columns=["reason", "rows"])
    drops.to_csv(os.path.join(args.out, "drops.csv"), index=False)
    table = format_ladder([result], titles=[f"({spec.name})"])
    with open(os.path.join(args.out, "table.txt"), "w") as fh:
        fh.write(table + "\n")
    _write_manifest(args.out, "estimate", {
        "data": args.data, "spec": dataclasses.asdict(spec), "window": args.window,
        "max_gap": args.max_gap, "min_value": args.min_value, "tol": args.tol,
        "drop_singletons": not args.keep_singletons})
    print(table)
    return 0


def cmd_report(args) -> int:
    frames = []
    with _stage("report", "pass result directories produced by `estimate`"):
        rows = []
        for path in args.results:
            coefs = pd.read_csv(os.path.join(path, "results.csv"))
            diags = pd.read_csv(os.path.join(path, "diagnostics.csv"))
            rows.append((os.path.basename(os.path.normpath(path)), coefs, diags))
        table = _ladder_from_frames(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table + "\n")
    print(table)
    return 0


def _ladder_from_frames(rows) -> str:
    """Rebuild a ladder from persisted CSV frames (no estimation objects)."""
    from .report import stars

    order: list[str] = []
    for _, coefs, _ in rows:
        labels = list(coefs["label"])
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate coefficient labels in a results file.")
        for lb in labels:
            if lb not in order:
                order.append(lb)
    name_w = max(22, max(len(lb) for lb in order) + 2)
    col_w = 14
    titles = [name for name, _, _ in rows]
    lines = []
    header = " " * name_w + "".join(f"{t:>{col_w}}" for t in titles)
    rule = "-" * len(header)
    lines += [rule, header, rule]
    for lb in order:
        cs, ss = [], []
        for _, coefs, _ in rows:
            hit = coefs[coefs["label"] == lb]
            if len(hit):
                cs.append(f"{hit['coef'].iloc[0]:.4f}{stars(hit['p'].iloc[0])}")
                ss.append(f"({hit['se'].iloc[0]:.4f})")
            else:
                cs.append("")
                ss.append("")
        lines.append(f"{lb:<{name_w}}" + "".join(f"{c:>{col_w}}" for c in cs))
        lines.append(" " * name_w + "".join(f"{s:>{col_w}}" for s in ss))
    lines.append(rule)
    diag_map = [dict(zip(d["key"], d["value"])) for _, _, d in rows]

    def footer(name, key, fmt="{}"):
        vals = [fmt.format(d[key]) if key in d else "" for d in diag_map]
        if any(vals):
            lines.append(f"{name:<{name_w}}" + "".join(f"{v:>{col_w}}" for v in vals))

    footer("r2 (within)", "r2_within", "{:.4}")
    footer("N", "N")
    footer("idstat-analog", "anderson_lm", "{:.4}")
    footer("widstat-analog", "cragg_donald", "{:.4}")
    footer("j", "hansen_j", "{:.4}")
    footer("jp", "hansen_j_p", "{:.4}")
    footer("fixed effects", "fixed_effects")
    footer("clustering variable", "cluster_variable")
    lines.append(rule)
    return "\n".join(lines)


def cmd_montecarlo(args) -> int:
    with _stage("montecarlo", "check regimes/spec names"):
        base = _dgp_config(args)
        regimes = args.regimes.split(",")
        spec = DesignSpec(args.spec)
        spec.resolve()
        os.makedirs(args.out, exist_ok=True)
        truth = {"ybar_D_t1": None, "ybar_U_t1": None}
        summaries = []
        for k, name in enumerate(regimes):
            cfg = regime(base, name) if name != "base" else base
            frame = run_monte_carlo(cfg, [spec], args.reps, args.seed + k,
                                    n_jobs=args.jobs)
            frame.insert(0, "regime", name)
            frame.to_csv(os.path.join(args.out, f"reps_{name}.csv"), index=False,
                         float_format="%.17g")
            t = {"ybar_D_t1": cfg.beta_d, "ybar_U_t1": cfg.beta_u}
            summary = summarize_recovery(frame, spec.name, t)
            summary.insert(0, "regime", name)
            if f"{spec.name}:jp" in frame.columns:
                summary["j_rejection_5pct"] = rejection_rate(frame, spec.name)
            summaries.append(summary)
        pd.concat(summaries, ignore_index=True).to_csv(
            os.path.join(args.out, "summary.csv"), index=False, float_format="%.17g")
        _write_manifest(args.out, "montecarlo", {
            "base": dataclasses.asdict(base), "regimes": regimes,
            "spec": dataclasses.asdict(spec), "reps": args.reps}, seed=args.seed)
    print(pd.concat(summaries, ignore_index=True).to_string(index=False))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netspill",
        description="peer effects in import entry on a production network")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--preset", choices=PRESETS, default="base")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--config", default=None, help="JSON file of DGP fields")
    sim.add_argument("--n-firms", type=int, default=None)
    sim.add_argument("--years", type=int, default=None)
    sim.set_defaults(func=cmd_simulate)

    build = sub.add_parser("build-panel", help="build the analysis panel from CSVs")
    build.add_argument("--data", required=True)
    build.add_argument("--out", required=True)
    build.add_argument("--window", default=None, help="stable-link window, e.g. 2011:2014")
    build.add_argument("--max-gap", type=int, default=1)
    build.add_argument("--min-value", type=float, default=3005.0)
    build.add_argument("--mode", choices=("per-origin", "pooled"), default="per-origin")
    build.set_defaults(func=cmd_build_panel)

    est = sub.add_parser("estimate", help="run one specification end to end")
    est.add_argument("--data", required=True)
    est.add_argument("--spec", required=True)
    est.add_argument("--out", required=True)
    est.add_argument("--characteristic", default=None)
    est.add_argument("--predicate", default=None)
    est.add_argument("--weights", choices=("uniform", "value"), default="uniform")
    est.add_argument("--loose-instruments", action="store_true",
                     help="keep cross-path firms in the second-order sets")
    est.add_argument("--window", default=None)
    est.add_argument("--max-gap", type=int, default=1)
    est.add_argument("--min-value", type=float, default=3005.0)
    est.add_argument("--tol", type=float, default=1e-8)
    est.add_argument("--keep-singletons", action="store_true")
    est.set_defaults(func=cmd_estimate)

    rep = sub.add_parser("report", help="align several results into one table")
    rep.add_argument("--results", nargs="+", required=True,
                     help="result directories from `estimate`")
    rep.add_argument("--out", default=None)
    rep.set_defaults(func=cmd_report)

    mc = sub.add_parser("montecarlo", help="replicated simulate+estimate grid")
    mc.add_argument("--regimes", default="valid-iv",
                    help="comma list: base,valid-iv,violated-iv,no-contextual")
    mc.add_argument("--spec", default="iv-t23")
    mc.add_argument("--reps", type=int, required=True)
    mc.add_argument("--seed", type=int, required=True)
    mc.add_argument("--jobs", type=int, default=None,
                    help="worker count; default NETSPILL_JOBS or all cores")
    mc.add_argument("--out", required=True)
    mc.add_argument("--config", default=None)
    mc.add_argument("--preset", choices=PRESETS, default="base")
    mc.add_argument("--n-firms", type=int, default=None)
    mc.add_argument("--years", type=int, default=None)
    mc.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as err:
        print(str(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

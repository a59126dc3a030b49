"""Command-line interface: ``lmpower simulate | estimate | monopsony | decompose``.

Exit codes: 0 success, 1 estimation failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .core import EstimationError, GroupedDurations, MonopsonyResult, SegmentKey
from .ingestion import IngestionError, load_dataset, load_grouped_csv, load_manifest

SCHEMA_VERSION = "1.0"
DEFAULT_SEED = 20180101
METHODS = ("semiparametric", "semiparametric_robust", "parametric", "grouped_estock",
           "grouped_interval", "unemployment_mixture")
EXIT_OK, EXIT_ESTIMATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def _dump_json(obj, path):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_record(command, inputs, settings, seed, outputs=()):
    """Reproducibility record; contains no timestamps or absolute paths."""
    return {"schema_version": SCHEMA_VERSION, "tool": "lmpower", "version": __version__,
            "command": command, "seed": seed, "settings": settings,
            "inputs": {os.path.basename(p): _sha256(p) for p in inputs if p},
            "outputs": sorted(os.path.basename(p) for p in outputs)}


def _read_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            d = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(d, dict):
        raise UsageError(f"config {path} is not a mapping")
    return d


def _floats(text, name):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated numbers, got {text!r}")


def _fmt(x, d=4):
    return "" if x is None else f"{x:.{d}f}"


# simulate ------------------------------------------------------------------

def cmd_simulate(args):
    from .simulator import Scenario, sample_employed, sample_unemployed, truth_record, write_csv
    from .simulator import write_grouped_csv

    cfg = _read_config(args.scenario)
    if args.seed is not None:
        cfg["seed"] = args.seed
    try:
        sc = Scenario.from_dict(cfg)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid scenario {args.scenario}: {exc}")
    out = args.out
    stem = os.path.splitext(out)[0]
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    obs = sample_employed(sc)
    write_csv(obs, out)
    written = [out]
    truth = truth_record(sc)
    truth["schema_version"] = SCHEMA_VERSION
    _dump_json(truth, stem + ".truth.json")
    written.append(stem + ".truth.json")
    manifest = {"source_path": os.path.basename(out), "year": sc.segment.year,
                "columns": {"wage": "wage", "tenure": "tenure", "censored": "censored",
                            "weight": "weight", "sector": "sector", "education": "education",
                            "age_band": "age_band", "region": "region", "gender": "gender",
                            "year": "year"}}
    with open(stem + ".manifest.yaml", "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=True)
    written.append(stem + ".manifest.yaml")
    if sc.unemployment is not None:
        grouped, _ = sample_unemployed(sc)
        write_grouped_csv(grouped, stem + ".unemployment.csv")
        written.append(stem + ".unemployment.csv")
    _dump_json(run_record("simulate", [args.scenario], sc.to_dict(), sc.seed, written),
               stem + ".run.json")
    print(f"wrote {len(obs)} observations to {out}")
    return EXIT_OK


# estimate ------------------------------------------------------------------

def _estimate_table(rows):
    head = (f"{'method':<22}{'censor':>8}{'k':>10}{'se_k':>9}{'delta':>10}{'se_delta':>10}"
            f"{'lambda':>10}{'se_lambda':>10}{'n':>8}  flags")
    lines = [head]
    for r in rows:
        c = "" if r.get("censor_level") is None else f"{r['censor_level']:g}"
        lines.append(f"{r['method']:<22}{c:>8}{_fmt(r['k']):>10}{_fmt(r['se_k']):>9}"
                     f"{_fmt(r['delta']):>10}{_fmt(r['se_delta']):>10}{_fmt(r['lambda']):>10}"
                     f"{_fmt(r['se_lambda']):>10}{r['n']:>8}  {','.join(r['flags'])}")
    return "\n".join(lines)


def _mixture_table(d):
    return (f"{'pi':>10}{'se_pi':>10}{'lambda0':>10}{'se_lambda0':>12}{'n':>8}  flags\n"
            f"{_fmt(d['pi']):>10}{_fmt(d['se_pi']):>10}{_fmt(d['lambda0']):>10}"
            f"{_fmt(d['se_lambda0']):>12}{d['n']:>8g}  {','.join(d['flags'])}")


def _load_obs(manifest_path):
    if manifest_path is None:
        raise UsageError("this method needs a manifest")
    manifest = load_manifest(manifest_path)
    obs, report = load_dataset(manifest, return_report=True)
    return manifest, obs, report


def cmd_estimate(args):
    from . import parametric, semiparametric, unconditional

    method = args.method
    levels = _floats(args.censor_level, "censor-level") if args.censor_level else None
    if levels is not None and method != "parametric":
        raise UsageError("--censor-level applies to the parametric method only")
    boundaries = _floats(args.boundaries, "boundaries") if args.boundaries else None
    settings = {"method": method, "censor_levels": levels, "censoring": args.censoring,
                "boundaries": boundaries, "grouped": os.path.basename(args.grouped)
                if args.grouped else None, "unemployment_rate": args.unemployment_rate}
    inputs = [args.manifest, args.grouped]
    doc = {"schema_version": SCHEMA_VERSION, "command": "estimate", "method": method}
    try:
        if method in ("grouped_estock", "unemployment_mixture") and args.grouped:
            data = load_grouped_csv(args.grouped)
        elif method in ("grouped_estock", "unemployment_mixture"):
            if boundaries is None:
                raise UsageError(f"{method} needs --grouped FILE or --boundaries")
            manifest, obs, report = _load_obs(args.manifest)
            inputs.append(manifest.source_path)
            doc["ingestion"] = report.to_dict()
            data = GroupedDurations.from_durations(obs.elapsed_spell, boundaries)
        else:
            manifest, obs, report = _load_obs(args.manifest)
            inputs.append(manifest.source_path)
            doc["ingestion"] = report.to_dict()
            if manifest.censor_level is not None and levels is None:
                levels = [manifest.censor_level]
        if method == "unemployment_mixture":
            est = unconditional.fit_unemployment_mixture(
                data, unemployment_rate=args.unemployment_rate, seed=args.seed)
            doc["estimates"] = [est.to_dict()]
            table = _mixture_table(doc["estimates"][0])
        else:
            if method == "semiparametric":
                ests = [semiparametric.fit_linear(obs)]
            elif method == "semiparametric_robust":
                ests = [semiparametric.fit_linear_robust(obs)]
            elif method == "parametric":
                ms = parametric.MleSettings(censoring=args.censoring)
                ests = parametric.fit_mle_censor_sweep(obs, levels or [None], ms)
            elif method == "grouped_interval":
                if boundaries is None:
                    raise UsageError("grouped_interval needs --boundaries")
                ests = [parametric.fit_mle_grouped(obs, boundaries)]
            else:
                ests = [unconditional.fit_estock_grouped(data, seed=args.seed)]
            doc["estimates"] = [e.to_dict() for e in ests]
            table = _estimate_table(doc["estimates"])
    except IngestionError:
        raise
    except (EstimationError, ValueError) as exc:
        err = {"schema_version": SCHEMA_VERSION, "command": "estimate", "method": method,
               "error": {"type": type(exc).__name__, "message": str(exc),
                         "diagnostics": getattr(exc, "diagnostics", {})}}
        if args.out:
            _dump_json(err, args.out)
        print(json.dumps(_jsonable(err), sort_keys=True), file=sys.stderr)
        return EXIT_ESTIMATION
    print(table)
    if args.out:
        doc["run"] = run_record("estimate", [p for p in inputs if p], settings, args.seed,
                                [args.out])
        _dump_json(doc, args.out)
    return EXIT_OK


# monopsony -----------------------------------------------------------------

def _write_results(results, path_stem):
    from .monopsony import results_frame
    results_frame(results).to_csv(path_stem + ".csv", index=False, lineterminator="\n")
    _dump_json([r.to_dict() for r in results], path_stem + ".json")
    return [path_stem + ".csv", path_stem + ".json"]


def _decomposition_outputs(results, design, out_dir):
    from .monopsony import decompose, render_table
    dec = decompose(results, design.get("dimensions", []),
                    time=design.get("time", "year_dummies"), reference=design.get("reference"))
    text = render_table(dec)
    with open(os.path.join(out_dir, "decomposition.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(text + "\n")
    _dump_json(dec.to_dict(), os.path.join(out_dir, "decomposition.json"))
    return text, [os.path.join(out_dir, "decomposition.txt"),
                  os.path.join(out_dir, "decomposition.json")]


def cmd_monopsony(args):
    from .monopsony import ESTIMATORS, plot_frame, run_panel

    cfg = _read_config(args.config)
    estimator = args.estimator or cfg.get("estimator", "semiparametric")
    if estimator not in ESTIMATORS:
        raise UsageError(f"unknown estimator {estimator!r}; choose from {sorted(ESTIMATORS)}")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", DEFAULT_SEED))
    n_boot = args.n_boot if args.n_boot is not None else int(cfg.get("n_boot", 500))
    min_size = args.min_size if args.min_size is not None else int(cfg.get("min_size", 30))
    ci_level = float(cfg.get("ci_level", 0.95))
    est_kw = {"censor_level": cfg["censor_level"]} if cfg.get("censor_level") else None
    design = _read_config(args.design) if args.design else None
    settings = {"estimator": estimator, "n_boot": n_boot, "min_size": min_size,
                "ci_level": ci_level, "aggregate": args.aggregate, "estimator_kw": est_kw,
                "design": design}
    manifest, obs, report = _load_obs(args.manifest)
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    written = []
    _dump_json(report.to_dict(), os.path.join(out, "drop_report.json"))
    written.append(os.path.join(out, "drop_report.json"))
    panel = run_panel(obs, estimator=estimator, min_size=min_size, n_boot=n_boot, seed=seed,
                      ci_level=ci_level, aggregate=args.aggregate, estimator_kw=est_kw)
    _dump_json({"skipped": panel.skipped, "failed": panel.failures},
               os.path.join(out, "skip_report.json"))
    written.append(os.path.join(out, "skip_report.json"))
    inputs = [args.manifest, manifest.source_path, args.config, args.design]
    if not panel.segments:
        print(f"no segment reaches the minimum size of {min_size}; see skip_report.json",
              file=sys.stderr)
        _dump_json(run_record("monopsony", inputs, settings, seed, written),
                   os.path.join(out, "run.json"))
        return EXIT_ESTIMATION
    written += _write_results(panel.segments, os.path.join(out, "segments"))
    agg_stem = os.path.join(out, f"aggregate_{args.aggregate}")
    written += _write_results(panel.aggregate, agg_stem)
    plot_frame(panel.segments + panel.aggregate).to_csv(
        os.path.join(out, "plot.csv"), index=False, lineterminator="\n")
    written.append(os.path.join(out, "plot.csv"))
    print(f"{'segment':<40}{'mu':>8}{'se_mu':>8}{'ci_low':>8}{'ci_high':>8}{'k':>8}{'n':>7}")
    rows = [(r, "") for r in panel.segments] + [(r, f" [{args.aggregate}]")
                                                 for r in panel.aggregate]
    for r, tag in rows:
        lo, hi = r.ci_mu if r.ci_mu else (None, None)
        label = r.segment_key.label() + tag
        print(f"{label:<40}{_fmt(r.mu):>8}{_fmt(r.se_mu):>8}{_fmt(lo):>8}{_fmt(hi):>8}"
              f"{_fmt(r.k, 3):>8}{r.n_obs:>7}")
    if design:
        try:
            text, files = _decomposition_outputs(panel.segments, design, out)
        except ValueError as exc:
            print(f"decomposition failed: {exc}", file=sys.stderr)
            return EXIT_ESTIMATION
        written += files
        print()
        print(text)
    _dump_json(run_record("monopsony", inputs, settings, seed, written),
               os.path.join(out, "run.json"))
    return EXIT_OK


# decompose -----------------------------------------------------------------

def read_results_csv(path):
    """Monopsony results written by the ``monopsony`` command."""
    try:
        df = pd.read_csv(path, keep_default_na=False, dtype=str)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise UsageError(f"cannot read {path}: {exc}")
    need = {"mu", "year", "mean_wage", "floor_wage", "k", "n_obs"}
    if not need <= set(df.columns):
        raise UsageError(f"{path} lacks columns {sorted(need - set(df.columns))}")

    def num(v):
        return float(v) if v not in ("", None) else None

    out = []
    for rec in df.to_dict("records"):
        key = SegmentKey.from_dict({k: rec.get(k) for k in
                                    ("sector", "education", "age_band", "region", "gender",
                                     "year") if k in rec})
        lo, hi = num(rec.get("ci_low", "")), num(rec.get("ci_high", ""))
        out.append(MonopsonyResult(key, float(rec["mu"]), float(rec["mean_wage"]),
                                   float(rec["floor_wage"]), float(rec["k"]),
                                   num(rec.get("se_mu", "")), int(float(rec["n_obs"])),
                                   (lo, hi) if lo is not None else None, rec.get("method"),
                                   num(rec.get("total_weight", "")) or 0.0))
    return out


def cmd_decompose(args):
    design = _read_config(args.design) if args.design else {}
    if args.dimensions:
        design["dimensions"] = [d.strip() for d in args.dimensions.split(",") if d.strip()]
    if args.time:
        design["time"] = None if args.time == "none" else args.time
    if not design.get("dimensions") and design.get("time", "year_dummies") is None:
        raise UsageError("decomposition needs dimensions or a time effect")
    results = read_results_csv(args.results)
    os.makedirs(args.out_dir, exist_ok=True)
    try:
        text, files = _decomposition_outputs(results, design, args.out_dir)
    except ValueError as exc:
        print(f"decomposition failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    print(text)
    _dump_json(run_record("decompose", [args.results, args.design], design, None, files),
               os.path.join(args.out_dir, "run.json"))
    return EXIT_OK


# parser --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="lmpower", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lmpower {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a steady-state dataset from a scenario")
    s.add_argument("scenario", help="scenario file (YAML or JSON)")
    s.add_argument("--out", required=True, help="output CSV path")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate friction parameters")
    e.add_argument("manifest", nargs="?", help="dataset manifest (YAML or JSON)")
    e.add_argument("--method", required=True, choices=METHODS)
    e.add_argument("--censor-level", help="comma-separated censoring levels (parametric)")
    e.add_argument("--censoring", choices=("threshold", "flagged"), default="threshold")
    e.add_argument("--boundaries", help="comma-separated class lower bounds")
    e.add_argument("--grouped", help="grouped durations CSV (lower_bound, frequency)")
    e.add_argument("--unemployment-rate", type=float, help="observed unemployment rate")
    e.add_argument("--seed", type=int, default=DEFAULT_SEED)
    e.add_argument("--out", help="output JSON path")
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("monopsony", help="per-segment monopsony index")
    m.add_argument("manifest", help="dataset manifest (YAML or JSON)")
    m.add_argument("--config", help="friction config: estimator, n_boot, seed, min_size")
    m.add_argument("--out-dir", required=True)
    m.add_argument("--aggregate", choices=("pooled", "weighted"), default="pooled")
    m.add_argument("--design", help="decomposition design (dimensions, time, reference)")
    m.add_argument("--estimator", help="override the configured estimator")
    m.add_argument("--n-boot", type=int)
    m.add_argument("--min-size", type=int)
    m.add_argument("--seed", type=int)
    m.set_defaults(func=cmd_monopsony)

    d = sub.add_parser("decompose", help="regress segment indices on category dummies")
    d.add_argument("results", help="segments.csv written by the monopsony command")
    d.add_argument("--design", help="design file (dimensions, time, reference)")
    d.add_argument("--dimensions", help="comma-separated dimensions")
    d.add_argument("--time", choices=("year_dummies", "trend", "none"))
    d.add_argument("--out-dir", required=True)
    d.set_defaults(func=cmd_decompose)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lmpower {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IngestionError as exc:
        print(f"lmpower {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EstimationError as exc:
        print(f"lmpower {args.command}: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())

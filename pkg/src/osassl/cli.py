"""Command-line entry point.

::

    osassl run --config run.json [--workers N] [--out DIR]
    osassl validate --config run.json
    osassl gen --spec generator.json --out DIR

A run config is a JSON object::

    {
      "input": {"synthetic": {...generator fields...}}
             | {"panel": "panel.csv", "schema": "schema.json",
                "features": {"grid": ..., "overlap": ..., "houses": ..., "cdf_window": [y0, y1]}},
      "learners": "default" | [{"name", "kind", "hyperparameters", "screening"}, ...],
      "superlearner": {"stages": [5, 5, 6], "penalty": 0.05, "eps": 0.1, ...},
      "importance": {"enabled": true, "window": [y0, y1], "n_perm": 10000, "seed": 0},
      "output": {"dir": "out", "files": [...]},
      "workers": 1
    }

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import gaussian_kde

from . import features as feat
from .core import CovariateEntry, CovariateSchema, Panel, read_panel_csv
from .importance import group_report, panel_importance, scores_frame
from .learners import (
    BoostedLinearLearner,
    KSKnnLearner,
    MeanLearner,
    RidgeLearner,
    learner_from_config,
    screen,
)
from .superlearner import ScheduleConfig, probe_summary, run_schedule
from .superlearner.schedule import BASELINES
from .synthgen import GeneratorSpec, generate, write_generated

OUTPUT_FILES = (
    "forecast.csv",
    "forecast.json",
    "risk_traces.csv",
    "weights.csv",
    "predictions.csv",
    "residual_deciles.csv",
    "ratio_summary.csv",
    "importance.csv",
    "importance_groups.csv",
    "oracle.csv",
)
TOP_KEYS = {"input", "learners", "superlearner", "importance", "output", "workers"}
IMPORTANCE_KEYS = {"enabled", "window", "n_perm", "seed", "predictor", "alpha"}
KDE_POINTS = 64


class StageError(Exception):
    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage


# --- config -----------------------------------------------------------------


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise StageError("config", f"cannot read config {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StageError("config", f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(cfg, dict):
        raise StageError("config", f"config {path} must hold a JSON object")
    return cfg


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def validate_config(cfg: dict, base_dir=".") -> list[str]:
    """Every violation in ``cfg``; empty when the config is runnable."""
    base = Path(base_dir)
    errs = [f"{k}: unknown field" for k in sorted(set(cfg) - TOP_KEYS)]
    synthetic = False
    n_times = None

    inp = cfg.get("input")
    if not isinstance(inp, dict):
        errs.append("input: required object with either 'synthetic' or 'panel' and 'schema'")
    elif "synthetic" in inp:
        synthetic = True
        if set(inp) - {"synthetic"}:
            errs.append("input: 'synthetic' cannot be combined with other input fields")
        try:
            spec = GeneratorSpec.from_dict(inp["synthetic"])
            errs += [f"input.synthetic.{e}" for e in spec.validate()]
            n_times = spec.n_times
        except (TypeError, ValueError) as exc:
            errs.append(f"input.synthetic: {exc}")
    else:
        for key in ("panel", "schema"):
            if key not in inp:
                errs.append(f"input.{key}: required for CSV input")
            elif not _resolve(base, inp[key]).is_file():
                errs.append(f"input.{key}: file not found: {_resolve(base, inp[key])}")
        if "cost_bound" in inp and not (isinstance(inp["cost_bound"], (int, float)) and inp["cost_bound"] > 0):
            errs.append("input.cost_bound: must be a positive number")
        fcfg = inp.get("features")
        if fcfg is not None:
            for key in ("grid", "overlap"):
                if key not in fcfg:
                    errs.append(f"input.features.{key}: required")
                elif not _resolve(base, fcfg[key]).is_file():
                    errs.append(f"input.features.{key}: file not found: {_resolve(base, fcfg[key])}")
            if "houses" in fcfg and not _resolve(base, fcfg["houses"]).is_file():
                errs.append(f"input.features.houses: file not found: {_resolve(base, fcfg['houses'])}")
            cw = fcfg.get("cdf_window")
            if not (isinstance(cw, list) and len(cw) == 2 and all(_is_int(v) for v in cw) and cw[0] <= cw[1]):
                errs.append("input.features.cdf_window: need [first_year, last_year]")
            nq = fcfg.get("n_quantiles", 29)
            if not (_is_int(nq) and nq >= 1):
                errs.append("input.features.n_quantiles: must be a positive integer")

    learners = cfg.get("learners", "default")
    if learners != "default":
        if not isinstance(learners, list) or not learners:
            errs.append("learners: need 'default' or a nonempty list")
        else:
            names = []
            for i, item in enumerate(learners):
                try:
                    names.append(learner_from_config(item).name)
                except (TypeError, ValueError, AttributeError) as exc:
                    errs.append(f"learners[{i}]: {exc}")
            if len(set(names)) != len(names):
                errs.append("learners: names must be unique")

    sl = cfg.get("superlearner", {})
    sched = None
    known = {f.name for f in fields(ScheduleConfig)} - {"workers"}
    if not isinstance(sl, dict):
        errs.append("superlearner: must be an object")
    else:
        errs += [f"superlearner.{k}: unknown field" for k in sorted(set(sl) - known)]
        try:
            sched = _schedule(sl, 1)
            errs += [f"superlearner.{e}" for e in sched.validate()]
        except (TypeError, ValueError) as exc:
            errs.append(f"superlearner: {exc}")
    if sched is not None and n_times is not None and not sched.validate() and n_times < sched.minimal_length():
        errs.append(
            f"input.synthetic.n_times: stages {tuple(sched.stages)} need at least {sched.minimal_length()} slices"
        )

    imp = cfg.get("importance", {})
    if not isinstance(imp, dict):
        errs.append("importance: must be an object")
    else:
        errs += [f"importance.{k}: unknown field" for k in sorted(set(imp) - IMPORTANCE_KEYS)]
        n_perm = imp.get("n_perm", 10_000)
        if not (_is_int(n_perm) and n_perm >= 1):
            errs.append(f"importance.n_perm: must be a positive integer, got {n_perm!r}")
        if not _is_int(imp.get("seed", 0)):
            errs.append("importance.seed: must be an integer")
        w = imp.get("window")
        if w is not None and not (isinstance(w, list) and len(w) == 2 and all(_is_int(v) for v in w) and w[0] <= w[1]):
            errs.append("importance.window: need [first_year, last_year] or null")
        if imp.get("predictor", "discrete") not in BASELINES:
            errs.append(f"importance.predictor: must be one of {BASELINES}")
        alpha = imp.get("alpha", 0.05)
        if not (isinstance(alpha, (int, float)) and 0 < alpha < 1):
            errs.append("importance.alpha: must be in (0, 1)")

    out = cfg.get("output", {})
    if not isinstance(out, dict):
        errs.append("output: must be an object")
    else:
        files = out.get("files")
        if files is not None:
            if not isinstance(files, list):
                errs.append("output.files: must be a list")
            else:
                bad = [f for f in files if f not in OUTPUT_FILES]
                if bad:
                    errs.append(f"output.files: unknown files {bad}")
                if "oracle.csv" in files and not synthetic:
                    errs.append("output.files: oracle.csv requires synthetic input")
                disabled = isinstance(imp, dict) and not imp.get("enabled", True)
                if disabled and {"importance.csv", "importance_groups.csv"} & set(files):
                    errs.append("output.files: importance files declared but importance is disabled")
    workers = cfg.get("workers", 1)
    if not (_is_int(workers) and workers >= 1):
        errs.append(f"workers: must be a positive integer, got {workers!r}")
    return errs


def _schedule(sl: dict, workers: int) -> ScheduleConfig:
    kw = dict(sl)
    for key in ("stages", "methods"):
        if key in kw:
            kw[key] = tuple(kw[key])
    return ScheduleConfig(**kw, workers=workers)


def default_zoo(schema: CovariateSchema) -> list:
    """Mean, ridge, boosting and (when there are z covariates) a KS-kNN learner."""
    zoo = [
        MeanLearner(name="mean"),
        RidgeLearner(name="ridge", penalty=1.0),
        BoostedLinearLearner(name="boosted", rounds=50, shrinkage=0.1),
    ]
    if schema.x_names:
        zoo.append(screen(RidgeLearner(name="ridge_x", penalty=1.0), schema.x_names))
    if schema.z_names:
        zoo.append(KSKnnLearner(name="ks_knn", k=10, channels=(schema.z_names,)))
    return zoo


# --- input ------------------------------------------------------------------


def _feature_panel(panel: Panel, fcfg: dict, base: Path) -> Panel:
    grid = feat.GridSwi.from_frame(pd.read_csv(_resolve(base, fcfg["grid"]), float_precision="round_trip"))
    weights = feat.overlap_from_frame(pd.read_csv(_resolve(base, fcfg["overlap"]), float_precision="round_trip"))
    houses = pd.read_csv(_resolve(base, fcfg["houses"]), float_precision="round_trip") if "houses" in fcfg else None
    years = [int(t) for t in panel.times]
    table = feat.city_feature_table(
        grid, weights, years, tuple(fcfg["cdf_window"]), houses, fcfg.get("n_quantiles", 29)
    )
    names = [c for c in table.columns if c not in ("city", "year")]
    table = table.set_index(["city", "year"])
    keys = pd.MultiIndex.from_product([panel.cities, years], names=["city", "year"])
    missing = keys.difference(table.index)
    if len(missing):
        raise ValueError(f"feature table has no rows for {len(missing)} city-years, e.g. {missing[0]}")
    block = table.loc[keys, names].to_numpy(float).reshape(len(panel.cities), len(years), len(names))
    z_new = np.concatenate([panel.z, block.transpose(1, 0, 2)], axis=2)
    entries = list(panel.schema.entries) + [
        CovariateEntry(n, group=feat.feature_group(n), role="z") for n in names
    ]
    schema = CovariateSchema(entries)
    return Panel(schema, panel.cities, panel.times, panel.x, z_new, panel.y, panel.declared, cost_bound=panel.cost_bound)


def load_input(cfg: dict, base: Path):
    inp = cfg["input"]
    if "synthetic" in inp:
        return generate(GeneratorSpec.from_dict(inp["synthetic"]))
    schema = CovariateSchema.load(_resolve(base, inp["schema"]))
    panel = read_panel_csv(_resolve(base, inp["panel"]), schema, cost_bound=inp.get("cost_bound"))
    if inp.get("features"):
        panel = _feature_panel(panel, inp["features"], base)
    return panel, None


# --- report tables ----------------------------------------------------------


def risk_traces(report) -> pd.DataFrame:
    recs = []
    for level, ledger, names in (
        ("base", report.base_ledger, report.learner_names),
        ("meta", report.meta_ledger, report.method_names),
    ):
        for t in range(1, ledger.n_updates + 1):
            risk, pen, crit = ledger.risk(t), ledger.penalty(t), ledger.criterion(t)
            sel = ledger.select(t)
            for j, name in enumerate(names):
                recs.append({
                    "level": level, "year": ledger.times[t - 1], "t": t, "algorithm": name,
                    "risk": risk[j], "penalty": pen[j], "criterion": crit[j], "selected": int(j == sel),
                })
    return pd.DataFrame(recs)


def weight_table(report) -> pd.DataFrame:
    recs = []
    for r in report.rows:
        for name, w in zip(report.method_names, r["weights"]):
            recs.append({"year": r["time"], "method": name, "weight": float(w), "discrete": int(name == r["selected_name"])})
    return pd.DataFrame(recs)


def prediction_table(report) -> pd.DataFrame:
    recs = []
    for r in report.rows:
        recs.append({"year": r["time"], "series": "actual", "total": r["total_actual"]})
        for name in BASELINES:
            recs.append({"year": r["time"], "series": name, "total": r[f"total_{name}"]})
        for name, v in zip(report.learner_names, r["base_totals"]):
            recs.append({"year": r["time"], "series": f"learner:{name}", "total": float(v)})
    return pd.DataFrame(recs)


def residual_deciles(report, predictor="discrete", points=KDE_POINTS) -> pd.DataFrame:
    """Kernel density of residuals (actual - predicted) per decile of the predicted cost."""
    pred, actual = [], []
    for t in report.eval_times:
        d = report.declared[t]
        pred.append(report.overarching[predictor][t][d])
        actual.append(report.actual[t][d])
    cols = ["decile", "lower", "upper", "n", "residual", "density"]
    pred = np.concatenate(pred) if pred else np.zeros(0)
    if pred.size == 0:
        return pd.DataFrame(columns=cols)
    resid = np.concatenate(actual) - pred
    edges = np.quantile(pred, np.linspace(0, 1, 11))
    which = np.clip(np.searchsorted(edges, pred, side="right") - 1, 0, 9)
    recs = []
    for k in range(10):
        r = resid[which == k]
        if r.size >= 2 and np.ptp(r) > 0:
            grid = np.linspace(r.min(), r.max(), points)
            dens = gaussian_kde(r)(grid)
        elif r.size:
            grid, dens = np.array([r[0]]), np.array([np.nan])
        else:
            continue
        for g, v in zip(grid, dens):
            recs.append({"decile": k + 1, "lower": edges[k], "upper": edges[k + 1], "n": int(r.size),
                         "residual": float(g), "density": float(v)})
    return pd.DataFrame(recs, columns=cols)


def _write_csv(frame: pd.DataFrame, path: Path):
    frame.to_csv(path, index=False, lineterminator="\n")


# --- commands ---------------------------------------------------------------


def run(cfg: dict, base_dir=".", out=None, workers=None) -> dict:
    """Execute a run config; returns ``{file name: path}`` of what was written."""
    base = Path(base_dir)
    errs = validate_config(cfg, base)
    if errs:
        raise StageError("config", f"{len(errs)} violation(s): " + "; ".join(errs))
    workers = int(workers or cfg.get("workers", 1))
    synthetic = "synthetic" in cfg["input"]
    imp = {"enabled": True, "window": None, "n_perm": 10_000, "seed": 0, "predictor": "discrete", "alpha": 0.05}
    imp.update(cfg.get("importance", {}))
    out_cfg = cfg.get("output", {})
    out_dir = Path(out) if out is not None else _resolve(base, out_cfg.get("dir", "out"))
    files = out_cfg.get("files")
    if files is None:
        files = [f for f in OUTPUT_FILES if (f != "oracle.csv" or synthetic)
                 and (imp["enabled"] or not f.startswith("importance"))]

    stage = "input"
    try:
        panel, truth = load_input(cfg, base)
        stage = "learners"
        lcfg = cfg.get("learners", "default")
        learners = default_zoo(panel.schema) if lcfg == "default" else [learner_from_config(i) for i in lcfg]
        stage = "schedule"
        sched = _schedule(cfg.get("superlearner", {}), workers)
        report = run_schedule(panel, learners, sched, truth=truth)
        tables = {}
        stage = "report"
        tables["forecast.csv"] = report.to_frame()
        tables["risk_traces.csv"] = risk_traces(report)
        tables["weights.csv"] = weight_table(report)
        tables["predictions.csv"] = prediction_table(report)
        tables["residual_deciles.csv"] = residual_deciles(report)
        tables["ratio_summary.csv"] = report.ratio_summary()
        if "oracle.csv" in files:
            stage = "oracle"
            tables["oracle.csv"] = probe_summary(report, sched.eps)
        if {"importance.csv", "importance_groups.csv"} & set(files):
            stage = "importance"
            window = tuple(imp["window"]) if imp["window"] else None
            scores = panel_importance(
                report, panel, window, imp["predictor"], n_perm=imp["n_perm"], seed=imp["seed"], workers=workers
            )
            tables["importance.csv"] = scores_frame(scores)
            tables["importance_groups.csv"] = group_report(scores, alpha=imp["alpha"])
        stage = "output"
        out_dir.mkdir(parents=True, exist_ok=True)
        written = {}
        for name in files:
            path = out_dir / name
            if name == "forecast.json":
                report.to_json(path)
            else:
                _write_csv(tables[name], path)
            written[name] = path
        return written
    except StageError:
        raise
    except (ValueError, KeyError, OSError, IndexError, np.linalg.LinAlgError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        raise StageError(stage, msg) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="osassl", description="One-step-ahead sequential super learner for city panels.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a config end to end and write reports")
    r.add_argument("--config", required=True)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--out", default=None)
    v = sub.add_parser("validate", help="list every violation in a config without running it")
    v.add_argument("--config", required=True)
    g = sub.add_parser("gen", help="generate a synthetic panel from a generator spec")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    return p


def _fail(stage, message) -> int:
    print(f"error [stage={stage}]: {' '.join(str(message).split())}", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            errs = validate_config(cfg, Path(args.config).parent)
            for e in errs:
                print(e)
            return 1 if errs else 0
        if args.command == "gen":
            raw = load_config(args.spec)
            try:
                spec = GeneratorSpec.from_dict(raw)
                panel, truth = generate(spec)
            except (TypeError, ValueError) as exc:
                raise StageError("generate", str(exc)) from exc
            try:
                paths = write_generated(panel, truth, args.out)
            except OSError as exc:
                raise StageError("output", str(exc)) from exc
            for p in paths.values():
                print(p)
            return 0
        if args.workers is not None and args.workers < 1:
            raise StageError("config", "--workers must be >= 1")
        cfg = load_config(args.config)
        written = run(cfg, Path(args.config).parent, out=args.out, workers=args.workers)
        for p in written.values():
            print(p)
        return 0
    except StageError as exc:
        return _fail(exc.stage, exc)


if __name__ == "__main__":
    sys.exit(main())

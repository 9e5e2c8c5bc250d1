"""Staged one-step-ahead training and evaluation.

With stage lengths ``(reserved, base, meta)`` and panel times ``1..T``:

* the first ``reserved`` slices are never used for training (they only feed
  lagged covariates);
* base learners are refitted on every prefix starting at slice
  ``r0 = reserved + 1`` and scored one step ahead from ``r0 + 1`` on;
* after ``base`` slices of base-learner scores the J methods start producing
  predictors, scored one step ahead;
* after ``meta`` further slices the overarching discrete and continuous
  super learners are evaluated on every remaining slice.

Everything predicted for slice ``t`` is computed before slice ``t``'s costs
are touched.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from ..learners import Predictor
from .ledger import RiskLedger
from .methods import Select, Weighted, apply_combination, build_methods
from .oracle import OracleProbe, excess_gap, oracle_select, true_risk
from .simplex import NetLedger

BASELINES = ("discrete", "continuous", "average", "median")


@dataclass
class ScheduleConfig:
    stages: tuple = (5, 5, 6)
    penalty: float = 0.05
    penalty_variant: str = "literal"
    eps: float = 0.1
    inner_eps: float = 0.2
    inner_penalty: float = 0.05
    stack_penalty: float = 1.0
    methods: tuple = ("discrete", "net", "average", "median", "ridge_stack")
    workers: int = 1

    def validate(self) -> list[str]:
        errs = []
        st = tuple(self.stages)
        if len(st) != 3 or any(int(s) != s for s in st):
            errs.append("stages: need three integer stage lengths (reserved, base, meta)")
        else:
            if st[0] < 0:
                errs.append("stages: reserved length must be >= 0")
            if st[1] < 1 or st[2] < 1:
                errs.append("stages: base and meta stage lengths must be >= 1")
        if not self.penalty >= 0:
            errs.append(f"penalty: must be >= 0, got {self.penalty}")
        if not self.inner_penalty >= 0:
            errs.append(f"inner_penalty: must be >= 0, got {self.inner_penalty}")
        if not self.stack_penalty >= 0:
            errs.append(f"stack_penalty: must be >= 0, got {self.stack_penalty}")
        if not 0 < self.eps <= 1:
            errs.append(f"eps: must be in (0, 1], got {self.eps}")
        if not 0 < self.inner_eps <= 1:
            errs.append(f"inner_eps: must be in (0, 1], got {self.inner_eps}")
        if self.penalty_variant not in ("literal", "per_algorithm"):
            errs.append(f"penalty_variant: must be 'literal' or 'per_algorithm', got {self.penalty_variant!r}")
        if len(self.methods) < 2:
            errs.append("methods: the continuous super learner needs at least two methods")
        if int(self.workers) != self.workers or self.workers < 1:
            errs.append(f"workers: must be a positive integer, got {self.workers}")
        return errs

    def minimal_length(self) -> int:
        return int(sum(self.stages)) + 1


class MetaPredictor(Predictor):
    """Overarching prediction rule frozen at one time: base predictors -> methods -> top combination."""

    def __init__(self, base, combos, top, cost_bound, schema=None):
        super().__init__(cost_bound)
        self.base = list(base)
        self.combos = list(combos)
        self.top = top
        self.schema = schema

    def method_predictions(self, x, z, declared):
        P = np.stack([b.predict(x, z, declared) for b in self.base])
        return np.stack([apply_combination(c, P, declared, self.cost_bound) for c in self.combos])

    def predict(self, x, z, declared):
        declared = np.asarray(declared, dtype=bool)
        return apply_combination(self.top, self.method_predictions(x, z, declared), declared, self.cost_bound)


def forecast_total(predictor: Predictor, new_slice, schema=None):
    """Per-city predictions for the next slice and their sum."""
    schema = schema or getattr(predictor, "schema", None)
    if schema is not None:
        if new_slice.x.shape[1] != len(schema.x_names) or new_slice.z.shape[1] != len(schema.z_names):
            raise ValueError("slice covariates do not match the predictor's schema")
    preds = predictor.predict(new_slice.x, new_slice.z, new_slice.declared)
    return preds, float(preds.sum())


@dataclass
class ForecastReport:
    """Everything produced by one schedule run.

    ``rows`` holds one record per evaluation time.  Prediction arrays are
    keyed by the time of the slice they were made for.
    """

    config: ScheduleConfig
    times: list
    cities: np.ndarray
    learner_names: list
    method_names: list
    net_weights: np.ndarray
    rows: list = field(default_factory=list)
    base_predictions: dict = field(default_factory=dict)
    method_predictions: dict = field(default_factory=dict)
    overarching: dict = field(default_factory=dict)
    actual: dict = field(default_factory=dict)
    declared: dict = field(default_factory=dict)
    base_ledger: RiskLedger | None = None
    meta_ledger: RiskLedger | None = None
    net_ledger: NetLedger | None = None
    probe: OracleProbe | None = None
    forecaster: MetaPredictor | None = None
    continuous_forecaster: MetaPredictor | None = None
    degenerate_fits: list = field(default_factory=list)

    @property
    def eval_times(self) -> list:
        return [r["time"] for r in self.rows]

    def ratios(self, predictor="discrete") -> np.ndarray:
        return np.array([r[f"ratio_{predictor}"] for r in self.rows])

    def ratio_summary(self) -> pd.DataFrame:
        out = []
        for name in BASELINES:
            r = self.ratios(name)
            r = r[np.isfinite(r)]
            out.append({"predictor": name, "mean": float(r.mean()) if r.size else np.nan,
                        "sd": float(r.std(ddof=1)) if r.size > 1 else np.nan})
        return pd.DataFrame(out)

    def to_frame(self) -> pd.DataFrame:
        recs = []
        for r in self.rows:
            rec = {
                "year": r["time"],
                "selected": r["selected"],
                "selected_name": r["selected_name"],
                "weights": ";".join(f"{w:.6g}" for w in r["weights"]),
                "total_actual": r["total_actual"],
                "total_predicted": r["total_discrete"],
                "ratio": r["ratio_discrete"],
                "total_continuous": r["total_continuous"],
                "ratio_continuous": r["ratio_continuous"],
                "total_average": r["total_average"],
                "total_median": r["total_median"],
            }
            for j, name in enumerate(self.method_names):
                rec[f"risk_{name}"] = r["risks"][j]
            recs.append(rec)
        return pd.DataFrame(recs)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, np.ndarray):
                return [clean(x) for x in v.tolist()]
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {str(k): clean(x) for k, x in v.items()}
            if isinstance(v, (np.floating, float)):
                return float(v) if np.isfinite(v) else None
            if isinstance(v, np.integer):
                return int(v)
            return v

        cfg = asdict(self.config)
        return clean({
            "config": cfg,
            "learners": self.learner_names,
            "methods": self.method_names,
            "cities": self.cities,
            "rows": self.rows,
            "per_city": {
                str(t): {name: self.overarching[name][t] for name in BASELINES} for t in self.eval_times
            },
            "degenerate_fits": self.degenerate_fits,
        })

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=False)
            fh.write("\n")


def _ratio(pred, actual):
    return pred / actual if actual > 0 else float("nan")


def run_schedule(panel, learners, config: ScheduleConfig | None = None, truth=None) -> ForecastReport:
    """Run the staged one-step-ahead schedule on ``panel`` with the base ``learners``."""
    config = config or ScheduleConfig()
    errs = config.validate()
    if errs:
        raise ValueError("invalid schedule config: " + "; ".join(errs))
    learners = list(learners)
    if not learners:
        raise ValueError("need at least one base learner")
    lnames = [l.name for l in learners]
    if len(set(lnames)) != len(lnames):
        raise ValueError(f"base learner names must be unique: {lnames}")
    if len(panel) < config.minimal_length():
        raise ValueError(
            f"panel too short: stages {tuple(config.stages)} need at least {config.minimal_length()} slices, "
            f"got {len(panel)}"
        )
    reserved, w_base, w_meta = (int(s) for s in config.stages)
    A, B = panel.n_cities, panel.cost_bound
    r0 = panel.first + reserved
    meta_start = r0 + w_base + 1
    eval_start = r0 + w_base + w_meta
    variant = config.penalty_variant

    methods = build_methods(
        config.methods, lnames, A, inner_eps=config.inner_eps, inner_penalty=config.inner_penalty,
        variant=variant, stack_penalty=config.stack_penalty,
    )
    mnames = [m.name for m in methods]
    J = len(methods)
    base_ledger = RiskLedger(len(learners), A, start=r0 + 1, penalty=config.inner_penalty, variant=variant, names=lnames)
    meta_ledger = RiskLedger(J, A, start=meta_start, penalty=config.penalty, variant=variant, names=mnames)
    net_ledger = NetLedger(
        J, A, config.eps, start=meta_start, penalty=config.penalty, variant=variant,
        penalty_source=meta_ledger if variant == "literal" else None,
    )
    probe = OracleProbe(truth, J, start=meta_start, ledger=meta_ledger) if truth is not None else None

    report = ForecastReport(
        config=config, times=[int(t) for t in panel.times], cities=np.array(panel.cities), learner_names=lnames,
        method_names=mnames, net_weights=net_ledger.weights, base_ledger=base_ledger, meta_ledger=meta_ledger,
        net_ledger=net_ledger, probe=probe,
    )
    for name in BASELINES:
        report.overarching[name] = {}

    pool = ThreadPoolExecutor(max_workers=int(config.workers)) if config.workers > 1 else None
    fitted = None
    combos = None
    try:
        for t in range(r0, panel.last + 1):
            s = panel.slice(t)
            if fitted is not None:
                P = np.stack([f.predict(s.x, s.z, s.declared) for f in fitted])
                report.base_predictions[t] = P
                report.actual[t] = s.y
                report.declared[t] = s.declared
                if combos is not None:
                    M = np.stack([apply_combination(c, P, s.declared, B) for c in combos])
                    report.method_predictions[t] = M
                    if t >= eval_start:
                        _evaluate(report, t, s, P, M, meta_ledger, net_ledger, B)
                    meta_ledger.record(t, M, s.y)
                    net_ledger.record(t, M, s.y)
                    if probe is not None:
                        probe.record(t, M, s.x, s.z, s.declared)
                base_ledger.record(t, P, s.y)
                for m in methods:
                    m.observe(t, P, s.y, s.declared)
            history = panel.window(r0, t)
            if pool is not None:
                fitted = list(pool.map(lambda l: l.fit(history), learners))
            else:
                fitted = [l.fit(history) for l in learners]
            for f, l in zip(fitted, learners):
                if f.degenerate:
                    report.degenerate_fits.append({"time": t, "learner": l.name})
            if t >= r0 + w_base:
                combos = [m.combination() for m in methods]
    finally:
        if pool is not None:
            pool.shutdown()

    top = Select(meta_ledger.select()) if meta_ledger.n_updates else Select(0)
    report.forecaster = MetaPredictor(fitted, combos, top, B, schema=panel.schema)
    report.continuous_forecaster = MetaPredictor(fitted, combos, Weighted(net_ledger.select().pi.copy()), B, schema=panel.schema)
    return report


def _evaluate(report, t, s, P, M, meta_ledger, net_ledger, B):
    d = s.declared
    if meta_ledger.n_updates:
        j = meta_ledger.select()
        j_plain = meta_ledger.select(penalized=False)
        risks = meta_ledger.risk()
        crit = meta_ledger.criterion()
        crit_cont = float(net_ledger.criterion().min())
    else:
        j = j_plain = 0
        risks = np.full(len(M), np.nan)
        crit = np.full(len(M), np.nan)
        crit_cont = float("nan")
    pi = net_ledger.select()
    preds = {
        "discrete": M[j].copy(),
        "continuous": apply_combination(Weighted(pi.pi), M, d, B),
        "average": apply_combination(lambda X: X.mean(axis=0), P, d, B),
        "median": apply_combination(lambda X: np.sort(X, axis=0)[(len(X) - 1) // 2], P, d, B),
    }
    actual = float(s.y.sum())
    row = {
        "time": int(t),
        "selected": int(j),
        "selected_name": report.method_names[j],
        "selected_unpenalized": int(j_plain),
        "weights": pi.pi.copy(),
        "total_actual": actual,
        "risks": np.asarray(risks, dtype=float),
        "criterion": np.asarray(crit, dtype=float),
        "criterion_discrete": float(crit[j]) if meta_ledger.n_updates else float("nan"),
        "criterion_continuous": crit_cont,
        "n_declared": int(d.sum()),
    }
    for name, p in preds.items():
        report.overarching[name][t] = p
        row[f"total_{name}"] = float(p.sum())
        row[f"ratio_{name}"] = _ratio(float(p.sum()), actual)
    row["base_totals"] = P.sum(axis=1)
    report.rows.append(row)


def probe_summary(report: ForecastReport, eps: float = 0.1) -> pd.DataFrame:
    """Oracle quantities after every meta-level update (synthetic runs only)."""
    probe = report.probe
    if probe is None:
        raise ValueError("oracle probe requires synthetic truth")
    recs = []
    for t in range(1, probe.n_updates + 1):
        g = excess_gap(probe, t, eps)
        rec = {
            "year": probe.times[t - 1],
            "t": t,
            "selected": g.selected,
            "oracle": oracle_select(probe, t),
            "excess_selected": g.excess_selected,
            "excess_oracle": g.excess_oracle,
            "gap": g.gap,
            "noise_risk": probe.noise_risk(t),
        }
        for name, r in zip(report.method_names, true_risk(probe, t)):
            rec[f"true_risk_{name}"] = float(r)
        recs.append(rec)
    return pd.DataFrame(recs)

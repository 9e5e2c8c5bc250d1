import json

import numpy as np
import pytest

from osassl.learners import BoostedLinearLearner, ConstantPredictor, MeanLearner, RidgeLearner
from osassl.superlearner import ScheduleConfig, forecast_total, probe_summary, run_schedule

from conftest import toy_panel

ZOO = [MeanLearner(name="mean"), RidgeLearner(name="ridge"), BoostedLinearLearner(name="boost", rounds=10)]


def cfg(stages=(1, 1, 1), **kw):
    return ScheduleConfig(stages=stages, **kw)


def test_reference_schedule_has_twelve_evaluation_slices():
    # 28 yearly slices with stages (5, 5, 6) -> evaluation on the last 12
    report = run_schedule(toy_panel(T=28, A=6), ZOO[:2], ScheduleConfig())
    assert report.eval_times == list(range(17, 29))
    assert len(report.rows) == 12


def test_minimal_schedule_has_one_evaluation_slice():
    report = run_schedule(toy_panel(T=4, A=5), ZOO[:2], cfg())
    assert report.eval_times == [4]


@pytest.mark.parametrize("T,stages", [(6, (1, 2, 2)), (10, (0, 3, 3)), (12, (2, 2, 5))])
def test_evaluation_count(T, stages):
    report = run_schedule(toy_panel(T=T, A=5), ZOO[:2], cfg(stages))
    assert len(report.rows) == T - sum(stages)
    assert report.eval_times == sorted(report.eval_times)


def test_too_short_panel_names_minimal_length():
    with pytest.raises(ValueError, match="need at least 17 slices, got 16"):
        run_schedule(toy_panel(T=16, A=4), ZOO[:2], ScheduleConfig())


def test_config_validation():
    errs = ScheduleConfig(stages=(1, 0, 1), penalty=-1, eps=0, methods=("discrete",)).validate()
    assert len(errs) == 4
    with pytest.raises(ValueError, match="penalty"):
        run_schedule(toy_panel(), ZOO[:2], cfg(penalty=-1))
    with pytest.raises(ValueError, match="unique"):
        run_schedule(toy_panel(), [MeanLearner(name="m"), RidgeLearner(name="m")], cfg())


@pytest.mark.parametrize("seed", range(3))
def test_future_costs_do_not_leak(seed):
    base = toy_panel(T=9, A=10, seed=seed)
    t0 = 7
    y = np.array(base.y)
    i = t0 - base.first
    y[i] = np.where(base.declared[i], base.cost_bound, 0.0)
    poisoned = base.replace(y=y)
    c = cfg((1, 2, 2))
    r1, r2 = run_schedule(base, ZOO, c), run_schedule(poisoned, ZOO, c)
    for t in range(base.first, t0 + 1):
        if t in r1.base_predictions:
            np.testing.assert_array_equal(r1.base_predictions[t], r2.base_predictions[t])
        if t in r1.method_predictions:
            np.testing.assert_array_equal(r1.method_predictions[t], r2.method_predictions[t])
    for name in r1.overarching:
        for t in r1.eval_times:
            if t <= t0:
                np.testing.assert_array_equal(r1.overarching[name][t], r2.overarching[name][t])
    # the poisoned slice does change later forecasts
    assert any(not np.array_equal(r1.base_predictions[t], r2.base_predictions[t]) for t in range(t0 + 1, 10))


def test_undeclared_cities_are_predicted_zero():
    report = run_schedule(toy_panel(T=8, A=12, p_declared=0.5), ZOO, cfg((1, 2, 2)))
    for t in report.eval_times:
        d = report.declared[t]
        for name, preds in report.overarching.items():
            assert np.all(preds[t][~d] == 0)
            assert np.all((preds[t] >= 0) & (preds[t] <= 10.0))


def test_report_totals_are_sums():
    report = run_schedule(toy_panel(T=8, A=12), ZOO, cfg((1, 2, 2)))
    for row in report.rows:
        t = row["time"]
        assert row["total_actual"] == pytest.approx(report.actual[t].sum(), rel=1e-12)
        for name in ("discrete", "continuous", "average", "median"):
            assert row[f"total_{name}"] == pytest.approx(report.overarching[name][t].sum(), rel=1e-12)
        np.testing.assert_allclose(row["weights"].sum(), 1.0, atol=1e-12)
        assert row["criterion_continuous"] <= row["criterion_discrete"] + 1e-12


def test_schedule_is_deterministic_and_worker_independent():
    p = toy_panel(T=8, A=12)
    a = run_schedule(p, ZOO, cfg((1, 2, 2)))
    b = run_schedule(p, ZOO, cfg((1, 2, 2), workers=2))
    da, db = a.to_dict(), b.to_dict()
    assert da.pop("config")["workers"] == 1 and db.pop("config")["workers"] == 2
    assert json.dumps(da) == json.dumps(db)
    assert json.dumps(run_schedule(p, ZOO, cfg((1, 2, 2))).to_dict()) == json.dumps(a.to_dict())


def test_report_serialisation(tmp_path):
    report = run_schedule(toy_panel(T=8, A=12), ZOO, cfg((1, 2, 2)))
    report.to_csv(tmp_path / "r.csv")
    report.to_json(tmp_path / "r.json")
    frame = report.to_frame()
    assert list(frame["year"]) == report.eval_times
    data = json.loads((tmp_path / "r.json").read_text())
    assert len(data["rows"]) == len(report.rows)
    assert set(report.ratio_summary()["predictor"]) == {"discrete", "continuous", "average", "median"}


def test_forecast_total_examples(panel):
    s = panel.slice(panel.last)
    none = s.__class__(s.time, s.cities, s.x, s.z, np.zeros(len(s)), np.zeros(len(s), bool))
    assert forecast_total(ConstantPredictor(2.0, 10.0), none)[1] == 0.0
    one = np.zeros(len(s), bool)
    one[3] = True
    preds, total = forecast_total(ConstantPredictor(2.0, 10.0), s.__class__(s.time, s.cities, s.x, s.z, np.zeros(len(s)), one))
    assert total == 2.0 and preds[3] == 2.0


def test_forecast_total_sums_fifty_cities():
    p = toy_panel(T=6, A=50)
    report = run_schedule(p, ZOO[:2], cfg((1, 2, 2)))
    s = p.slice(p.last)
    preds, total = forecast_total(report.forecaster, s)
    assert total == pytest.approx(sum(preds[i] for i in range(50)), rel=1e-12)
    assert np.all(preds[~s.declared] == 0)


def test_forecast_total_rejects_schema_mismatch():
    p = toy_panel(T=6, A=6)
    report = run_schedule(p, ZOO[:2], cfg((1, 2, 2)))
    other = toy_panel(T=6, A=6, categorical=False).slice(1)
    with pytest.raises(ValueError, match="schema"):
        forecast_total(report.forecaster, other)


def test_probe_requires_truth():
    report = run_schedule(toy_panel(), ZOO[:2], cfg())
    with pytest.raises(ValueError, match="oracle probe requires synthetic truth"):
        probe_summary(report)


def test_probe_on_synthetic_panel(synthetic):
    panel, truth = synthetic
    report = run_schedule(panel, ZOO, cfg((1, 3, 3)), truth=truth)
    summary = probe_summary(report, eps=0.1)
    assert len(summary) == report.probe.n_updates == len(panel) - 1 - 3 - 1
    assert np.all(summary["excess_oracle"] <= summary["excess_selected"] + 1e-12)

import json
import shutil
import subprocess
import sys

import pandas as pd

from osassl.cli import OUTPUT_FILES, default_zoo, main, validate_config
from osassl.core import write_panel_csv
from osassl.synthgen import GeneratorSpec, generate, synthetic_feature_inputs

SMOKE = {
    "input": {"synthetic": {"n_cities": 50, "n_times": 12, "seed": 3}},
    "superlearner": {"stages": [1, 3, 3]},
    "importance": {"n_perm": 199, "seed": 1},
}


def write_config(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_smoke_run_writes_parseable_files(tmp_path, capsys):
    cfg = write_config(tmp_path, SMOKE)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    for name in OUTPUT_FILES:
        path = tmp_path / "out" / name
        assert path.is_file(), name
        if name.endswith(".csv"):
            assert len(pd.read_csv(path)) > 0, name
        else:
            assert len(json.loads(path.read_text())["rows"]) == 12 - 7
    assert len(capsys.readouterr().out.splitlines()) == len(OUTPUT_FILES)


def test_runs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, SMOKE)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--workers", "2"])
    for name in OUTPUT_FILES:
        a, b = (tmp_path / d / name for d in "ab")
        if name == "forecast.json":
            da, db = json.loads(a.read_text()), json.loads(b.read_text())
            da["config"].pop("workers"), db["config"].pop("workers")
            assert da == db
        else:
            assert a.read_bytes() == b.read_bytes(), name


def test_missing_schema_names_the_path(tmp_path, capsys):
    panel, _ = generate(GeneratorSpec(n_cities=10, n_times=8))
    write_panel_csv(panel, tmp_path / "panel.csv")
    cfg = write_config(tmp_path, {"input": {"panel": "panel.csv", "schema": "nowhere/schema.json"}})
    assert main(["run", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1
    assert err.startswith("error [stage=config]") and str(tmp_path / "nowhere" / "schema.json") in err


def test_entry_point_exit_status(tmp_path):
    exe = shutil.which("osassl")
    cmd = [exe] if exe else [sys.executable, "-m", "osassl.cli"]
    bad = write_config(tmp_path, {"input": {"synthetic": {"n_cities": -1}}})
    proc = subprocess.run(cmd + ["validate", "--config", str(bad)], capture_output=True, text=True)
    assert proc.returncode == 1 and "input.synthetic.n_cities" in proc.stdout


def test_validate_examples(tmp_path, capsys):
    ok = write_config(tmp_path, SMOKE, "ok.json")
    assert main(["validate", "--config", str(ok)]) == 0
    assert capsys.readouterr().out == ""

    one = write_config(tmp_path, {**SMOKE, "superlearner": {"stages": [1, 3, 3], "penalty": -1}}, "one.json")
    assert main(["validate", "--config", str(one)]) == 1
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["superlearner.penalty: must be >= 0, got -1"]

    two = {**SMOKE, "superlearner": {"stages": [1, 3, 3], "penalty": -1}, "importance": {"n_perm": 0}}
    assert main(["validate", "--config", str(write_config(tmp_path, two, "two.json"))]) == 1
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2 and lines[0].startswith("superlearner.penalty") and lines[1].startswith("importance.n_perm")


def test_validate_unreadable_file(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "missing.json")]) == 1
    assert "cannot read config" in capsys.readouterr().err
    (tmp_path / "bad.json").write_text("{")
    assert main(["validate", "--config", str(tmp_path / "bad.json")]) == 1
    assert "not valid JSON" in capsys.readouterr().err


def test_validate_catches_short_panel_and_oracle_without_truth(tmp_path):
    cfg = {"input": {"synthetic": {"n_times": 10}}}
    assert validate_config(cfg) == ["input.synthetic.n_times: stages (5, 5, 6) need at least 17 slices"]
    panel, _ = generate(GeneratorSpec(n_cities=5, n_times=8))
    write_panel_csv(panel, tmp_path / "p.csv")
    panel.schema.save(tmp_path / "s.json")
    errs = validate_config({"input": {"panel": "p.csv", "schema": "s.json"}, "output": {"files": ["oracle.csv"]}}, tmp_path)
    assert errs == ["output.files: oracle.csv requires synthetic input"]


def test_schedule_error_names_stage(tmp_path, capsys):
    panel, _ = generate(GeneratorSpec(n_cities=5, n_times=8))
    write_panel_csv(panel, tmp_path / "p.csv")
    panel.schema.save(tmp_path / "s.json")
    cfg = write_config(tmp_path, {"input": {"panel": "p.csv", "schema": "s.json"}})
    assert main(["run", "--config", str(cfg)]) == 1
    assert capsys.readouterr().err.startswith("error [stage=schedule]: panel too short")


def test_csv_input_with_features(tmp_path):
    years = list(range(2001, 2013))
    panel, _ = generate(GeneratorSpec(n_cities=6, n_times=len(years), n_swi=2, seed=2))
    panel = panel.__class__(panel.schema, panel.cities, years, panel.x, panel.z, panel.y, panel.declared,
                            cost_bound=panel.cost_bound)
    grid, overlap, houses = synthetic_feature_inputs(n_cities=6, years=range(1995, 2013), houses_per_city=5)
    write_panel_csv(panel, tmp_path / "p.csv")
    panel.schema.save(tmp_path / "s.json")
    for name, frame in (("grid", grid), ("overlap", overlap), ("houses", houses)):
        frame.to_csv(tmp_path / f"{name}.csv", index=False)
    cfg = {
        "input": {"panel": "p.csv", "schema": "s.json",
                  "features": {"grid": "grid.csv", "overlap": "overlap.csv", "houses": "houses.csv",
                               "cdf_window": [1995, 2000], "n_quantiles": 3}},
        "superlearner": {"stages": [1, 3, 3]},
        "importance": {"n_perm": 49},
    }
    path = write_config(tmp_path, cfg)
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
    groups = pd.read_csv(tmp_path / "out" / "importance_groups.csv")
    assert {"swi_current", "swi_cdf", "swi_history", "compound_swi"} <= set(groups["group"])
    assert not (tmp_path / "out" / "oracle.csv").exists()


def test_gen_command(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_cities": 9, "n_times": 4, "seed": 5}))
    assert main(["gen", "--spec", str(spec), "--out", str(tmp_path / "g")]) == 0
    frame = pd.read_csv(tmp_path / "g" / "panel.csv")
    assert len(frame) == 36
    spec.write_text(json.dumps({"n_cities": 9, "colour": "red"}))
    assert main(["gen", "--spec", str(spec), "--out", str(tmp_path / "h")]) == 1
    assert "stage=generate" in capsys.readouterr().err


def test_default_zoo_names():
    panel, _ = generate(GeneratorSpec(n_cities=5, n_times=2))
    assert [l.name for l in default_zoo(panel.schema)] == ["mean", "ridge", "boosted", "ridge_x", "ks_knn"]

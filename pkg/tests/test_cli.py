import json
import shutil
import xml.etree.ElementTree as ET
from importlib import resources
from pathlib import Path

import pytest

import apte
from apte.cli import main
from apte.config import RunConfig
from apte.estimator import ApteReport
from apte.pipeline import ARTIFACTS, analyze, write_atomic

BUNDLED = str(resources.files("apte").joinpath("data/simulated_daily.csv"))
PUBLISHED = str(resources.files("apte").joinpath("data/published_table.csv"))
FAST = ["--trees", "60", "--lags-y", "3", "--lags-x", "3", "--top-k", "3"]


def _analyze(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["analyze", "--input", BUNDLED, "--out-dir", str(out), *FAST, *extra])
    assert code == 0
    return out


def test_analyze_writes_every_artifact(tmp_path, capsys):
    out = _analyze(tmp_path, "a")
    assert sorted(p.name for p in out.iterdir()) == sorted(ARTIFACTS)
    assert capsys.readouterr().out.startswith("week,E1,E0,APTE")
    doc = json.loads((out / "report.json").read_text())
    assert doc["config"]["n_trees"] == 60
    assert len(doc["config"]["input_sha256"]) == 64
    assert "stage" not in (out / "run.log").read_text()
    for svg in ("apte.svg", "pancit.svg", "timeseries.svg"):
        ET.fromstring((out / svg).read_bytes())


def test_analyze_deterministic_across_runs_threads_and_dirs(tmp_path):
    a = _analyze(tmp_path, "a")
    b = _analyze(tmp_path, "b", "--threads", "3")
    for name in ARTIFACTS:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_seed_changes_forest(tmp_path):
    a = _analyze(tmp_path, "a")
    b = _analyze(tmp_path, "b", "--seed", "1")
    assert (a / "forest.json").read_bytes() != (b / "forest.json").read_bytes()


def test_rerun_from_embedded_fingerprint(tmp_path):
    out = _analyze(tmp_path, "a")
    fp = json.loads((out / "report.json").read_text())["config"]
    fp.pop("input_sha256")
    fp["quantiles"] = tuple(fp["quantiles"])
    again = analyze(RunConfig(**fp))
    assert again.report.to_json() == (out / "report.json").read_text()


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RunConfig(input=BUNDLED, n_trees=60, lags_y=3, lags_x=3, top_k=3, seed=5).to_text())
    out = tmp_path / "o"
    assert main(["analyze", "--config", str(cfg), "--seed", "0", "--out-dir", str(out), "--write-config"]) == 0
    written = RunConfig.from_text((out / "run.cfg").read_text())
    assert written.seed == 0 and written.n_trees == 60
    ref = _analyze(tmp_path, "ref")
    assert (out / "report.json").read_bytes() == (ref / "report.json").read_bytes()


def test_analyzer_never_reads_truth(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--scenario", "additive-effect", "--periods", "40", "--seed", "3", "--out-dir", str(sim)]) == 0
    assert sorted(p.name for p in sim.iterdir()) == ["daily.csv", "periods.csv", "truth.json", "weekly.csv"]
    with_truth = _run_on(sim / "daily.csv", tmp_path / "o1")
    (sim / "truth.json").unlink()
    without = _run_on(sim / "daily.csv", tmp_path / "o2")
    assert with_truth == without
    src = Path(apte.__file__).parent
    for module in ("pipeline.py", "series.py", "design.py", "estimator.py", "forest.py", "config.py"):
        assert "truth" not in (src / module).read_text(), module


def _run_on(path, out):
    assert main(["analyze", "--input", str(path), "--out-dir", str(out), *FAST]) == 0
    return (out / "report.json").read_bytes()


def test_missing_input_names_path(tmp_path, capsys):
    code = main(["analyze", "--input", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "nope.csv" in err and "ingest" in err
    assert not (tmp_path / "o").exists()


def test_malformed_input_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,weight,activity\n2020-01-06,heavy,1\n")
    assert main(["analyze", "--input", str(bad), "--out-dir", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_single_exposure_level_is_estimation_error(tmp_path, capsys):
    shutil.copy(BUNDLED, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    flat = [lines[0]] + [",".join(l.split(",")[:2] + ["0" if l.split(",")[1] else ""]) for l in lines[1:]]
    (tmp_path / "d.csv").write_text("\n".join(flat) + "\n")
    code = main(["analyze", "--input", str(tmp_path / "d.csv"), "--out-dir", str(tmp_path / "o"), *FAST])
    assert code == 3
    assert "threshold" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [[], ["analyze"], ["bogus"], ["analyze", "--input", "x", "--lags-y", "two"], ["simulate", "--scenario", "nope"]],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == 1


def test_write_atomic_cleans_up_on_failure(tmp_path):
    (tmp_path / "blocker").mkdir()
    with pytest.raises(OSError):
        write_atomic(tmp_path, {"a.txt": b"1", "blocker": b"2"})
    assert not (tmp_path / "a.txt").exists()
    assert [p.name for p in tmp_path.iterdir()] == ["blocker"]


def test_changepoint_command(tmp_path, capsys):
    f = tmp_path / "s.csv"
    f.write_text("v\n" + "\n".join(str(v) for v in [0, 0.1, -0.1, 0, 5, 5.1, 4.9, 5, 5.05, 0.05]) + "\n")
    assert main(["changepoint", "--input", str(f), "--column", "v", "--penalty", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    # the trailing single point cannot form a segment of its own
    assert doc["changepoints"] == [4, 10]
    assert main(["changepoint", "--input", str(f), "--column", "w"]) == 2


def test_stationarity_command(tmp_path, capsys):
    import numpy as np

    f = tmp_path / "s.csv"
    f.write_text("v\n" + "\n".join(repr(float(v)) for v in np.random.default_rng(0).normal(size=100)) + "\n")
    assert main(["stationarity", "--input", str(f), "--column", "v"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["adf"]["test"] == "ADF" and doc["kpss"]["test"] == "KPSS"


def test_report_command_rerenders_published_table(tmp_path):
    assert main(["report", "--input", PUBLISHED, "--out-dir", str(tmp_path)]) == 0
    root = ET.fromstring((tmp_path / "apte.svg").read_bytes())
    (line,) = [el for el in root.iter() if el.get("data-series") == "apte"]
    fixture = ApteReport.from_csv(Path(PUBLISHED).read_text())
    assert [float(v) for v in line.get("data-values").split()] == [fixture.row(j).apte for j in range(1, 13)]
    assert not (tmp_path / "timeseries.svg").exists()


def test_report_command_from_json_matches_analyze(tmp_path):
    out = _analyze(tmp_path, "a")
    re_dir = tmp_path / "re"
    assert main(["report", "--input", str(out / "report.json"), "--out-dir", str(re_dir)]) == 0
    for name in ("apte.svg", "pancit.svg", "timeseries.svg"):
        assert (re_dir / name).read_bytes() == (out / name).read_bytes()

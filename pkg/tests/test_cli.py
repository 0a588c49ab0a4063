import csv
import json
import shutil
from pathlib import Path

import pytest

from timebin.cli import EXIT_ANALYSIS, EXIT_CONFIG, main
from timebin.tagio import read_stats, read_tags

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    for f in GOLDEN.glob("*.ini"):
        shutil.copy(f, tmp_path)
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def short_run(workdir):
    assert main(["run", "--duration", "0.002", "--out-dir", "short"]) == 0
    return workdir / "short" / "tags.ttag"


def _golden(name):
    return (GOLDEN / f"{name}.stderr").read_text()


@pytest.mark.parametrize("argv,name,code", [
    (["run", "--config", "missing.ini"], "missing_config", EXIT_CONFIG),
    (["run", "--config", "negative_loss.ini"], "negative_loss", EXIT_CONFIG),
    (["run", "--config", "unknown_key.ini"], "unknown_key", EXIT_CONFIG),
    (["run", "--config", "hot.ini"], "hot", EXIT_CONFIG),
    (["run", "--duration=-1"], "negative_duration", EXIT_CONFIG),
    (["fringe", "--points", "3"], "few_points", EXIT_CONFIG),
])
def test_config_errors_golden(workdir, capsys, argv, name, code):
    for _ in range(2):  # stable across runs
        assert main(argv) == code
        assert capsys.readouterr().err == _golden(name)


@pytest.mark.parametrize("argv,name", [
    (["zvis", "--tags", "short/tags.ttag"], "zvis_insufficient"),
    (["histogram", "--tags", "short/tags.ttag", "--a", "0", "--b", "12"], "empty_channel"),
])
def test_analysis_errors_golden(short_run, capsys, argv, name):
    capsys.readouterr()
    assert main(argv) == EXIT_ANALYSIS
    assert capsys.readouterr().err == _golden(name)
    assert not Path("run_manifest.json").exists()


def test_usage_errors_exit_2(workdir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["histogram"])
    assert exc.value.code == EXIT_CONFIG
    last = capsys.readouterr().err.strip().splitlines()[-1]
    assert last == "timebin: error: the following arguments are required: --tags"
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == EXIT_CONFIG


def test_run_is_deterministic(workdir):
    for d in ("a", "b"):
        assert main(["run", "--seed", "42", "--duration", "0.01", "--out-dir", d]) == 0
    assert (workdir / "a/tags.ttag").read_bytes() == (workdir / "b/tags.ttag").read_bytes()
    assert (workdir / "a/run_summary.txt").read_text() == (workdir / "b/run_summary.txt").read_text()


def test_manifest_lists_outputs_and_is_last(workdir):
    assert main(["run", "--duration", "0.01", "--out-dir", "m", "--format", "jsonl"]) == 0
    man = json.loads((workdir / "m/run_manifest.json").read_text())
    assert set(man) == {"configPath", "seed", "outputs", "toolVersion", "startedAt"}
    assert man["seed"] == 0 and man["configPath"] == "preset:paper-25C"
    mtime = (workdir / "m/run_manifest.json").stat().st_mtime_ns
    for p in man["outputs"]:
        assert Path(p).exists() and Path(p).stat().st_mtime_ns <= mtime
    assert len(read_tags(workdir / "m/tags.jsonl")) > 0


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_run_csv_and_jsonl_reingest(workdir, fmt):
    assert main(["run", "--duration", "0.01", "--out-dir", fmt, "--format", fmt]) == 0
    a = read_tags(workdir / fmt / f"tags.{fmt}")
    assert main(["run", "--duration", "0.01", "--out-dir", "bin"]) == 0
    b = read_tags(workdir / "bin/tags.ttag")
    assert (a.channel == b.channel).all() and (a.time == b.time).all()


def test_direct_histogram_pipeline(workdir):
    assert main(["run", "--mode", "direct", "--duration", "2", "--out-dir", "d"]) == 0
    assert main(["histogram", "--tags", "d/tags.ttag", "--out-dir", "d"]) == 0
    stats = read_stats(workdir / "d/histogram_stats.txt")
    assert float(stats["car"]) > 50
    with open(workdir / "d/histogram.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["bin_start_ps", "bin_end_ps", "counts"]
    assert sum(int(r["counts"]) for r in rows) > 0
    assert main(["histogram", "--tags", "d/tags.ttag", "--out-dir", "dj", "--format", "jsonl"]) == 0
    lines = (workdir / "dj/histogram.jsonl").read_text().splitlines()
    assert [json.loads(x)["counts"] for x in lines] == [int(r["counts"]) for r in rows]


def test_spectrum(workdir):
    assert main(["spectrum", "--preset", "paper-10C", "--out-dir", "s"]) == 0
    stats = read_stats(workdir / "s/spectrum_stats.txt")
    assert abs(float(stats["pump_resonance_nm"]) - 1550.59) < 0.02
    assert stats["filters_on_comb"] == "true"
    with open(workdir / "s/spectrum.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert max(float(r["transmission"]) for r in rows) > 0.9


def test_zvis_subcommand(workdir):
    assert main(["run", "--duration", "200", "--out-dir", "z"]) == 0
    assert main(["zvis", "--tags", "z/tags.ttag", "--out-dir", "z"]) == 0
    stats = read_stats(workdir / "z/zvis_stats.txt")
    assert float(stats["z_visibility"]) > 0.9


def test_fringe_then_bell(workdir):
    argv = ["fringe", "--preset", "paper-25C", "--points", "12", "--reps", "3", "--out-dir", "f"]
    assert main(argv) == 0
    with open(workdir / "f/fringe.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    assert main(["bell", "f/fringe.csv", "--out-dir", "f"]) == 0
    stats = read_stats(workdir / "f/bell_stats.txt")
    assert stats["x0x0_s_above_2p6"] == "true"
    assert stats["x0x0_violates_bell"] == "true"


def test_bell_from_visibility(workdir):
    assert main(["bell", "--visibility", "0.9322", "--visibility-err", "0.0115", "--out-dir", "b"]) == 0
    stats = read_stats(workdir / "b/bell_stats.txt")
    assert abs(float(stats["input_s_value"]) - 2.6366) < 5e-4
    assert main(["bell", "--visibility", "1.3", "--out-dir", "b"]) == EXIT_ANALYSIS
    assert main(["bell", "--out-dir", "b"]) == EXIT_CONFIG

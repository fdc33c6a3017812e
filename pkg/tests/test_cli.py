import json

import pytest

from hallufault.cli import EXIT_OK, EXIT_USAGE, main
from hallufault.experiments import BatchParams, condition_matrix


def write_hi(path, **kw):
    data = {"module_activation": "ON", "type": "Missed", "configuration": "Car1", "probability": 0.5,
            "persistence": "Permanent"}
    data.update(kw)
    path.write_text(json.dumps(data))
    return str(path)


def test_run_writes_log_and_sidecar(tmp_path, capsys):
    hi = write_hi(tmp_path / "hi.json")
    assert main(["run", "--hi", hi, "--seed", "7", "--out", str(tmp_path / "out" / "r7")]) == EXIT_OK
    side = json.loads((tmp_path / "out" / "r7.json").read_text())
    assert side["outcome"] in ("Crossed", "Collision", "Halted")
    assert (tmp_path / "out" / "r7.csv").read_text().startswith("time_ms,")
    assert "min_distance=" in capsys.readouterr().out


def test_run_repeat_is_byte_identical(tmp_path):
    hi = write_hi(tmp_path / "hi.json", type="Latency", configuration="Lat40")
    for name in ("a", "b"):
        assert main(["run", "--hi", hi, "--seed", "0x2a", "--out", str(tmp_path / name)]) == EXIT_OK
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_malformed_hi_names_the_key(tmp_path, capsys):
    hi = write_hi(tmp_path / "hi.json", probabilty=0.3)
    assert main(["run", "--hi", hi, "--seed", "1", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert "probabilty" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


def test_bad_probability(tmp_path, capsys):
    hi = write_hi(tmp_path / "hi.json", probability=1.5)
    assert main(["run", "--hi", hi, "--seed", "1", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert "probability" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["run", "--hi", "nope.json", "--seed", "1", "--out", "x"],
    ["consolidate", "--logs", "no_such_dir"],
    ["analyze", "--dataset", "missing.csv", "--out", "o"],
    ["run", "--seed", "1", "--out", "x"],
    ["batch", "--out", "o", "--jobs", "0"],
])
def test_missing_inputs_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as info:
        raise SystemExit(main(argv))
    assert info.value.code == EXIT_USAGE


def test_bad_env_seed(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HALLUFAULT_BASE_SEED", "twelve")
    hi = write_hi(tmp_path / "hi.json")
    assert main(["run", "--hi", hi, "--seed", "1", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert "HALLUFAULT_BASE_SEED" in capsys.readouterr().err


def _small_params(tmp_path):
    m = condition_matrix()
    # one condition of every type keeps every hypothesis testable
    pick = [m[0]] + [next(c for c in m[1:] if c.hi.type.value == t)
                     for t in ("LinDrift", "Phant", "Missed", "AngDrift", "Blind", "Latency")]
    pick += [m[150], m[199]]
    p = tmp_path / "params.json"
    p.write_text(BatchParams(runs_per_condition=6, baseline_runs=12, base_seed=31).to_json(pick))
    return str(p)


def test_jobs_do_not_change_the_dataset(tmp_path):
    params = _small_params(tmp_path)
    for jobs in ("1", "3"):
        out = tmp_path / f"j{jobs}"
        assert main(["batch", "--params", params, "--out", str(out), "--jobs", jobs]) == EXIT_OK
        assert main(["consolidate", "--logs", str(out / "logs"), "--out", str(out / "dataset.csv")]) == EXIT_OK
    assert (tmp_path / "j1" / "dataset.csv").read_bytes() == (tmp_path / "j3" / "dataset.csv").read_bytes()
    logs1 = sorted((tmp_path / "j1" / "logs").iterdir())
    assert [p.read_bytes() for p in logs1] == [(tmp_path / "j3" / "logs" / p.name).read_bytes() for p in logs1]


def test_pipeline_through_report(tmp_path, capsys):
    params = _small_params(tmp_path)
    assert main(["batch", "--params", params, "--out", str(tmp_path / "b")]) == EXIT_OK
    assert main(["consolidate", "--logs", str(tmp_path / "b" / "logs"), "--out", str(tmp_path / "d.csv")]) == EXIT_OK
    capsys.readouterr()
    assert main(["analyze", "--dataset", str(tmp_path / "d.csv"), "--out", str(tmp_path / "an")]) == EXIT_OK
    assert (tmp_path / "an" / "tables.md").exists()
    assert main(["report", "--dataset", str(tmp_path / "d.csv"), "--out", str(tmp_path / "rep")]) == EXIT_OK
    out = capsys.readouterr().out
    for hid in ("H1", "H2", "H3", "H4", "H5", "H6"):
        assert f"\n{hid} " in "\n" + out
    assert list((tmp_path / "rep").glob("*.png"))
    assert list((tmp_path / "rep").glob("*.csv"))


def test_report_without_figures(tmp_path):
    params = _small_params(tmp_path)
    main(["batch", "--params", params, "--out", str(tmp_path / "b"), "--runs", "2", "--baseline-runs", "4"])
    main(["consolidate", "--logs", str(tmp_path / "b" / "logs"), "--out", str(tmp_path / "d.csv")])
    assert main(["report", "--dataset", str(tmp_path / "d.csv"), "--out", str(tmp_path / "rep"),
                 "--no-figures"]) == EXIT_OK
    assert not list((tmp_path / "rep").glob("*.png"))

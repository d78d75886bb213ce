import csv
import json

import pytest

from fairalloc.cli import EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_OK, EXIT_USAGE, main


def _synth(tmp_path, kind, params=None, seed=0):
    out = tmp_path / kind
    argv = ["synth", "--kind", kind, "--seed", str(seed), "--out", str(out)]
    if params:
        argv += ["--params", json.dumps(params)]
    assert main(argv) == EXIT_OK
    return out


def _inputs(d):
    return ["--units", str(d / "units.csv"), "--model", str(d / "model.json"),
            "--config", str(d / "config.json")]


def test_solve_housing(tmp_path):
    d = _synth(tmp_path, "housing")
    out = tmp_path / "sol.json"
    assert main(["solve", *_inputs(d), "--out", str(out)]) == EXIT_OK
    sol = json.loads(out.read_text())
    assert sol["z"] == ["2"] and sol["objective"] == pytest.approx(290.0)


def test_solve_housing_interference_with_tau(tmp_path):
    d = _synth(tmp_path, "housing_interference")
    out = tmp_path / "sol.json"
    assert main(["solve", *_inputs(d), "--tau", "10", "--out", str(out)]) == EXIT_OK
    sol = json.loads(out.read_text())
    assert sol["z"] == ["1"] and sol["tau"] == 10.0


def test_infeasible_exit_code(tmp_path):
    d = _synth(tmp_path, "additive_infeasible")
    out = tmp_path / "sol.json"
    assert main(["solve", *_inputs(d), "--tau", "0.5", "--out", str(out)]) == EXIT_INFEASIBLE
    assert json.loads(out.read_text())["status"] == "Infeasible"
    assert main(["oracle", *_inputs(d), "--tau", "0.5", "--out", str(out)]) == EXIT_INFEASIBLE


def test_limit_exit_code(tmp_path):
    d = _synth(tmp_path, "random", {"n": 12, "k": 3, "budget": 4, "model": "max"}, seed=5)
    cfg = json.loads((d / "config.json").read_text())
    cfg["solver"] = {"node_limit": 1, "rounding": False}
    (d / "config.json").write_text(json.dumps(cfg))
    code = main(["solve", *_inputs(d), "--out", str(tmp_path / "s.json")])
    status = json.loads((tmp_path / "s.json").read_text())["status"]
    assert (code, status) == (EXIT_LIMIT, "LimitReached")


@pytest.mark.parametrize("seed", range(4))
def test_oracle_and_solve_agree(tmp_path, seed):
    d = _synth(tmp_path, "random", None, seed=seed)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    ca = main(["solve", *_inputs(d), "--tau", "0.8", "--out", str(a)])
    cb = main(["oracle", *_inputs(d), "--tau", "0.8", "--out", str(b)])
    assert ca == cb
    ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
    assert ja["status"] == jb["status"] and ja["z"] == jb["z"]
    if ja["objective"] is not None:
        assert ja["objective"] == pytest.approx(jb["objective"], abs=1e-9)


def test_export_and_node_log(tmp_path):
    d = _synth(tmp_path, "housing_interference")
    lp, log = tmp_path / "p.txt", tmp_path / "nodes.log"
    argv = ["solve", *_inputs(d), "--tau", "10", "--out", str(tmp_path / "s.json"),
            "--export-milp", str(lp), "--node-log", str(log)]
    assert main(argv) == EXIT_OK
    text = lp.read_text()
    assert text.startswith("MAXIMIZE\n") and text.endswith("END\n")
    lines = log.read_text().splitlines()
    assert lines and all(len(line.split()) == 5 for line in lines)


def test_path_command(tmp_path):
    d = _synth(tmp_path, "additive_infeasible")
    out = tmp_path / "path"
    assert main(["path", *_inputs(d), "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out / "path.csv", encoding="utf-8")))
    assert [r["status"] for r in rows] == ["Infeasible"] * 3 + ["Optimal"] * 2
    assert rows[3]["objective"] == rows[4]["objective"] == "3.0"
    assert rows[0]["treated_b"] == ""
    assert len(list(out.glob("point_*.json"))) == 5
    out2 = tmp_path / "path2"
    assert main(["path", *_inputs(d), "--taus", "0.5,inf", "--out", str(out2)]) == EXIT_OK
    rows = list(csv.DictReader(open(out2 / "path.csv", encoding="utf-8")))
    assert [r["tau"] for r in rows] == ["0.5", "inf"]
    out3 = tmp_path / "path3"
    assert main(["path", *_inputs(d), "--grid", "3", "--out", str(out3)]) == EXIT_OK
    assert len(list(csv.DictReader(open(out3 / "path.csv", encoding="utf-8")))) == 4


def test_path_rejects_unsorted(tmp_path, capsys):
    d = _synth(tmp_path, "housing")
    assert main(["path", *_inputs(d), "--taus", "2,1", "--out", str(tmp_path / "p")]) == EXIT_USAGE
    assert "increasing" in capsys.readouterr().err


def test_fit_command(tmp_path):
    d = _synth(tmp_path, "nyc_like", {"n": 150, "noise": 0.0})
    out = tmp_path / "fit.json"
    assert main(["fit", "--units", str(d / "units.csv"), "--config", str(d / "config.json"),
                 "--out", str(out)]) == EXIT_OK
    fit = json.loads(out.read_text())
    truth = json.loads((d / "model.json").read_text())["params"]
    for label, params in truth.items():
        for name, v in params.items():
            assert fit["params"][label][name] == pytest.approx(v, abs=1e-8)
    assert set(fit) >= {"residual_variance", "n_per_group", "standard_errors"}


def test_summarize_command(tmp_path):
    d = _synth(tmp_path, "housing")
    sol, out = tmp_path / "s.json", tmp_path / "sum.json"
    main(["solve", *_inputs(d), "--out", str(sol)])
    assert main(["summarize", *_inputs(d), "--solution", str(sol), "--out", str(out)]) == EXIT_OK
    summary = json.loads(out.read_text())
    assert summary["treated_counts"] == {"b": 0, "w": 1}
    assert summary["objective"] == pytest.approx(290.0) and summary["feasible"]


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == EXIT_USAGE
    d = _synth(tmp_path, "housing")
    bad = ["solve", *_inputs(d), "--tau", "-2", "--out", str(tmp_path / "x.json")]
    assert main(bad) == EXIT_USAGE
    missing = ["solve", "--units", str(tmp_path / "nope.csv"), "--model", str(d / "model.json"),
               "--out", str(tmp_path / "x.json")]
    assert main(missing) == EXIT_USAGE
    assert main(["synth", "--kind", "housing", "--params", "[1]", "--out", str(tmp_path)]) == EXIT_USAGE
    (d / "units.csv").write_text("id,group\n1,a\n")
    assert main(["solve", *_inputs(d), "--out", str(tmp_path / "x.json")]) == EXIT_USAGE
    assert "missing required column" in capsys.readouterr().err


@pytest.mark.parametrize("kind", ["housing", "additive_infeasible", "random", "nyc_like"])
def test_synth_rejects_unknown_params(tmp_path, kind, capsys):
    argv = ["synth", "--kind", kind, "--params", '{"bogus": 1}', "--out", str(tmp_path)]
    assert main(argv) == EXIT_USAGE
    assert "bogus" in capsys.readouterr().err

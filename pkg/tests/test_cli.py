import json
import os

import pytest
import yaml

from schrolab import cli
from schrolab.potential import radial_power

SMALL = {
    "name": "small",
    "seed": 5,
    "potential": {"kind": "harmonic", "d": 2},
    "solver": {"n_axis": 40},
    "window": {"a": 1.0, "b": 1.5, "hs": [0.125, 0.0625]},
    "ensemble": {"M": 30},
    "experiments": [
        {"id": "levels", "kind": "spectrum", "count": 20, "reference": "harmonic"},
        {"id": "sob", "kind": "sobolev-scan", "spread_tol": 100, "outside_tol": 1},
        {"id": "moyal", "kind": "moyal-check", "n_axis": 6},
    ],
}


def write_config(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def run(tmp_path, cfg, *extra, out="out", command="run"):
    path = write_config(tmp_path, cfg)
    code = cli.main([command, path, "--output", str(tmp_path / out), *extra])
    return code, tmp_path / out


def data_files(folder):
    return {p.name: p.read_bytes() for p in sorted(folder.iterdir()) if p.name != "timing.json"}


def test_small_run_succeeds_and_writes_artifacts(tmp_path):
    code, out = run(tmp_path, SMALL)
    assert code == 0
    names = {p.name for p in out.iterdir()}
    for stem in ("levels", "sob", "moyal"):
        assert {f"{stem}.json", f"{stem}.csv", f"{stem}.svg"} <= names
    assert {"report.json", "timing.json", "config.yaml"} <= names
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True
    assert [e["id"] for e in report["experiments"]] == ["levels", "sob", "moyal"]
    assert "wall" not in (out / "report.json").read_text()


def test_identical_configs_give_identical_artifacts(tmp_path):
    _, a = run(tmp_path, SMALL, out="a")
    _, b = run(tmp_path, SMALL, out="b")
    assert data_files(a) == data_files(b)


def test_seed_override_changes_only_sampled_rows(tmp_path):
    _, a = run(tmp_path, SMALL, "--seed", "1", out="a")
    _, b = run(tmp_path, SMALL, "--seed", "2", out="b")
    assert (a / "levels.json").read_bytes() == (b / "levels.json").read_bytes()
    assert (a / "moyal.json").read_bytes() == (b / "moyal.json").read_bytes()
    assert (a / "sob.json").read_bytes() != (b / "sob.json").read_bytes()


def test_failing_criterion_exits_one(tmp_path):
    cfg = dict(SMALL, experiments=[{"kind": "spectrum", "count": 100000}])
    code, out = run(tmp_path, cfg)
    assert code == 1
    assert json.loads((out / "report.json").read_text())["passed"] is False


@pytest.mark.parametrize(
    "mutate",
    [
        lambda c: c.update(bogus=1),
        lambda c: c["experiments"][0].update(bogus=1),
        lambda c: c["experiments"][0].update(kind="nope"),
        lambda c: c["experiments"][0].update(thetas=[0.0]),        # not a spectrum key
        lambda c: c.update(window={"a": 1.0, "b": 1.01, "D": 1.0, "hs": [0.5]}),
        lambda c: c.update(potential={"kind": "polynomial", "d": 1, "monomials": [{"alpha": [3], "c": 1}]}),
        lambda c: c.update(solver={"n_axis": 400}, potential={"kind": "radial", "d": 2, "k": 2}),
        lambda c: c.update(ensemble={"family": "cauchy"}),
        lambda c: c.update(experiments=[{"kind": "que", "potential": {"kind": "radial", "d": 2, "k": 2}}]),
    ],
)
def test_config_errors_exit_two_without_output(tmp_path, mutate):
    cfg = json.loads(json.dumps(SMALL))
    mutate(cfg)
    code, out = run(tmp_path, cfg)
    assert code == 2
    assert not out.exists()


def test_yaml_syntax_error_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("experiments: [\n")
    assert cli.main(["run", str(path), "--output", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_config_exits_two(tmp_path):
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 2


def test_compute_error_exits_three_and_keeps_earlier_artifacts(tmp_path):
    cfg = dict(SMALL, experiments=[
        {"id": "first", "kind": "spectrum", "count": 10},
        {"id": "second", "kind": "sobolev-scan", "window": {"hs": [0.0001]}},
    ])
    code, out = run(tmp_path, cfg)
    assert code == 3
    assert (out / "first.json").exists()
    report = json.loads((out / "report.json").read_text())
    assert "error" in report["experiments"][1]


def test_dry_run_prints_plan_and_writes_nothing(tmp_path, capsys):
    code, out = run(tmp_path, SMALL, "--dry-run")
    assert code == 0
    assert not out.exists()
    text = capsys.readouterr().out
    assert "spectrum" in text and "sobolev-scan" in text


def test_subcommand_selects_matching_experiments(tmp_path):
    code, out = run(tmp_path, SMALL, command="moyal-check")
    assert code == 0
    assert (out / "moyal.json").exists() and not (out / "levels.json").exists()


def test_subcommand_without_entry_uses_defaults(tmp_path, capsys):
    cfg = dict(SMALL, experiments=[{"kind": "spectrum"}])
    code, out = run(tmp_path, cfg, "--dry-run", command="moyal-check")
    assert code == 0
    assert "moyal-check" in capsys.readouterr().out


def test_threads_flag(tmp_path):
    cfg = dict(SMALL, experiments=[SMALL["experiments"][0]])
    code, _ = run(tmp_path, cfg, "--threads", "1")
    assert code == 0


def test_potential_from_file(tmp_path):
    (tmp_path / "V.txt").write_text(radial_power(1, 2).to_text())
    cfg = dict(SMALL, potential={"file": str(tmp_path / "V.txt")}, solver={"n_axis": 120, "sigma": "adapted"},
               experiments=[{"id": "levels", "kind": "spectrum", "count": 10}])
    code, out = run(tmp_path, cfg)
    assert code == 0
    rows = json.loads((out / "levels.json").read_text())["rows"]
    assert rows[0]["eigenvalue"] == pytest.approx(1.0603620904841828, rel=1e-9)


def test_bundled_configs_validate(capsys):
    assert cli.main(["list-configs"]) == 0
    names = capsys.readouterr().out.split()
    assert set(names) == set(cli.BUNDLED)
    for name in names:
        assert cli.main(["run", name, "--dry-run"]) == 0


def test_relative_output_is_resolved_against_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = dict(SMALL, output="rel-out", experiments=[SMALL["experiments"][2]])
    path = write_config(tmp_path, cfg)
    assert cli.main(["run", path]) == 0
    assert (tmp_path / "rel-out" / "report.json").exists()
    assert os.path.isfile(tmp_path / "rel-out" / "config.yaml")

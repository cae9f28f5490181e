import json

import pytest

from dgbench.cli import build_parser, load_config, main
from dgbench.harness import ConfigError, RunConfig, run_suite, strip_volatile


def test_validation_before_any_work(monkeypatch):
    import dgbench.harness as H

    def boom(*a, **k):
        raise AssertionError("computation started")

    monkeypatch.setattr(H, "sobolev_section", boom)
    monkeypatch.setattr(H, "solver_section", boom)
    with pytest.raises(ConfigError):
        run_suite(RunConfig(ellipticity=[[10.0, 1.0]]))


@pytest.mark.parametrize("bad", [
    {"n": 4}, {"h": 0.5}, {"kinds": ["marble"]}, {"boundaries": ["nope"]}, {"directions": 3},
    {"sobolev_s": -1.0}, {"ellipticity": [[1.0]]}, {"workers": 0},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        RunConfig(**bad).validate()


def test_config_unknown_key():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"mesh": 3})


def test_coefficient_settings():
    cfg = RunConfig(ellipticity=[[1, 10], [1, 1]], kinds=["identity", "checkerboard"])
    assert cfg.coefficient_settings() == [("identity", 1.0, 1.0), ("checkerboard", 1.0, 10.0)]


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"h": 0.03125, "seed": 3, "ellipticity": [[1, 100]]}))
    args = build_parser().parse_args(["verify", "shadow", "--config", str(path), "--seed", "11", "--Lambda", "10"])
    cfg = load_config(args)
    assert cfg.h == 0.03125 and cfg.seed == 11 and cfg.ellipticity == [[1.0, 10.0]]


def test_n3_flag_picks_coarser_default():
    cfg = load_config(build_parser().parse_args(["constants", "--n", "3"]))
    assert cfg.h == 1 / 16


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
    with pytest.raises(SystemExit) as exc:
        main(["verify", "all", "--bogus"])
    assert exc.value.code != 0
    assert main(["constants", "--lambda", "10", "--Lambda", "1"]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_constants(capsys):
    # [PAPER] C1 = 4 n^2 Lambda^2 / lambda^2 = 4 * 9 * 100 for n = 3
    assert main(["constants", "--n", "3", "--lambda", "1", "--Lambda", "10", "--sobolev-s", "0.35"]) == 0
    doc = json.loads(capsys.readouterr().out)
    row = doc["1,10"]
    assert row["C1"] == 3600.0
    assert row["C2"] == pytest.approx(2**1.5 * 0.35 * 60.0)
    assert row["A"] > 1 and 0 < row["oscillation"]["eps0"] < 1
    assert row["oscillation"]["gamma"] == "1 - 2^-(k0+1)"


def test_cli_solve_writes_field(tmp_path, capsys):
    assert main(["solve", "--h", "0.0625", "--boundary", "bump", "--out", str(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["weak_residual"] <= 1e-10
    assert (tmp_path / "solution-checkerboard-bump.csv").exists()


def test_suite_is_deterministic(tmp_path):
    cfg = dict(h=1 / 32, ellipticity=[[1.0, 10.0]], kinds=["checkerboard"], boundaries=["wave"], directions=120)
    a = run_suite(RunConfig(out=str(tmp_path / "a"), **cfg), ["degiorgi", "shadow"])
    b = run_suite(RunConfig(out=str(tmp_path / "b"), **cfg), ["degiorgi", "shadow"])
    da = strip_volatile(json.loads((tmp_path / "a" / "suite_report.json").read_text()))
    db = strip_volatile(json.loads((tmp_path / "b" / "suite_report.json").read_text()))
    da["config"].pop("out"), db["config"].pop("out")
    assert json.dumps(da, sort_keys=True) == json.dumps(db, sort_keys=True)
    assert "volatile" in json.loads((tmp_path / "a" / "suite_report.json").read_text())
    assert a.overall_pass == b.overall_pass
    assert (tmp_path / "a" / "corpus_manifest.json").exists()


def test_errors_become_failed_reports(monkeypatch):
    import dgbench.harness as H

    def broken(*a, **k):
        raise RuntimeError("kaput")

    monkeypatch.setattr(H, "verify_l2", broken)
    suite = run_suite(RunConfig(h=1 / 16, directions=60), ["shadow"], write=False)
    bad = [r for r in suite.reports if r.lemma_id == "shadow.l2"]
    assert bad and all(not r.ok and "kaput" in r.notes[0] for r in bad)
    assert not suite.overall_pass
    assert suite.sections["shadow"]["failed"] >= len(bad)


def test_overall_pass_ignores_skipped():
    from dgbench.harness import SuiteReport
    from dgbench.reports import LemmaReport, skipped

    s = SuiteReport({}, [LemmaReport("a", 1.0, 2.0), skipped("b", "hypothesis not met")])
    assert s.overall_pass
    s.reports.append(LemmaReport("c", 3.0, 2.0))
    assert not s.overall_pass

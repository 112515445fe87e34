import pytest

from quantsel import cli
from quantsel.quantization import load_beta_table
from quantsel.verify import CheckResult, VerificationReport, verify_theorems

CONFIG = """\
scenario = "ul_rate_vs_power"
n_bs = 8
n_ms = 2
n_select = 3
power_grid = [0.0, 20.0]
trials = 4
seed = 5
algorithms = ["qfas", "fas", "nbs", "random"]
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(CONFIG)
    return path


def test_run_writes_csv(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(config), "--out", str(out), "--plot"]) == 0
    csv = (out / "ul_rate_vs_power.csv").read_text().splitlines()
    assert csv[0] == "sweep,algorithm,mean_rate,std_error,trials" and len(csv) == 9
    assert (out / "ul_rate_vs_power.png").exists()
    assert (out / "ul_rate_vs_power.config.json").exists()
    assert "wrote" in capsys.readouterr().out


def test_run_override_and_workers(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["run", "--config", str(config), "--override", "trials=3", "--override", "power_grid=[10]"]
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b), "--workers", "2"]) == 0
    text = (a / "ul_rate_vs_power.csv").read_bytes()
    assert text == (b / "ul_rate_vs_power.csv").read_bytes()
    assert text.decode().splitlines()[1].startswith("10.0,qfas,")


@pytest.mark.parametrize("extra", [["--override", "n_select=99"], ["--override", "bogus=1"],
                                   ["--workers", "0"]])
def test_run_config_errors(config, tmp_path, extra, capsys):
    code = cli.main(["run", "--config", str(config), "--out", str(tmp_path / "o")] + extra)
    assert code == 1
    assert "config error" in capsys.readouterr().err


def test_run_missing_config(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 1


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--out", "x"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 1


def test_verify_success(capsys):
    assert cli.main(["verify", "--seed", "1", "--budget", "20", "--instances", "3"]) == 0
    out = capsys.readouterr().out
    assert "all checks passed" in out and "worst margin" in out


def test_verify_failure_exit_code(monkeypatch, capsys):
    bad = VerificationReport(0, 10, (CheckResult("broken", 3, 1, -0.5),))
    monkeypatch.setattr(cli, "verify_theorems", lambda *a, **k: bad)
    assert cli.main(["verify", "--seed", "0", "--budget", "10"]) == 2
    assert "[FAIL] broken" in capsys.readouterr().out


def test_verify_bad_arguments():
    assert cli.main(["verify", "--budget", "0"]) == 1
    assert cli.main(["verify", "--alpha", "1.5"]) == 1


def test_constants(tmp_path, capsys):
    assert cli.main(["constants"]) == 0
    assert "high-res approx" in capsys.readouterr().out
    target = tmp_path / "beta.txt"
    assert cli.main(["constants", "--regenerate", "--output", str(target), "--max-bits", "4"]) == 0
    lines = [ln for ln in target.read_text().splitlines() if not ln.startswith("#")]
    table = load_beta_table()
    assert len(lines) == 4
    for ln in lines:
        b, beta = ln.split()
        assert float(beta) == pytest.approx(table[int(b)], rel=1e-14)
    assert cli.main(["constants", "--regenerate", "--max-bits", "13", "--output", str(target)]) == 1


def test_verify_report_contents():
    report = verify_theorems(seed=2, budget=70, instances=4)
    assert report.passed
    names = {c.name for c in report.checks}
    assert {"dl_monotonicity", "dl_rate_loss_peak", "dl_loss_vanishes", "ul_submodularity",
            "ul_greedy_bound", "ul_rank_one_update", "ofdm_block_circulant"} == names
    for c in report.checks:
        assert c.count > 0 and c.violations == 0 and c.worst_margin >= 0


def test_verify_unbounded_when_alpha_is_one():
    report = verify_theorems(seed=0, budget=20, instances=2, alpha=1.0)
    peak = report["dl_rate_loss_peak"]
    assert peak.expected_unbounded and peak.passed
    assert "unbounded" in peak.line()
    assert report.passed


def test_verify_detects_violation(monkeypatch):
    import quantsel.verify as v
    monkeypatch.setattr(v, "max_rate_loss", lambda *a: 123.0)
    report = verify_theorems(seed=0, budget=20, instances=2)
    assert not report["dl_rate_loss_peak"].passed and not report.passed
    assert "VERIFICATION FAILED" in report.format()

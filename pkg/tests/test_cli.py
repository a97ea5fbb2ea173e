import pytest

from upo.cli import main
from upo.harness import parse_config, read_traces

CONFIG = """\
objective = parabola
horizon = 60
seed = 2
grid.lo = 0
grid.hi = 20
noise.rho = 1.0
parabola.curvature = 40.0
parabola.center = 0.33
parabola.velocity = 0.0031
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG)
    return path


class TestRun:
    def test_writes_outputs(self, cfg, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        traces = read_traces(out / "traces.csv")
        assert set(traces) == {"upo", "standard_po", "hei", "thompson"}
        assert all(len(t) == 60 for t in traces.values())
        assert (out / "metrics.csv").read_text().startswith("# oracle_total=")
        saved = parse_config((out / "config.txt").read_text())
        assert saved.horizon == 60 and saved.out == str(out)
        assert "wrote" in capsys.readouterr().out

    def test_selector_subset_and_seed(self, cfg, tmp_path):
        out = tmp_path / "o"
        assert main(["run", "--config", str(cfg), "--out", str(out), "--selector", "upo", "--seed", "7"]) == 0
        assert set(read_traces(out / "traces.csv")) == {"upo"}
        assert parse_config((out / "config.txt").read_text()).seed == 7

    def test_repeat_runs_identical(self, cfg, tmp_path):
        for name in ("a", "b"):
            assert main(["run", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a" / "traces.csv").read_bytes() == (tmp_path / "b" / "traces.csv").read_bytes()


class TestOtherCommands:
    def test_curves(self, cfg, tmp_path):
        out = tmp_path / "c"
        assert main(["curves", "--config", str(cfg), "--out", str(out), "--k", "0,10"]) == 0
        lines = (out / "curves.csv").read_text().splitlines()
        assert lines[0] == "k,u,value"
        assert len(lines) == 1 + 2 * 21

    def test_metrics_from_traces(self, cfg, tmp_path, capsys):
        out = tmp_path / "m"
        main(["run", "--config", str(cfg), "--out", str(out)])
        written = (out / "metrics.csv").read_text()
        capsys.readouterr()
        assert main(["metrics", "--config", str(cfg), "--traces", str(out / "traces.csv")]) == 0
        assert capsys.readouterr().out == written

    def test_constants(self, cfg, capsys):
        assert main(["constants", "--config", str(cfg), "--tau", "0.05"]) == 0
        text = capsys.readouterr().out
        for name in ("L_b", "L_k", "N_window", "c1", "c2", "lambda_star"):
            assert name in text


class TestErrors:
    def test_bad_config_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("horizon = 10\nbogus = 1\n")
        assert main(["run", "--config", str(path)]) == 2
        assert f"{path}:2:" in capsys.readouterr().err

    def test_missing_file_exits_1(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 1

    def test_unknown_selector_exits_1(self, cfg):
        assert main(["run", "--config", str(cfg), "--selector", "magic"]) == 1

    def test_selector_not_configured_exits_2(self, tmp_path):
        path = tmp_path / "one.cfg"
        path.write_text(CONFIG + "selectors = upo\n")
        assert main(["run", "--config", str(path), "--selector", "hei"]) == 2

    def test_tied_maximizer_exits_2(self, tmp_path, capsys):
        # peak sits exactly between two grid points at k = 0
        path = tmp_path / "tie.cfg"
        text = CONFIG.replace("0.33", "0.25").replace("0.0031", "0.0").replace("grid.lo = 0", "grid.lo = -4")
        path.write_text(text.replace("grid.hi = 20", "grid.hi = 4") + "grid.spacing = 0.5\n")
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "t")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_negative_curve_step_exits_1(self, cfg, tmp_path):
        assert main(["curves", "--config", str(cfg), "--out", str(tmp_path), "--k", "-1"]) == 1

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == 2

"""End-to-end checks of the command-line front end."""

import re

import pytest

from edalab.cli import main
from edalab.experiments import SWEEP_COLUMNS, read_csv

SWEEP_INI = """\
[sweep]
algorithm = umda
n = 24
lambda = 12
mu = lambda/2
runs = 2
master_seed = 7

[fitness]
name = onemax
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestRun:
    ARGS = ["run", "--algo", "umda", "--n", "100", "--lambda", "200", "--mu", "100",
            "--fitness", "onemax", "--seed", "7"]

    def test_deterministic(self, capsys, tmp_path):
        outs = []
        for k in range(2):
            csv = str(tmp_path / f"r{k}.csv")
            assert main(self.ARGS + ["--csv", csv]) == 0
            outs.append((capsys.readouterr().out, open(csv).read()))
        assert outs[0] == outs[1]
        assert "hit=true" in outs[0][0]
        assert outs[0][1].startswith("# {")

    def test_mu_above_lambda(self, capsys):
        code = main(["run", "--algo", "umda", "--n", "10", "--lambda", "200", "--mu", "300"])
        assert code == 1
        assert "mu <= lambda" in capsys.readouterr().err

    def test_budget_exhausted(self, capsys):
        code = main(["run", "--algo", "umda", "--n", "50", "--lambda", "10", "--mu", "5",
                     "--fitness", "needle", "--max-evals", "100"])
        assert code == 2
        assert "hit=false" in capsys.readouterr().out

    def test_cga_leadingones_hits(self, capsys):
        assert main(["run", "--algo", "cga", "--K", "50", "--n", "64", "--fitness", "leadingones", "--seed", "1"]) == 0
        assert "hit=true" in capsys.readouterr().out

    def test_bad_flag(self):
        assert main(["run", "--algo", "nope", "--n", "5"]) == 1


class TestSweep:
    def test_one_row(self, tmp_path):
        cfg = _write(tmp_path, "s.ini", SWEEP_INI)
        out = str(tmp_path / "out.csv")
        assert main(["sweep", cfg, "--out", out, "--threads", "1"]) == 0
        text = open(out).read()
        cols, rows = read_csv(text)
        assert tuple(cols) == SWEEP_COLUMNS and len(rows) == 1
        assert '"master_seed": 7' in text.splitlines()[0]

    def test_threads_do_not_matter(self, tmp_path):
        cfg = _write(tmp_path, "s.ini", SWEEP_INI.replace("lambda = 12", "lambda = 8:16:4"))
        outs = []
        for t in ("1", "8"):
            out = str(tmp_path / f"t{t}.csv")
            assert main(["sweep", cfg, "--out", out, "--threads", t]) == 0
            outs.append(open(out, "rb").read())
        assert outs[0] == outs[1]
        assert len(read_csv(outs[0].decode())[1]) == 3

    def test_env_threads(self, tmp_path, monkeypatch):
        cfg = _write(tmp_path, "s.ini", SWEEP_INI)
        monkeypatch.setenv("EDA_LAB_THREADS", "0")
        assert main(["sweep", cfg, "--out", str(tmp_path / "o.csv")]) == 1

    def test_unknown_key(self, tmp_path, capsys):
        cfg = _write(tmp_path, "s.ini", SWEEP_INI + "colour = red\n")
        assert main(["sweep", cfg, "--out", str(tmp_path / "o.csv")]) == 1
        assert "colour" in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path):
        cfg = _write(tmp_path, "s.ini", SWEEP_INI)
        assert main(["sweep", cfg, "--out", str(tmp_path / "missing" / "o.csv"), "--threads", "1"]) == 1

    def test_missing_config(self, tmp_path):
        assert main(["sweep", str(tmp_path / "none.ini")]) == 1


class TestOtherCommands:
    def test_scaling(self, tmp_path, capsys):
        cfg = _write(tmp_path, "c.ini", "[scaling]\nalgorithm = cga\nn = 8, 16, 32, 64\nk = 2*sqrt(n)\nruns = 3\n")
        out = str(tmp_path / "sc.csv")
        assert main(["scaling", cfg, "--out", out, "--threads", "1"]) == 0
        assert len(read_csv(open(out).read())[1]) == 4
        assert "slope=" in capsys.readouterr().err

    def test_compare(self, tmp_path):
        text = (
            "[entry umda]\nalgorithm = umda\nn = 16\nlambda = 10\nmu = 5\nruns = 2\n\n"
            "[entry cga]\nalgorithm = cga\nn = 16\nk = 8\nruns = 2\nfitness = leadingones\n"
        )
        cfg = _write(tmp_path, "c.ini", text)
        outs = []
        for k in range(2):
            out = str(tmp_path / f"c{k}.csv")
            assert main(["compare", cfg, "--out", out, "--threads", "1"]) == 0
            outs.append(open(out).read())
        assert outs[0] == outs[1]
        assert [r["label"] for r in read_csv(outs[0])[1]] == ["umda", "cga"]

    def test_noise(self, tmp_path):
        text = "[noise]\nalgorithm = cga\nn = 20\nk = 10*(1+sigma2)\nruns = 2\nsigma2 = 0, 1\nea_runs = 2\n"
        cfg = _write(tmp_path, "n.ini", text)
        out = str(tmp_path / "n.csv")
        assert main(["noise", cfg, "--out", out, "--threads", "1"]) == 0
        rows = read_csv(open(out).read())[1]
        assert [r["K"] for r in rows] == ["10.0", "20.0"]

    def test_drift_check_chain(self, capsys):
        assert main(["drift-check", "--chain", "additive", "--runs", "2000", "--seed", "1"]) == 0
        first = capsys.readouterr().out
        assert "PASS" in first
        main(["drift-check", "--chain", "additive", "--runs", "2000", "--seed", "1"])
        assert capsys.readouterr().out == first

    def test_drift_check_trace(self, tmp_path, capsys):
        rows = ["run,t,value"]
        for r in range(5):
            rows += [f"{r},{t},{10 - t}" for t in range(11)]
        path = _write(tmp_path, "t.csv", "\n".join(rows) + "\n")
        assert main(["drift-check", "--trace", path, "--h", "constant:1"]) == 0
        assert capsys.readouterr().out.strip().endswith("PASS")

    def test_drift_check_malformed(self, tmp_path):
        path = _write(tmp_path, "t.csv", "a,b\n1,2\n")
        assert main(["drift-check", "--trace", path]) == 1


class TestPlot:
    def _csv(self, tmp_path):
        return _write(tmp_path, "p.csv", "# meta\nlambda,mean_evals\n14,100.5\n16,90\n")

    def test_structure(self, tmp_path):
        src = self._csv(tmp_path)
        out = str(tmp_path / "p.svg")
        assert main(["plot", "--in", src, "--x", "lambda", "--y", "mean_evals", "--out", out]) == 0
        svg = open(out).read()
        lines = re.findall(r'<polyline[^>]*points="([^"]*)"', svg)
        assert len(lines) == 1 and len(lines[0].split()) == 2
        assert ">lambda<" in svg and ">mean_evals<" in svg

    def test_deterministic(self, tmp_path):
        src = self._csv(tmp_path)
        outs = []
        for k in range(2):
            out = str(tmp_path / f"p{k}.svg")
            main(["plot", "--in", src, "--x", "lambda", "--y", "mean_evals", "--out", out])
            outs.append(open(out, "rb").read())
        assert outs[0] == outs[1]

    def test_missing_column(self, tmp_path, capsys):
        src = self._csv(tmp_path)
        code = main(["plot", "--in", src, "--x", "lambda", "--y", "median", "--out", str(tmp_path / "x.svg")])
        assert code == 1
        assert "median" in capsys.readouterr().err


@pytest.mark.parametrize("command", ["sweep", "scaling", "compare", "noise"])
def test_config_commands_reject_garbage(tmp_path, command):
    cfg = _write(tmp_path, "bad.ini", "this is not ini\n")
    assert main([command, cfg]) == 1

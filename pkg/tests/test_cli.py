import subprocess
import sys

import numpy as np
import pytest

from lgrape import cli, hardware
from lgrape.experiments import read_table


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


def test_bench_integrators(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "integrators.n_spins = 2\nintegrators.counts = 10, 20, 40, 80\n"
                              "integrators.reference_factor = 4\n")
    out = tmp_path / "i.csv"
    assert cli.main(["bench", "integrators", "--config", cfg, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "slope_LG4" in text and "wrote" in text
    assert len(read_table(out).rows) == 16


def test_bench_broadband_seed_shift(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "broadband.counts = 4\nbroadband.seeds = 0, 1\n"
                              "broadband.n_offsets = 2\nbroadband.power_scales = 1.0\n"
                              "broadband.max_iterations = 3\n")
    out = tmp_path / "b.csv"
    assert cli.main(["bench", "broadband", "--config", cfg, "--out", str(out),
                     "--seed", "5"]) == 0
    assert sorted({r[2] for r in read_table(out).rows}) == [5, 6]
    assert "median pwl n=4" in capsys.readouterr().out


def test_optimize_writes_waveform_and_log(tmp_path):
    cfg = write_cfg(tmp_path, "optimize.problem = broadband\noptimize.n_intervals = 4\n"
                              "optimize.max_iterations = 3\nbroadband.n_offsets = 2\n")
    out = tmp_path / "pulse.csv"
    assert cli.main(["optimize", "pwl", "--config", cfg, "--out", str(out)]) == 0
    w = hardware.read_waveform(out)
    assert w.t.size == 5
    np.testing.assert_allclose(np.hypot(w.cx, w.cy), 2 * np.pi * 60e3)
    log = (tmp_path / "pulse.log.csv").read_text().splitlines()
    assert log[0] == "iteration,fidelity" and len(log) >= 2


def test_optimize_prephasing(tmp_path):
    cfg = write_cfg(tmp_path, "prephasing.n_slices = 6\nprephasing.n_orientations = 2\n"
                              "prephasing.n_frozen = 1\noptimize.max_iterations = 2\n")
    out = tmp_path / "p.csv"
    assert cli.main(["optimize", "pwc", "--config", cfg, "--out", str(out)]) == 0
    w = hardware.read_waveform(out, "pwc")
    assert w.cx[0] == 0 and w.cx[-1] == 0


def test_distort_zero_is_zero(tmp_path, capsys):
    src, dst = tmp_path / "in.csv", tmp_path / "out.csv"
    hardware.write_waveform(src, hardware.Waveform(np.linspace(0, 2e-5, 5), np.zeros(5),
                                                   np.zeros(5)))
    assert cli.main(["distort", str(src), str(dst), "--q", "50"]) == 0
    out = hardware.read_waveform(dst)
    assert np.all(out.cx == 0) and np.all(out.cy == 0)
    assert "delay" in capsys.readouterr().out


def test_distort_rejects_lab_input_and_bad_q(tmp_path):
    lab = tmp_path / "lab.csv"
    hardware.write_waveform(lab, hardware.LabSignal([0.0, 1.0], [0.0, 0.0]))
    assert cli.main(["distort", str(lab), str(tmp_path / "o.csv")]) == 2
    src = tmp_path / "in.csv"
    hardware.write_waveform(src, hardware.Waveform([0.0, 1e-5], [0.0, 0.0], [0.0, 0.0]))
    assert cli.main(["distort", str(src), str(tmp_path / "o.csv"), "--q", "0.1"]) == 2
    assert cli.main(["distort", str(src), str(tmp_path / "o.csv"), "--oversample", "4"]) == 2
    assert cli.main(["distort", str(tmp_path / "missing.csv"), str(tmp_path / "o.csv")]) == 2


def test_check_grad(tmp_path, capsys):
    out = tmp_path / "audit.txt"
    assert cli.main(["check-grad", "--seed", "7", "--n-problems", "6", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 5
    assert all(float(l.rsplit(" ", 1)[1]) < 1e-6 for l in lines)


def test_check_grad_failure_exit_code(monkeypatch):
    class Bad:
        def lines(self):
            return ["pwc_controls: max relative error 1.0e-02"]

        def passed(self, tol):
            return False

    monkeypatch.setattr(cli.audit, "gradient_audit", lambda seed, n: Bad())
    assert cli.main(["check-grad"]) == 1


def test_config_errors_exit_2(tmp_path):
    bad = write_cfg(tmp_path, "integrators.nope = 1\n")
    assert cli.main(["bench", "integrators", "--config", bad]) == 2
    assert cli.main(["bench", "integrators", "--config", str(tmp_path / "none.cfg")]) == 2
    assert cli.main(["bench", "integrators", "--jobs", "0"]) == 2
    bad = write_cfg(tmp_path, "optimize.problem = nmr\n")
    assert cli.main(["optimize", "pwc", "--config", bad]) == 2


def test_usage_errors_exit_2():
    for argv in (["frobnicate"], [], ["bench", "nothing"]):
        with pytest.raises(SystemExit) as exc:
            cli.main(argv)
        assert exc.value.code == 2


def test_console_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "lgrape.cli", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "check-grad" in r.stdout

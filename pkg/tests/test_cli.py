import json
import subprocess
import sys

import pytest

from rwre21.cli import main
from rwre21.config import parse_config
from rwre21.errors import ConfigError

BASE = """\
# point family at the standard test parameter
family.kind = point
family.theta = 0.2, 0.1
run.seed = 42
"""


def _cfg(tmp_path, extra="", base=BASE, name="c.cfg"):
    p = tmp_path / name
    p.write_text(base + extra)
    return str(p)


def _data_files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


def test_simulate_writes_tables(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", _cfg(tmp_path), "--n", "50", "--out", str(out)]) == 0
    files = _data_files(out)
    assert set(files) == {"walk.tsv", "path.tsv", "simulate.tsv"}
    assert files["walk.tsv"].startswith(b"# n=50\t")
    row = files["simulate.tsv"].decode().splitlines()[1].split("\t")
    assert row[0] == "50" and row[2:] == ["True", "True"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 42 and man["command"] == "simulate"
    assert set(man["files"]) == set(files)
    assert "numpy" in man["versions"]


def test_counts_round_trip(tmp_path):
    sim = tmp_path / "sim"
    main(["simulate", "--config", _cfg(tmp_path), "--n", "30", "--out", str(sim)])
    out = tmp_path / "counts"
    assert main(["counts", "--config", _cfg(tmp_path), "--path", str(sim / "path.tsv"),
                 "--out", str(out)]) == 0
    assert (out / "walk.tsv").read_bytes() == (sim / "walk.tsv").read_bytes()


def test_loglik_and_estimate(tmp_path):
    sim = tmp_path / "sim"
    main(["simulate", "--config", _cfg(tmp_path), "--n", "2000", "--out", str(sim)])
    counts = str(sim / "walk.tsv")
    out = tmp_path / "ll"
    assert main(["loglik", "--config", _cfg(tmp_path), "--counts", counts,
                 "--theta", "0.2,0.1", "--out", str(out)]) == 0
    head, row = (out / "loglik.tsv").read_text().splitlines()
    assert head == "theta1\ttheta2\tloglik\tper_site"
    assert float(row.split("\t")[2]) < 0
    est = tmp_path / "est"
    assert main(["estimate", "--config", _cfg(tmp_path, "estimate.grid = 11\n"),
                 "--counts", counts, "--out", str(est)]) == 0
    theta = [float(v) for v in (est / "estimate.tsv").read_text().splitlines()[1]
             .split("\t")[:2]]
    assert abs(theta[0] - 0.2) < 0.05 and abs(theta[1] - 0.1) < 0.05
    assert len((est / "profile.tsv").read_text().splitlines()) == 1 + 11 * 11


def test_lyapunov_prints_summary(tmp_path, capsys):
    out = tmp_path / "ly"
    assert main(["lyapunov", "--config", _cfg(tmp_path), "--steps", "20000",
                 "--out", str(out)]) == 0
    line = capsys.readouterr().out.strip().split("\t")
    assert line[2] == "transient-right"
    assert abs(float(line[0]) + 0.4327) < 0.02


def test_speed_invariant_kernel_bpire(tmp_path):
    cfg = _cfg(tmp_path, "bpire.replicates = 300\nkernel.samples = 2000\n"
                         "kernel.max_total = 100\ninvariant.v_max = 20\n")
    for cmd, name in [("speed", "speed.tsv"), ("invariant", "invariant.tsv"),
                      ("kernel-check", "kernel.tsv"), ("bpire-check", "uz.tsv")]:
        out = tmp_path / cmd
        assert main([cmd, "--config", cfg, "--out", str(out)]) == 0, cmd
        assert (out / name).exists()
    v = float((tmp_path / "speed" / "speed.tsv").read_text().splitlines()[1].split("\t")[0])
    assert v == pytest.approx(0.3, rel=1e-9)
    ident = (tmp_path / "bpire-check" / "identities.tsv").read_text().splitlines()[1:]
    assert all(r.split("\t")[2:4] == ["True", "True"] for r in ident)


def test_consistency_command(tmp_path, capsys):
    cfg = _cfg(tmp_path, "consistency.grid = 11\n")
    out = tmp_path / "cons"
    assert main(["consistency", "--config", cfg, "--n", "200,2000", "--reps", "4",
                 "--out", str(out)]) == 0
    assert "median errors" in capsys.readouterr().out
    assert len((out / "errors.tsv").read_text().splitlines()) == 1 + 8


def test_identical_outputs_across_runs_and_threads(tmp_path):
    outs = []
    for threads in (1, 1, 2):
        cfg = _cfg(tmp_path, f"run.threads = {threads}\nconsistency.grid = 11\n",
                   name=f"t{threads}.cfg")
        out = tmp_path / f"run{len(outs)}"
        assert main(["consistency", "--config", cfg, "--n", "100,300", "--reps", "3",
                     "--out", str(out)]) == 0
        outs.append(_data_files(out))
    assert outs[0] == outs[1] == outs[2]


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = _cfg(tmp_path, "simulate.steps = 10\n")
    assert main(["simulate", "--config", cfg, "--n", "5", "--out", str(tmp_path / "o")]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_missing_seed_rejected():
    with pytest.raises(ConfigError, match="run.seed"):
        parse_config("family.kind = point\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(BASE + "run.seed = 3\n")


def test_theta_outside_box_is_validation_error(tmp_path):
    cfg = _cfg(tmp_path, base=BASE.replace("0.2, 0.1", "0.6, 0.1"))
    assert main(["simulate", "--config", cfg, "--n", "5", "--out", str(tmp_path / "o")]) == 1


def test_non_ballistic_theta_rejected_before_work(tmp_path, capsys):
    cfg = _cfg(tmp_path, base=BASE.replace("0.2, 0.1", "0.45, 0.45"))
    assert main(["simulate", "--config", cfg, "--n", "5", "--out", str(tmp_path / "o")]) == 1
    assert "gamma_A_hat" in capsys.readouterr().err


def test_budget_error_exit_code(tmp_path):
    cfg = _cfg(tmp_path, "simulate.step_cap = 100\n")
    assert main(["simulate", "--config", cfg, "--n", "100", "--out", str(tmp_path / "o")]) == 2


def test_missing_counts_file(tmp_path):
    assert main(["loglik", "--config", _cfg(tmp_path), "--counts", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "o")]) == 1


def test_console_entry_point(tmp_path):
    out = tmp_path / "sub"
    proc = subprocess.run([sys.executable, "-m", "rwre21.cli", "lyapunov", "--config",
                           _cfg(tmp_path), "--steps", "10000", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip().endswith("transient-right")

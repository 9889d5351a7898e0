import subprocess
import sys

import numpy as np
import pytest

from polyblend import io
from polyblend.cli import main
from polyblend.potential import PotentialParams, f_delta

SMALL = """
grid.nx = 16
grid.ny = 16
model.alpha = 0.1
model.beta = 0.05
model.gamma = 0.05
stepper.dt = 1e-4
schedule.t_end = 0.005
schedule.diag_every = 10
schedule.snapshot_every = 25
init.u_mean = 0.1
init.amplitude = 0.05
init.seed = 1
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL + f"output.directory = {tmp_path / 'out'}\n")
    return path


def test_run_outputs(small_cfg, tmp_path, capsys):
    assert main(["run", str(small_cfg)]) == 0
    out = tmp_path / "out"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["diagnostics.csv", "final.fld", "final_u.pgm", "final_v.pgm",
                     "snap_000000025.fld", "snap_000000025_u.pgm", "snap_000000025_v.pgm",
                     "snap_000000050.fld", "snap_000000050_u.pgm", "snap_000000050_v.pgm"]
    recs = io.read_diagnostics_csv(out / "diagnostics.csv")
    assert len(recs) == 5
    final = io.read_snapshot(out / "final.fld")
    assert final.t == pytest.approx(0.005)
    assert recs[-1].t == final.t
    assert "reason=time_reached" in capsys.readouterr().out


def test_run_is_deterministic(small_cfg, tmp_path):
    assert main(["run", str(small_cfg), "--set", f"output.directory={tmp_path / 'a'}"]) == 0
    assert main(["run", str(small_cfg), "--set", f"output.directory={tmp_path / 'b'}"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_config_error_exit(small_cfg, capsys):
    assert main(["run", str(small_cfg), "--set", "model.c=1.5"]) == 1
    assert "|c| < 1" in capsys.readouterr().err
    assert main(["run", str(small_cfg), "--set", "bogus"]) == 1
    assert main(["run", str(small_cfg) + ".missing"]) == 1


def test_runtime_failure_exit(small_cfg, capsys):
    args = ["run", str(small_cfg), "--set", "stepper.kappa_u=0", "--set", "stepper.kappa_v=0",
            "--set", "stepper.max_retries=0", "--set", "stepper.dt=1", "--set", "schedule.t_end=5",
            "--set", "init.kind=two_mode", "--set", "init.u_mean=0", "--set", "init.amplitude=0.9"]
    assert main(args) == 2
    assert "runtime failure" in capsys.readouterr().err


def test_sweep(small_cfg, tmp_path, capsys):
    sweep_dir = tmp_path / "sweep"
    rc = main(["sweep", str(small_cfg), "--vary", "model.sigma=0.5,1.0", "--vary", "init.seed=1,2",
               "--out", str(sweep_dir), "--jobs", "2"])
    assert rc == 0
    cells = sorted(p.name for p in sweep_dir.iterdir() if p.is_dir())
    assert cells == ["cell_000", "cell_001", "cell_002", "cell_003"]
    for c in cells:
        assert (sweep_dir / c / "final.fld").exists() and (sweep_dir / c / "diagnostics.csv").exists()
    manifest = (sweep_dir / "sweep.csv").read_text().splitlines()
    assert manifest[0] == "cell,model.sigma,init.seed"
    assert manifest[1:] == ["cell_000,0.5,1", "cell_001,0.5,2", "cell_002,1.0,1", "cell_003,1.0,2"]
    a = io.read_snapshot(sweep_dir / "cell_000" / "final.fld")
    b = io.read_snapshot(sweep_dir / "cell_001" / "final.fld")
    assert not np.array_equal(a.u, b.u)


def test_sweep_bad_value_is_config_error(small_cfg, tmp_path):
    rc = main(["sweep", str(small_cfg), "--vary", "model.c=0.1,2.0", "--out", str(tmp_path / "s")])
    assert rc == 1


def test_stationary_decoupled(tmp_path, capsys):
    cfg = tmp_path / "stat.cfg"
    cfg.write_text("grid.nx = 16\ngrid.ny = 16\nstepper.dt = 1e-3\ninit.u_mean = 0.8\ninit.v_mean = 0.8\n"
                   f"init.amplitude = 0.05\ninit.seed = 3\noutput.formats = csv\noutput.directory = {tmp_path}\n")
    assert main(["stationary", str(cfg)]) == 0
    lines = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines() if " = " in line)
    assert lines["is_stationary"] == "True"
    assert float(lines["mu_infty"]) == pytest.approx(f_delta(0.8, 0.8, PotentialParams(), "du"), abs=1e-6)


def test_check_exit_zero(capsys):
    assert main(["check", "--trials", "5"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "polyblend", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "stationary" in res.stdout

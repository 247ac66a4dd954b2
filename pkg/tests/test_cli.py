import json
import subprocess
import sys

import numpy as np
import pytest

from vortexmoduli.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_OK, SCHEMA, main
from vortexmoduli.gridio import load_grid
from vortexmoduli.torus import make_flat_torus
from vortexmoduli.triples import make_triple
from vortexmoduli.vortex import vortex_residual

FIXTURE = """\
[base]
tau = 0.3+1.1j
n_grid = 16

[triple]
kind = constant
alpha = 1.0
phi = 0.8+0.2j
eps = 0.1

[run]
dump_grids = true
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(tmp_path, command, text=FIXTURE, out="out", extra=()):
    code = main([command, "--config", str(write(tmp_path, text)), "--out", str(tmp_path / out), *extra])
    rep = tmp_path / out / "report.json"
    return code, (json.loads(rep.read_text()) if rep.exists() else None)


def test_solve_fixture(tmp_path):
    code, rep = run(tmp_path, "solve")
    assert code == EXIT_OK
    assert rep["schema"] == SCHEMA and rep["status"] == "ok"
    assert rep["results"]["residual"]["sup_norm"] <= 1e-9
    assert rep["results"]["closed_form"]["max_deviation"] <= 1e-8
    assert rep["results"]["verdict"] == "stable"
    assert (tmp_path / "out" / "trace.csv").read_text().startswith("iter,sup_norm,trace_integral")


def test_grid_dump_reproduces_the_residual(tmp_path):
    _, rep = run(tmp_path, "solve")
    h1 = load_grid(tmp_path / "out" / "h1.vtxg").data
    h2 = load_grid(tmp_path / "out" / "h2.vtxg").data
    phi = load_grid(tmp_path / "out" / "phi.vtxg").data
    base = make_flat_torus(0.3 + 1.1j, 16)
    beta = np.full(base.shape + (1, 1), 0.1 + 0j)
    t = make_triple(base, phi, 1.0, beta, beta).with_metrics(h1, h2)
    assert vortex_residual(t).sup_norm == rep["results"]["residual"]["sup_norm"]


def test_reports_are_byte_identical(tmp_path):
    run(tmp_path, "solve", out="a")
    run(tmp_path, "solve", out="b")
    for name in ("report.json", "trace.csv", "h1.vtxg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_is_recorded(tmp_path):
    _, rep = run(tmp_path, "solve", extra=("--seed", "17", "--refine", "2"))
    assert rep["seed"] == 17 and rep["refine"] == 2


def test_malformed_config_writes_nothing(tmp_path, capsys):
    code, rep = run(tmp_path, "solve", text=FIXTURE.replace("n_grid = 16", "n_gird = 16"))
    assert code == EXIT_CONFIG and rep is None
    assert not (tmp_path / "out").exists()
    assert "cfg.ini:3" in capsys.readouterr().err


def test_non_convergence_exit_code(tmp_path):
    code, rep = run(tmp_path, "solve", text=FIXTURE.replace("alpha = 1.0", "alpha = 0.0"))
    assert code == EXIT_NONCONVERGENCE
    assert rep["status"] == "non-convergence"
    assert "Kobayashi-Hitchin" in rep["results"]["failure"]["hint"]


def test_check_failure_exit_code(tmp_path):
    # a tolerance no solver can meet turns into a failed residual check, not a crash
    text = FIXTURE + "[solver]\ntol = 1e-30\nmax_iter = 3\n"
    code, rep = run(tmp_path, "solve", text=text)
    assert code == EXIT_NONCONVERGENCE
    assert rep["status"] == "non-convergence"


def test_alpha_sweep_matches_verdicts(tmp_path, monkeypatch):
    text = FIXTURE + "[checks]\nalphas = -0.5, 0.0, 0.5, 1.5\n"
    code, rep = run(tmp_path, "stability", text=text, out="serial")
    assert code == EXIT_OK
    rows = {r["alpha"]: r for r in rep["results"]["alpha_sweep"]}
    assert rows[0.5]["converged"] and rows[1.5]["converged"]
    assert not rows[0.0]["converged"] and not rows[-0.5]["converged"]
    monkeypatch.setenv("VORTEXMODULI_WORKERS", "2")
    run(tmp_path, "stability", text=text, out="pool")
    assert (tmp_path / "serial" / "report.json").read_bytes() == (tmp_path / "pool" / "report.json").read_bytes()


def test_bad_worker_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("VORTEXMODULI_WORKERS", "many")
    code, _ = run(tmp_path, "solve")
    assert code == EXIT_CONFIG


def test_check_failures_give_exit_two(tmp_path):
    text = FIXTURE.replace("n_grid = 16", "n_grid = 32") + "[family]\ndelta = 1e-2\n[checks]\nfibint_rel_tol = 1e-30\n"
    code, rep = run(tmp_path, "fibint", text=text)
    assert code == EXIT_CHECK
    assert rep["failed_checks"] == ["fiber_integral"]


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, FIXTURE)
    proc = subprocess.run([sys.executable, "-m", "vortexmoduli", "solve", "--config", str(cfg), "--out",
                           str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "solve: ok" in proc.stdout

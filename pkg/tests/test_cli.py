import os

import numpy as np
import pytest

from thinfilm.cli import main


def _cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text + f"output_dir = {tmp_path / 'out'}\n")
    return str(p)


def test_model_writes_csv(tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert main(["model", "--bc", "dirichlet", "--k2", "2", "--p", "1", "--rhs", "cos:3",
                 "--mesh", "64,2", "--output", str(out)]) == 0
    data = np.genfromtxt(out, delimiter=",", names=True)
    assert data.shape == (65,)
    assert "energy_residual" in capsys.readouterr().out


def test_model_bad_pairing_exit_2():
    assert main(["model", "--bc", "neumann", "--top", "simply_supported"]) == 2


def test_model_bad_mesh_exit_2():
    assert main(["model", "--mesh", "oops"]) == 2


def test_unknown_subcommand_exit_2():
    assert main(["frobnicate"]) == 2


def test_run_missing_config_exit_4(tmp_path):
    assert main(["run", str(tmp_path / "none.cfg")]) == 4


def test_run_unknown_key_exit_2(tmp_path):
    assert main(["run", _cfg(tmp_path, "colour = red\n")]) == 2


def test_run_csv_inputs_and_outputs(tmp_path):
    # steady wedge through CSV inputs reproduces the builtin
    from thinfilm.grid import make_grid

    g = make_grid("strip", 2, 8, 16)
    om, lam = (np.broadcast_to(c, g.shape) for c in g.coords())
    rows = ["x1,x2,value"] + [f"{float(a)!r},{float(b)!r},{0.1 * float(b)!r}" for a, b in zip(om.ravel(), lam.ravel())]
    (tmp_path / "h0.csv").write_text("\n".join(rows) + "\n")
    grows = ["x1,value"] + [f"{float(a)!r},-0.1" for a in g.omega[0]]
    (tmp_path / "g.csv").write_text("\n".join(grows) + "\n")
    cfg = _cfg(tmp_path, "Nx = 8\nM = 16\nT = 0.05\ndt = 0.025\nh0 = csv:h0.csv\ng = csv:g.csv\n")
    assert main(["run", cfg]) == 0
    out = tmp_path / "out"
    assert sorted(os.listdir(out)) == ["front_t1.csv", "front_t2.csv", "h_t1.csv", "h_t2.csv",
                                       "report.txt", "timings.txt"]
    rep = (out / "report.txt").read_text()
    assert "converged = True" in rep and "[norm_monitor]" in rep
    front = np.genfromtxt(out / "front_t2.csv", delimiter=",", names=True)
    assert np.max(np.abs(front["rho"])) < 1e-6


def test_run_failure_still_writes_report(tmp_path):
    cfg = _cfg(tmp_path, "Nx = 8\nM = 16\nT = 0.05\ndt = 0.025\nh0 = builtin:wedge_perturbed\n"
                         "max_newton = 1\nnewton_tol = 1e-14\n")
    assert main(["run", cfg]) == 3
    rep = (tmp_path / "out" / "report.txt").read_text()
    assert "flag = max_iter" in rep


def test_csv_grid_mismatch_exit_2(tmp_path):
    (tmp_path / "h0.csv").write_text("x1,x2,value\n0,0,0\n")
    assert main(["run", _cfg(tmp_path, "h0 = csv:h0.csv\n")]) == 2


def test_norms_on_field_dump(tmp_path, capsys):
    from thinfilm.holder import smooth_corpus
    from thinfilm.mesh import write_field_csv

    p = tmp_path / "f.csv"
    write_field_csv(smooth_corpus(1)[0], str(p))
    assert main(["norms", "--input", str(p), "--gamma", "0.5", "--pairs", "500"]) == 0
    assert "seminorm[D04]" in capsys.readouterr().out


def test_verify_identities(capsys):
    assert main(["verify", "identities"]) == 0
    assert capsys.readouterr().out.count("PASS") == 3

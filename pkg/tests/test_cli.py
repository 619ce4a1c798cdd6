import json
import subprocess
import sys
from pathlib import Path

import pytest

from nrmi_mix.cli import main, read_data
from nrmi_mix.exceptions import DataError

from conftest import DATA_DIR

GALAXY = DATA_DIR / "galaxy.csv"


def write_config(path: Path, **chain) -> Path:
    cfg = {"model": {"process": "nig", "kappa": 0.015, "kernel": "normal",
                     "location_base": "gamma", "hyperprior": {"psi1": 0.01, "psi2": 0.01}},
           "chain": {"iterations": 200, "burn_in": 100, "thinning": 4, "seed": 7, **chain},
           "output": {"grid_points": 50}}
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def cfg(tmp_path):
    return write_config(tmp_path / "run.json")


def test_fit_galaxy(cfg, tmp_path, capsys):
    out = tmp_path / "fit"
    assert main(["fit", str(GALAXY), str(cfg), "--out", str(out), "--json"]) == 0
    printed = json.loads(capsys.readouterr().out)
    summary = json.loads((out / "fit.json").read_text())
    assert printed["n"] == summary["n"] == 82
    assert summary["config"]["model"]["kappa"] == 0.015
    assert {p.name for p in out.iterdir()} == {"fit.json", "density.csv", "rn.csv", "cpo.csv"}


def test_csv_conventions(cfg, tmp_path):
    out = tmp_path / "fit"
    main(["fit", str(GALAXY), str(cfg), "--out", str(out), "--save-paths"])
    for f in out.glob("*.csv"):
        text = f.read_text()
        assert text.endswith("\n")
        lines = text.splitlines()
        if f.name != "density-paths.csv":  # that header holds the grid abscissae
            assert lines[0][0].isalpha()
        for line in lines[1:4]:
            for cell in line.split(","):
                float(cell)
                assert "," not in cell
    dens = (out / "density.csv").read_text().splitlines()
    assert dens[0] == "x,mean,lower,upper"
    # 17 significant digits: repr-exact round trip
    first = dens[1].split(",")[1]
    assert float(format(float(first), ".17g")) == float(first)
    assert len(first.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) >= 15


def test_byte_identical_rerun(cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["fit", str(GALAXY), str(cfg), "--out", str(a), "--save-paths"])
    # rerun from the configuration echoed into the artifact
    echoed = tmp_path / "echo.json"
    echoed.write_text(json.dumps(json.loads((a / "fit.json").read_text())["config"]))
    main(["fit", str(GALAXY), str(echoed), "--out", str(b), "--save-paths"])
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_seed_flag_overrides(cfg, tmp_path):
    main(["fit", str(GALAXY), str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["fit", str(GALAXY), str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "density.csv").read_bytes() != (tmp_path / "b" / "density.csv").read_bytes()
    assert json.loads((tmp_path / "a" / "fit.json").read_text())["config"]["chain"]["seed"] == 1


def test_evaluate(cfg, tmp_path, capsys):
    out = tmp_path / "fit"
    main(["fit", str(GALAXY), str(cfg), "--out", str(out), "--save-paths"])
    before = (out / "density.csv").read_bytes()
    capsys.readouterr()
    assert main(["evaluate", str(out), "--out", str(tmp_path / "ev"), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 82
    assert (tmp_path / "ev" / "density.csv").read_bytes() == before


def test_evaluate_without_paths(cfg, tmp_path):
    out = tmp_path / "fit"
    main(["fit", str(GALAXY), str(cfg), "--out", str(out)])
    assert main(["evaluate", str(out)]) == 3


def test_gamma_kernel_negative_datum(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("value\n0.5\n1.2\n-0.3\n0.7\n")
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({"model": {"process": "nig", "kappa": 0.007, "kernel": "gamma"},
                               "chain": {"iterations": 20, "burn_in": 10, "thinning": 1}}))
    assert main(["fit", str(data), str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "row 2" in capsys.readouterr().err


def test_unparseable_data(cfg, tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("1.0\nabc\n")
    assert main(["fit", str(data), str(cfg)]) == 3
    with pytest.raises(DataError) as exc:
        read_data(data)
    assert exc.value.row == 1


@pytest.mark.parametrize("raw", [
    {"model": {"process": "nig", "kapa": 0.1}},
    {"model": {"process": "nig"}, "chains": {}},
    {"model": {"process": "nig"}, "chain": {"iterations": 10, "burn_in": 20}},
    {"model": {"process": "nig", "gamma": 0.3}},
    {"model": {"process": "banana"}},
    {"model": {"process": "nig", "kernel": "gamma", "location_base": "normal"}},
])
def test_bad_config(raw, tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(raw))
    assert main(["fit", str(GALAXY), str(p)]) == 2


def test_bad_flags():
    with pytest.raises(SystemExit) as exc:
        main(["calibrate", "--process", "dirichlet", "--n", "-3", "--target-c", "2"])
    assert exc.value.code == 2


def test_calibrate_dirichlet_json(capsys):
    assert main(["calibrate", "--process", "dirichlet", "--n", "82", "--target-c", "12",
                 "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["value"] - 3.641) < 0.01 * 3.641


def test_calibrate_boundary(capsys):
    assert main(["calibrate", "--process", "dirichlet", "--n", "5", "--target-c", "1",
                 "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["at_boundary"] and out["warnings"]


def test_calibrate_invalid_target():
    assert main(["calibrate", "--process", "dirichlet", "--n", "5", "--target-c", "9"]) == 2


def test_calibrate_nstable(capsys):
    assert main(["calibrate", "--process", "nstable", "--n", "250", "--target-c", "10",
                 "--replicates", "1000", "--json", "--seed", "4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["value"] - 0.396) < 0.03


def _study(tmp_path, replicates=1, iterations=300):
    run = {"model": {"process": "nstable", "gamma": 0.396},
           "chain": {"iterations": iterations, "burn_in": 100, "thinning": 4}}
    p = tmp_path / "study.json"
    p.write_text(json.dumps({"truth": "mw01", "replicates": replicates, "n": 60, "seed": 3,
                             "grid_points": 256, "run": run}))
    return p


def test_simulate_single(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["simulate", str(_study(tmp_path)), "--out", str(out)]) == 0
    rep = json.loads((out / "study.json").read_text())
    r, agg = rep["replicates"][0], rep["aggregate"]
    assert agg["rmise"] == r["rmise"] and agg["mise_kde"] == r["mise_kde"]
    lines = (out / "replicates.csv").read_text().splitlines()
    assert lines[0] == "replicate,mise_model,mise_kde,rmise" and len(lines) == 2


def test_simulate_deterministic(tmp_path):
    p = _study(tmp_path, replicates=2)
    main(["simulate", str(p), "--out", str(tmp_path / "a")])
    main(["simulate", str(p), "--out", str(tmp_path / "b"), "--threads", "2"])
    assert (tmp_path / "a" / "study.json").read_bytes() == (tmp_path / "b" / "study.json").read_bytes()


def test_simulate_all_failed(tmp_path):
    p = tmp_path / "study.json"
    p.write_text(json.dumps({"truth": "mw01", "replicates": 1, "n": 30, "grid_points": 64,
                             "run": {"model": {"process": "nstable", "gamma": 0.396},
                                     "chain": {"iterations": 20, "burn_in": 10, "thinning": 1,
                                               "max_atoms": 2}}}))
    assert main(["simulate", str(p), "--out", str(tmp_path / "o")]) == 4


def test_module_entry_point(cfg, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nrmi_mix", "fit", str(GALAXY), str(cfg),
                           "--out", str(tmp_path / "o"), "--json"],
                          capture_output=True, text=True, env={"NRMI_MIX_LOG": "error",
                                                               "PATH": "/usr/bin:/bin"})
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["n"] == 82

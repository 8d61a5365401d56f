import hashlib
import json

import pytest

from evp_lab.cli import main, parse_ladder


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def env_file(tmp_path):
    path = tmp_path / "env.json"
    path.write_text(json.dumps({"alpha": "golden", "p_coefficients": {"logistic": {}}}))
    return path


def test_parse_ladder():
    assert parse_ladder("64..512") == [64, 128, 256, 512]
    assert parse_ladder("8,16,...,64") == [8, 16, 32, 64]
    assert parse_ladder("3,5,7") == [3, 5, 7]


def test_alpha_json(tmp_path, capsys):
    code = main(["alpha", "--value", "sqrt(2)-1", "--depth", "6",
                 "--out-dir", str(tmp_path), "--json", "a.json"])
    assert code == 0
    doc = json.loads((tmp_path / "a.json").read_text())
    # integers are written as strings so huge quotients survive JSON readers
    assert doc["result"]["rotation"]["partial_quotients"] == ["2"] * 6
    assert doc["result"]["profile"]["m0"] == 2
    assert "wrote" in capsys.readouterr().out


def test_mix_csv_and_manifest(tmp_path, env_file):
    argv = ["mix", "--env", str(env_file), "--x", "0.3", "--ns", "64..256",
            "--out-dir", str(tmp_path), "--csv", "mix.csv"]
    assert main(argv) == 0
    csv_path = tmp_path / "mix.csv"
    raw = csv_path.read_bytes()
    lines = raw.decode().split("\r\n")
    assert lines[0].startswith("# manifest_sha256=")
    assert lines[1] == "x_circle,n_steps,expectation,nu_psi,gap,fitted_slope"
    assert len([ln for ln in lines[2:] if ln]) == 3
    manifest = json.loads((tmp_path / "mix.csv.manifest.json").read_text())
    assert manifest["manifest_sha256"] == lines[0].split("=", 1)[1]
    assert manifest["outputs"][str(csv_path)] == sha256(csv_path)
    assert manifest["passed"]


def test_rerun_is_byte_identical(tmp_path, env_file):
    argv = ["mix", "--env", str(env_file), "--x", "0.1", "--ns", "32..128", "--csv"]
    assert main(argv + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out-dir", str(tmp_path / "b")]) == 0
    assert sha256(tmp_path / "a" / "mix.csv") == sha256(tmp_path / "b" / "mix.csv")


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"x": 0.3, "colour": "blue"}))
    code = main(["mix", "--config", str(cfg), "--out-dir", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config"
    assert "colour" in err["message"]


def test_flags_override_config_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"precision_bits": 128, "depth": 5, "alpha": "golden"}))
    monkeypatch.setenv("EVP_LAB_PRECISION_BITS", "256")
    assert main(["alpha", "--config", str(cfg), "--depth", "7", "--out-dir", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "alpha.json.manifest.json").read_text())
    assert manifest["config"]["precision_bits"] == 256
    assert manifest["config"]["depth"] == 7


def test_density_inline_p(tmp_path):
    code = main(["density", "--alpha", "golden", "--p", '{"constant": 0.5}', "--tol", "1e-9",
                 "--out-dir", str(tmp_path), "--out", "rho.json"])
    assert code == 0
    doc = json.loads((tmp_path / "rho.json").read_text())
    assert doc["passed"]
    assert doc["checks"][0]["passed"]


def test_poisson_certificate(tmp_path, env_file):
    code = main(["poisson", "--env", str(env_file), "--out-dir", str(tmp_path), "--out", "cert.json"])
    assert code == 0
    doc = json.loads((tmp_path / "cert.json").read_text())
    assert doc["passed"]


def test_geomsum_delta_table(tmp_path):
    code = main(["geomsum", "delta", "--s", "0.5", "--n", "64..256", "--m", "1",
                 "--out-dir", str(tmp_path), "--csv", "d.csv"])
    assert code == 0
    assert (tmp_path / "d.csv").read_text().startswith("# manifest_sha256=")


def test_library_error_exit_status(tmp_path, capsys):
    code = main(["cohomology", "--alpha", "0.125", "--psi", '{"cos": 8}', "--out-dir", str(tmp_path)])
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"] == "Resonance"

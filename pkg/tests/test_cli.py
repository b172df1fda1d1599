import json
import subprocess
import sys

import pytest

from twisted_nls.cli import main
from twisted_nls.config import config_from_dict, defaults_text, parse_config

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


@pytest.fixture(autouse=True)
def cache_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("TNLS_CACHE_DIR", str(tmp_path / "cache"))


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_print_defaults_roundtrip(capsys):
    assert main(["print-defaults"]) == 0
    text = capsys.readouterr().out
    assert text == defaults_text()
    cfg = config_from_dict(tomllib.loads(text))
    assert cfg.nonlinearity.alpha == 2.0 and cfg.model.K == 3


def test_minimal_config_fills_defaults(tmp_path):
    path = write(tmp_path, "[model]\nn = 2\nK = 3\n[nonlinearity]\nlam = 1.0\nm = 4\n"
                           "[solver]\nT = 0.5\n")
    cfg = parse_config(path)
    assert cfg.nonlinearity.alpha == 2.0
    assert cfg.model.grid_order == 8 and cfg.solver.n_steps == 64


def test_validate(tmp_path, capsys):
    assert main(["validate", write(tmp_path, 'experiment = "conserve"\n')]) == 0
    assert "config_hash=" in capsys.readouterr().out


@pytest.mark.parametrize("text, code", [
    ("[model]\nbogus = 1\n", 3),
    ("typo = 1\n", 3),
    ("[extra]\nx = 1\n", 3),
    ('[model]\nK = "3"\n', 3),
    ("[model]\nK = 2.5\n", 3),
    ("[solver]\nn_steps = 7\n", 3),
    ('experiment = "nope"\n', 3),
    ("[study]\nm_schedule = [4, 2]\n", 3),
    ("not toml at all [\n", 3),
    ('experiment = "truncation-study"\n[model]\nn = 1\n[nonlinearity]\nalpha = 2.0\n', 4),
    ('experiment = "simulate"\n[model]\nn = 1\n', 4),
])
def test_validate_exit_codes(tmp_path, text, code):
    assert main(["validate", write(tmp_path, text)]) == code


def test_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "absent.toml")]) == 2
    assert main(["run", str(tmp_path / "absent.toml")]) == 2


def test_hash_ignores_output_dir(tmp_path):
    a = parse_config(write(tmp_path, 'output_dir = "a"\n', "a.toml"))
    b = parse_config(write(tmp_path, 'output_dir = "b"\n', "b.toml"))
    c = parse_config(write(tmp_path, "seed = 1\n", "c.toml"))
    assert a.config_hash == b.config_hash != c.config_hash


def test_basis_check_artifacts(tmp_path):
    path = write(tmp_path, 'experiment = "basis-check"\n[model]\nK = 2\n')
    out = tmp_path / "out"
    assert main(["run", path, "-o", str(out)]) == 0
    h = parse_config(path).config_hash
    assert (out / f"basis-check-eigenvalues-{h}.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    for key in ("config", "iterations", "contraction_factors", "warnings"):
        assert key in summary
    assert summary["results"]["orthonormality_residual"] < 1e-8
    assert "[PASS] orthonormality" in (out / "report.txt").read_text()
    assert list((tmp_path / "cache").glob("*"))


def test_simulate_trace_csv(tmp_path):
    path = write(tmp_path, 'experiment = "simulate"\n[model]\nK = 2\n'
                           '[solver]\nn_steps = 8\nscheme = "picard"\n')
    out = tmp_path / "out"
    assert main(["run", path, "-o", str(out)]) == 0
    csv_path = next(out.glob("simulate-trace-*.csv"))
    header = csv_path.read_bytes().split(b"\r\n")[0]
    assert header == b"t,charge,energy,l2,sobolev_2,sobolev_rho"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] == len(summary["contraction_factors"]) + 1
    assert summary["results"]["mixed_norm"]["rule"] == "simpson"


def test_runs_are_byte_identical(tmp_path):
    path = write(tmp_path, 'experiment = "conserve"\nseed = 3\n[model]\nK = 2\n'
                           "[solver]\nn_steps = 16\n")
    for d in ("r1", "r2"):
        assert main(["run", path, "-o", str(tmp_path / d)]) == 0
    files = sorted(p.name for p in (tmp_path / "r1").glob("*.csv"))
    assert files
    for name in files:
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_assertion_failure_exit_1(tmp_path, capsys):
    # an impossible drift tolerance trips the check
    path = write(tmp_path, 'experiment = "conserve"\n[model]\nK = 2\n[solver]\nn_steps = 8\n'
                           "[data]\namplitude = 3.0\n[assert]\ncharge_drift = 0.0\n")
    assert main(["run", path, "-o", str(tmp_path / "o")]) == 1
    assert "charge_drift" in capsys.readouterr().err
    disabled = path.replace(".toml", "2.toml")
    with open(disabled, "w") as fh:
        fh.write(open(path).read().replace("charge_drift = 0.0", "charge_drift = 0.0\nenabled = false"))
    assert main(["run", disabled, "-o", str(tmp_path / "o2")]) == 0


def test_compute_failure_exit_5(tmp_path):
    path = write(tmp_path, 'experiment = "simulate"\n[model]\nK = 2\n'
                           "[nonlinearity]\nm = 0\n"
                           '[solver]\nT = 3.0\nn_steps = 64\nscheme = "picard"\n'
                           "[data]\namplitude = 50.0\n")
    out = tmp_path / "o"
    assert main(["run", path, "-o", str(out)]) == 5
    err = json.loads((out / "error.json").read_text())
    assert err["error"] and err["config_hash"] == parse_config(path).config_hash


def test_regime_error_at_run(tmp_path):
    path = write(tmp_path, 'experiment = "blowup"\n[model]\nn = 1\n[nonlinearity]\nalpha = 2.0\n')
    assert main(["run", path]) == 4


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "twisted_nls.cli", "print-defaults"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "[solver]" in r.stdout

import os

import numpy as np
import pytest

from wplab.cli import main
from wplab.config import load_config, parse_ladder
from wplab.errors import ConfigError


TINY_MAIN = """
[run]
experiment = main
output = {out}

[potential]
id = bump-coupling
coupling_height = 0.12
coupling_radius = 2.0

[dynamics]
d = 1
lambda = 1.0
t = 0.25
eps_ladder = 2^-2..2^-5
snapshots = 8

[packet]
x0 = -2.5
xi0 = 1.5
mode = +
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_ladder_forms():
    assert parse_ladder("2^-2..2^-4") == (0.25, 0.125, 0.0625)
    assert parse_ladder("0.25, 0.125") == (0.25, 0.125)
    with pytest.raises(ConfigError):
        parse_ladder("2^-2..oops")
    with pytest.raises(ConfigError):
        parse_ladder("1.5, 0.25")


def test_config_echo_roundtrip(tmp_path):
    cfg = load_config(write_cfg(tmp_path, TINY_MAIN.format(out="out")))
    echo_path = tmp_path / "echo.cfg"
    echo_path.write_text(cfg.echo())
    cfg2 = load_config(str(echo_path))
    assert cfg2.eps_ladder == cfg.eps_ladder
    assert cfg2.packets == cfg.packets
    assert cfg2.potential_params == cfg.potential_params
    assert cfg2.Lambda == cfg.Lambda and cfg2.T == cfg.T


def test_config_rejects_focusing(tmp_path):
    bad = TINY_MAIN.format(out="out").replace("lambda = 1.0", "lambda = -1.0")
    with pytest.raises(ConfigError, match="focusing"):
        load_config(write_cfg(tmp_path, bad))


def test_cli_config_error_exit_code(tmp_path):
    bad = TINY_MAIN.format(out="out").replace("lambda = 1.0", "lambda = -1.0")
    assert main(["run", write_cfg(tmp_path, bad)]) == 3
    assert main(["run", str(tmp_path / "missing.cfg")]) == 3


def test_cli_unknown_experiment(tmp_path):
    bad = TINY_MAIN.format(out="out").replace("experiment = main",
                                              "experiment = wat")
    assert main(["validate", write_cfg(tmp_path, bad)]) == 3


def test_cli_run_main_artifacts(tmp_path, capsys):
    out = tmp_path / "artifacts"
    code = main(["run", write_cfg(tmp_path, TINY_MAIN.format(out=out))])
    assert code == 0
    names = sorted(os.listdir(out))
    assert "config.echo" in names
    assert "fits.csv" in names
    assert "report.txt" in names
    for k in (2, 3, 4, 5):
        assert f"series_eps_{k}.csv" in names
    report = (out / "report.txt").read_text()
    assert "result: PASS" in report
    header = (out / "series_eps_2.csv").read_text().splitlines()[0]
    assert header == ("t,w_L2,w_Heps1,theta_L2,theta_Heps1,theta_L4_scaled,"
                      "minus_mass,mass_drift,g_Heps1")


def test_cli_determinism_bit_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    cfg = TINY_MAIN.format(out=out1)
    assert main(["run", write_cfg(tmp_path, cfg, "a.cfg")]) == 0
    assert main(["run", write_cfg(tmp_path, cfg, "b.cfg"),
                 "--output", str(out2)]) == 0
    for k in (2, 5):
        a = (out1 / f"series_eps_{k}.csv").read_bytes()
        b = (out2 / f"series_eps_{k}.csv").read_bytes()
        assert a == b
    assert (out1 / "fits.csv").read_bytes() == (out2 / "fits.csv").read_bytes()


def test_cli_validate_estimates(tmp_path, capsys):
    code = main(["validate", write_cfg(tmp_path, TINY_MAIN.format(out="x"))])
    assert code == 0
    text = capsys.readouterr().out
    assert "estimated total runtime" in text
    assert "gates-eps-5" in text


def test_cli_validate_resolution_failure(tmp_path, capsys):
    # huge momentum at tiny eps: no affordable grid under the memory budget
    bad = TINY_MAIN.format(out="x").replace(
        "eps_ladder = 2^-2..2^-5", "eps_ladder = 2^-9..2^-12").replace(
        "xi0 = 1.5", "xi0 = 24.0")
    code = main(["validate", write_cfg(tmp_path, bad)])
    assert code == 2
    assert "exceeds memory budget" in capsys.readouterr().out


def test_cli_validate_warns_on_failing_audit(tmp_path, capsys):
    cfg = """
[run]
experiment = audit
output = x

[potential]
id = rotation-coupling
p = 1.0

[dynamics]
d = 2

[study]
audit_box = 40.0
audit_samples = 4000
"""
    code = main(["validate", write_cfg(tmp_path, cfg)])
    assert code == 0
    assert "WARNING" in capsys.readouterr().out


def test_cli_audit_run_reports_failing_clause(tmp_path, capsys):
    cfg = """
[run]
experiment = audit
output = {out}

[potential]
id = rotation-coupling
p = 1.0

[dynamics]
d = 2

[study]
audit_box = 40.0
audit_samples = 4000
"""
    out = tmp_path / "audit"
    code = main(["run", write_cfg(tmp_path, cfg.format(out=out))])
    assert code == 2   # the gap clause fails by construction
    report = (out / "report.txt").read_text()
    assert "FAIL" in report and "audit-gap" in report
    assert (out / "audit.txt").exists()


def test_cli_interaction_run(tmp_path):
    cfg = """
[run]
experiment = interaction
output = {out}

[potential]
id = constant-diagonal

[dynamics]
d = 1
t = 4.0
eps_ladder = 2^-2..2^-6

[packet]
x0 = -2.0
xi0 = 1.0
mode = +

[packet2]
x0 = 2.0
xi0 = -1.0
mode = +

[study]
gamma = 0.25
"""
    out = tmp_path / "inter"
    code = main(["run", write_cfg(tmp_path, cfg.format(out=out))])
    assert code == 0
    report = (out / "report.txt").read_text()
    assert "interval-identity" in report and "interval-order" in report
    assert (out / "interaction.csv").exists()


def test_cli_requires_two_packets_for_superposition(tmp_path):
    bad = TINY_MAIN.format(out="x").replace("experiment = main",
                                            "experiment = superposition_diff")
    assert main(["run", write_cfg(tmp_path, bad)]) == 3

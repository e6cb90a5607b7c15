import csv
import filecmp
import math
import os

import pytest
from hypothesis import given, settings, strategies as st

from eventbell import cli, experiments
from eventbell.config import RunConfig, parse_config, render, validate
from eventbell.errors import ConfigError

MIN_PHOTON = "[run]\nexperiment = photon_I\n"


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def write_cfg(tmp_path, body, name="run.cfg"):
    p = tmp_path / name
    p.write_text("[run]\n" + body)
    return str(p)


def test_defaults():
    cfg = parse_config(MIN_PHOTON)
    assert cfg.T0 == 1000.0 and cfg.tau == 1.0 and cfg.W == (1.0,)
    assert cfg.n_pairs == 1_000_000 and cfg.seed == 0
    assert cfg.gamma == 0.99 and cfg.R == 0.2


def test_expressions():
    cfg = parse_config(MIN_PHOTON + "a1 = pi/4\neta2 = 90deg\nphi = linspace(0, 2*pi, 33)\nW = 1, 2, 1e3\n")
    assert cfg.a1 == pytest.approx(math.pi / 4)
    assert cfg.eta2 == pytest.approx(math.pi / 2)
    assert len(cfg.phi) == 33 and cfg.phi[-1] == pytest.approx(2 * math.pi)
    assert cfg.W == (1.0, 2.0, 1000.0)


@pytest.mark.parametrize(
    "body,match",
    [
        ("experiment = neutron\ngamma = 1.5\n", "gamma"),
        ("experiment = neutron\ngamma = 0.5\ngamma = 0.6\n", "parse error"),
        ("experiment = neutron\nbogus = 1\n", "line 3"),
        ("experiment = photon_IV\n", "experiment"),
        ("seed = 1\n", "experiment"),
        ("experiment = photon_I\nW = 0.5\n", "W"),
        ("experiment = photon_II\neta1 = 0\neta2 = 80deg\n", "eta2"),
        ("experiment = photon_I\nn_pairs = 1.5\n", "n_pairs"),
        ("experiment = photon_I\na1 = __import__('os')\n", "a1"),
        ("experiment = photon_I\nW = 1, 2\nmin_coincidences = 10\n", "single window"),
        ("experiment = neutron\nchsh_settings = 0, 1\n", "chsh_settings"),
    ],
)
def test_config_errors(body, match):
    with pytest.raises(ConfigError, match=match):
        parse_config("[run]\n" + body)


def test_two_sections_rejected():
    with pytest.raises(ConfigError):
        parse_config(MIN_PHOTON + "[other]\nx = 1\n")


angles = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["photon_I", "photon_III", "neutron", "neutron_random_chi"]),
    st.integers(0, 2**64 - 1),
    st.integers(1, 10**9),
    st.floats(0.01, 1e4),
    angles, angles,
    st.lists(angles, max_size=5).map(tuple),
    st.floats(0.01, 0.99), st.floats(0.01, 0.99),
    st.one_of(st.none(), st.integers(0, 10**6)),
    st.lists(angles, min_size=1, max_size=4).map(tuple),
    st.booleans(),
)
def test_render_roundtrip(exp, seed, n, T0, a1, eta1, phi, gamma, R, warm, alpha, flip):
    cfg = validate(RunConfig(exp, seed=seed, n_pairs=n, T0=T0, a1=a1, eta1=eta1, eta2=eta1 + 1.0,
                             phi=phi, gamma=gamma, R=R, n_warmup=warm, alpha=alpha, flipper=flip))
    assert parse_config(render(cfg)) == cfg


def test_photon_II_roundtrip():
    cfg = parse_config(MIN_PHOTON.replace("photon_I", "photon_II") + "eta1 = 15deg\neta2 = 105deg\n")
    assert parse_config(render(cfg)) == cfg


def test_phi_sweep_row_counts(tmp_path):
    cfg = parse_config(MIN_PHOTON + "n_pairs = 2000\n")
    values = [k * math.pi / 16 for k in range(33)]
    experiments.sweep(cfg, "phi", values, str(tmp_path))
    rows = read_rows(tmp_path / "sweep.csv")
    assert sum(r["W"] == "1.0" for r in rows) == 33
    assert sum(r["W"] == "inf" for r in rows) == 33
    assert {float(r["value"]) for r in rows} == set(values)


def test_W_sweep_monotone(tmp_path):
    cfg = parse_config(MIN_PHOTON + "n_pairs = 20000\na1p = 0\na2 = 0\na2p = 0\n")
    Ws = [1, 2, 5, 10, 100, 1000, 10000]
    experiments.sweep(cfg, "W", Ws, str(tmp_path))
    rows = read_rows(tmp_path / "sweep.csv")
    assert [float(r["W"]) for r in rows] == Ws
    nc = [int(r["Nc"]) for r in rows]
    assert nc == sorted(nc) and nc[-1] == 20000


def test_sweep_errors(tmp_path):
    cfg = parse_config(MIN_PHOTON)
    with pytest.raises(ConfigError, match="unknown sweep parameter"):
        experiments.sweep(cfg, "temperature", [1.0], str(tmp_path))
    with pytest.raises(ConfigError):
        experiments.sweep(cfg, "gamma", [0.5], str(tmp_path))
    with pytest.raises(ConfigError):
        experiments.sweep(cfg, "eta", [0.5], str(tmp_path))


def test_neutron_sweep(tmp_path):
    cfg = parse_config("[run]\nexperiment = neutron\nn_per_setting = 500\nalpha = 0, pi/2\nchi = 0\n")
    experiments.sweep(cfg, "gamma", [0.55, 0.9], str(tmp_path))
    assert len(read_rows(tmp_path / "sweep.csv")) == 4
    chsh = read_rows(tmp_path / "sweep_chsh.csv")
    assert [r["value"] for r in chsh] == ["0.55", "0.9"]


def test_cli_run_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "experiment = photon_I\nn_pairs = 5000\nW = 1, 10\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["run", "--config", cfg, "--out", str(b)]) == 0
    names = sorted(os.listdir(a))
    assert "correlations.csv" in names and "comparison.csv" in names and "chsh.csv" in names
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert not mismatch and not errors
    assert cli.main(["run", "--config", cfg, "--out", str(b), "--seed", "1"]) == 0
    assert not filecmp.cmp(a / "correlations.csv", b / "correlations.csv", shallow=False)


def test_cli_env_out(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, "experiment = neutron\nn_per_setting = 200\n")
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["oracle", "--config", cfg]) == 0
    rows = read_rows(tmp_path / "env" / "neutron.csv")
    assert float(rows[0]["E"]) == 1.0
    assert cli.main(["run", "--config", cfg]) == 0
    assert (tmp_path / "env" / "comparison.csv").exists()


def test_cli_analyze(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "experiment = photon_I\nn_pairs = 5000\nsave_logs = true\n")
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    prefix = str(tmp_path / "r" / "run")
    assert cli.main(["analyze", "--logs", prefix, "--W", "1, 1000", "--out", str(tmp_path / "z")]) == 0
    rows = read_rows(tmp_path / "z" / "correlations.csv")
    assert {r["W"] for r in rows} == {"1.0", "1000.0", "inf"}
    assert len(read_rows(tmp_path / "z" / "chsh.csv")) == 3
    assert "S=" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    bad = write_cfg(tmp_path, "experiment = neutron\ngamma = 1.5\n")
    assert cli.main(["run", "--config", bad]) == 2
    assert "gamma" in capsys.readouterr().err
    ok = write_cfg(tmp_path, "experiment = photon_I\n", "ok.cfg")
    assert cli.main(["sweep", "--config", ok, "--parameter", "zzz", "--values", "1", "--out", str(tmp_path)]) == 2

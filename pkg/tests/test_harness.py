import json

import numpy as np
import pytest

from hypostrat import cli
from hypostrat import harness as hz
from hypostrat import spectral as sp

SIM = """
[run]
scenario = "simulate"
seed = 7
[params]
nu = 0.02
kappa = 0.02
[consts]
c = 0.0097
[grid]
nk = 32
neta = 32
dk = 0.25
deta = 0.5
[time]
t_end = 5.0
dt = 0.25
snapshot_every = 10
[init]
recipe = "random"
k_max = 1.5
eta_max = 3.0
zeta = 0.01
[checks]
monotone = true
"""


@pytest.fixture
def sim_config(tmp_path):
    path = tmp_path / "sim.toml"
    path.write_text(SIM)
    return path


def load(path, out, *sets):
    return hz.RunConfig.load(path, list(sets), out=out)


# ---------------------------------------------------------------- config

def test_defaults_and_overrides(tmp_path):
    cfg = hz.RunConfig.load(None, ["params.nu=0.03", "init.recipe=single", "sweep.k=[1.0, 2.0]"])
    assert cfg["params"]["nu"] == 0.03
    assert cfg["init"]["recipe"] == "single"
    assert cfg["sweep"]["k"] == [1.0, 2.0]
    assert cfg.scenario == "check-constants"


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[params]\nnu = = 1\n")
    with pytest.raises(hz.ConfigError, match="line 2"):
        hz.RunConfig.load(bad)
    with pytest.raises(hz.ConfigError, match="unknown key params.mu"):
        hz.RunConfig.load(None, ["params.mu=1"])
    with pytest.raises(hz.ConfigError, match="unknown table"):
        hz.RunConfig.from_dict({"nope": {}})
    with pytest.raises(hz.ConfigError, match="scenario"):
        hz.RunConfig.load(None, ["run.scenario=dance"])
    with pytest.raises(hz.ConfigError, match="time.dt"):
        hz.RunConfig.load(None, ["time.dt=0"])
    with pytest.raises(hz.ConfigError):
        hz.RunConfig.load(None, ["nodot"])
    with pytest.raises(hz.ConfigError, match="fit.source"):
        hz.RunConfig.load(None, scenario="fit-rates")


def test_worker_count(monkeypatch):
    monkeypatch.setenv(hz.WORKERS_ENV, "3")
    assert hz.RunConfig.load(None).workers() == 3
    assert hz.RunConfig.load(None, ["run.workers=2"]).workers() == 2
    monkeypatch.delenv(hz.WORKERS_ENV)
    assert hz.RunConfig.load(None).workers() == 1


def test_delta_sets_zeta():
    cfg = hz.RunConfig.load(None, ["init.delta=0.05", "params.nu=0.02", "params.kappa=0.02"])
    params = hz.build_params(cfg)
    consts = hz.build_consts(cfg, params)
    fcfg = hz.build_field_config(cfg, params, consts)
    assert fcfg.zeta == pytest.approx(0.05 * params.mu ** 0.55)


# ---------------------------------------------------------------- scenarios

def test_check_constants(tmp_path):
    m = hz.run(hz.RunConfig.load(None, ["consts.preset=repaired"], out=tmp_path / "a"))
    assert m.passed
    text = (tmp_path / "a" / "constants.csv").read_text().splitlines()
    assert text[0] == "condition,margin,passed"
    assert all(line.endswith(",1") for line in text[1:])
    m = hz.run(hz.RunConfig.load(None, out=tmp_path / "b"))
    assert not m.passed and m.checks == {"smallness_tau": True, "smallness_alpha": True,
                                         "smallness_beta": False}


def test_manifest_lists_files_with_checksums(tmp_path):
    out = tmp_path / "a"
    m = hz.run(hz.RunConfig.load(None, out=out))
    data = json.loads((out / "manifest.json").read_text())
    assert data["version"] and data["wall_clock"] >= 0
    assert {f["path"] for f in data["files"]} == {"constants.csv"}
    import hashlib
    assert data["files"][0]["sha256"] == hashlib.sha256((out / "constants.csv").read_bytes()).hexdigest()
    assert data["config"]["run"]["out"] == str(out)
    # no orphan files
    assert {p.name for p in out.iterdir()} == {"constants.csv", "manifest.json"}


def test_simulate_zero_data(tmp_path, sim_config):
    m = hz.run(load(sim_config, tmp_path / "z", "init.recipe=zero", "time.t_end=1.0"))
    assert m.passed
    led = np.loadtxt(tmp_path / "z" / "ledger.csv", delimiter=",", skiprows=1)
    assert np.all(led[:, 1:] == 0)


def test_simulate_deterministic(tmp_path, sim_config):
    a = hz.run(load(sim_config, tmp_path / "a"))
    b = hz.run(load(sim_config, tmp_path / "b"))
    assert a.passed and b.passed
    for name in ("ledger.csv", "norms.csv", "final.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    listed = {f["path"] for f in a.files}
    assert listed == {"ledger.csv", "norms.csv", "final.bin", "snapshot_000010.bin"}
    assert listed | {"manifest.json"} == {p.name for p in (tmp_path / "a").iterdir()}


def test_resume_matches_unbroken_run(tmp_path, sim_config):
    full = load(sim_config, tmp_path / "full", "time.t_end=5.0")
    hz.run(full)
    first = load(sim_config, tmp_path / "first", "time.t_end=2.5")
    hz.run(first)
    m = hz.resume(tmp_path / "first" / "final.bin", 5.0, out=tmp_path / "second")
    assert m.scenario == "resume"
    a = sp.EnergyLedger.read_csv(tmp_path / "full" / "ledger.csv", c=0.0097)
    b = sp.EnergyLedger.read_csv(tmp_path / "second" / "ledger.csv", c=0.0097)
    assert len(a.rows) == len(b.rows)
    assert b.rows[-1]["E"] == pytest.approx(a.rows[-1]["E"], rel=1e-8)
    np.testing.assert_allclose(b.column("G"), a.column("G"), rtol=1e-8)


def test_resume_guards(tmp_path, sim_config):
    hz.run(load(sim_config, tmp_path / "a", "time.t_end=1.0"))
    snap = tmp_path / "a" / "final.bin"
    with pytest.raises(hz.ResumeError, match="params"):
        hz.resume(snap, 2.0, ["params.nu=0.03"], out=tmp_path / "b")
    with pytest.raises(hz.ResumeError, match="grid"):
        hz.resume(snap, 2.0, ["grid.nk=64"], out=tmp_path / "b")
    with pytest.raises(hz.ResumeError, match="precedes"):
        hz.resume(snap, 0.5, out=tmp_path / "b")
    data = bytearray(snap.read_bytes())
    data[-3] ^= 1
    bad = tmp_path / "bad.bin"
    bad.write_bytes(bytes(data))
    with pytest.raises(hz.ResumeError, match="checksum"):
        hz.resume(bad, 2.0, out=tmp_path / "b")


def test_resume_noop(tmp_path, sim_config):
    hz.run(load(sim_config, tmp_path / "a", "time.t_end=1.0"))
    m = hz.resume(tmp_path / "a" / "final.bin", 1.0, out=tmp_path / "n")
    assert m.files == [] and m.summary["noop"] and m.passed
    assert (tmp_path / "n" / "manifest.json").exists()


def test_sweep_and_fit(tmp_path, sim_config):
    m = hz.run(hz.RunConfig.load(None, ["sweep.k=[0.5, 1.0]"], scenario="sweep-modes",
                                 out=tmp_path / "s"))
    assert m.passed
    lines = (tmp_path / "s" / "rates.csv").read_text().splitlines()
    assert lines[0] == "k,eta,c_certified,worst_margin,fitted_rate,rate_over_lambda"
    assert len(lines) == 3

    hz.run(load(sim_config, tmp_path / "sim", "time.t_end=5.0"))
    m = hz.run(hz.RunConfig.load(None, [f"fit.source='{tmp_path / 'sim' / 'norms.csv'}'",
                                        "fit.window=[1.0, 5.0]"],
                                 scenario="fit-rates", out=tmp_path / "f"))
    rows = (tmp_path / "f" / "fits.csv").read_text().splitlines()
    assert rows[0] == "quantity,window_start,window_end,exponent,stderr"
    assert [r.split(",")[0] for r in rows[1:]] == ["dxu1", "u2", "growth"]


def test_certify_scenario(tmp_path):
    sets = ["certify.k_min=0.5", "certify.k_max=1.0", "certify.n_k=2", "certify.n_eta=2",
            "certify.eta_min=0.0", "certify.eta_max=5.0", "certify.t1=20.0",
            "certify.n_times=401", "certify.min_c=1e-4", "run.workers=2"]
    m = hz.run(hz.RunConfig.load(None, sets, scenario="certify-linear", out=tmp_path / "c"))
    assert m.passed, m.summary
    assert m.summary["consts"]["c"] == m.summary["c_certified"]
    assert len((tmp_path / "c" / "certification.csv").read_text().splitlines()) == 5


def test_certify_scenario_reports_integrated_failure(tmp_path):
    # at (k, eta) = (1, -2) the time-integrated estimate with the 1/(2R) coefficient
    # exceeds E(0) by about 0.1%, while the pointwise inequality certifies
    sets = ["certify.k_min=1.0", "certify.k_max=1.0", "certify.n_k=1", "certify.n_eta=1",
            "certify.eta_min=-2.0", "certify.eta_max=-2.0", "certify.t1=20.0",
            "certify.n_times=2001"]
    m = hz.run(hz.RunConfig.load(None, sets, scenario="certify-linear", out=tmp_path / "c"))
    assert m.checks == {"margins": True, "integrated": False}
    assert 1.0 < m.summary["max_integrated_ratio"] < 1.01


# ---------------------------------------------------------------- CLI

def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["check-constants", "--set", "consts.preset=repaired",
                     "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["check-constants", "--out", str(tmp_path / "b")]) == 1
    assert cli.main(["check-constants", "--set", "params.bogus=1"]) == 2
    err = capsys.readouterr().err
    assert "unknown key params.bogus" in err


def test_cli_simulate_and_resume(tmp_path, sim_config):
    out = tmp_path / "s"
    assert cli.main(["simulate", "--config", str(sim_config), "--out", str(out),
                     "--set", "time.t_end=1.0"]) == 0
    assert cli.main(["resume", str(out / "final.bin"), "--t-end", "1.5",
                     "--out", str(tmp_path / "r")]) == 0
    assert cli.main(["resume", str(out / "final.bin"), "--t-end", "1.5",
                     "--set", "params.kappa=0.03"]) == 2

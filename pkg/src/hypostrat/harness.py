"""Configuration, scenario dispatch, persistence and run manifests.

A run is described by a TOML file with the tables ``[run]``, ``[params]``,
``[consts]``, ``[grid]``, ``[time]``, ``[init]``, ``[certify]``, ``[sweep]``
and ``[fit]``; any key can be overridden from the command line as a dotted
``table.key=value`` pair.  Every scenario writes its outputs plus a
``manifest.json`` listing each file with its SHA-256.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from . import linear_mode as lm
from . import norms
from . import spectral as sp
from .params import (HypoConstants, PhysParams, check_smallness, default_constants,
                     repaired_constants, validate_diffusion)

log = logging.getLogger(__name__)

SCENARIOS = ("certify-linear", "sweep-modes", "simulate", "fit-rates", "check-constants")
WORKERS_ENV = "HYPOSTRAT_WORKERS"
PRESETS = {"default": default_constants, "repaired": repaired_constants}

DEFAULTS = {
    "run": {"scenario": "check-constants", "out": "out", "seed": 0, "workers": None},
    "params": {"nu": 0.01, "kappa": 0.01, "richardson": 1.0, "epsilon": 0.1},
    "consts": {"preset": "default", "c_tau": None, "c_alpha": None, "c_beta": None, "c": None,
               "n": 0.0, "m": 1.0, "J": 1.0, "delta_star": 0.05},
    "grid": {"nk": 64, "neta": 64, "dk": 0.25, "deta": 0.25},
    "time": {"t_end": 10.0, "dt": 0.1, "tol": 1e-10, "h_lin": 0.02, "nonlinear": True,
             "exact_linear": False, "ledger_every": 1, "snapshot_every": 0,
             "cfl_max": 1.0, "max_edge_fraction": None},
    "init": {"recipe": "gaussian", "zeta": None, "delta": None, "k0": 0.5, "eta0": 0.0,
             "width_k": 0.25, "width_eta": 1.0, "k_max": 1.0, "eta_max": 4.0,
             "theta_ratio": 1.0, "theta_phase": 0.0, "amplitude": 1.0, "taylor": False},
    "certify": {"k_min": 1e-3, "k_max": 10.0, "n_k": 16, "k_spacing": "log",
                "eta_min": -50.0, "eta_max": 50.0, "n_eta": 33, "t0": 0.0, "t1": 200.0,
                "n_random": 8, "n_times": 4001, "min_c": None},
    "sweep": {"k": [0.25, 0.5, 1.0, 2.0, 4.0], "eta0": 0.0, "t_end": None, "tau": 1.0,
              "n_samples": 801},
    "fit": {"source": None, "kind": "power", "window": [20.0, 200.0],
            "quantities": ["dxu1", "u2", "growth"]},
    "checks": {"monotone": False, "slack": 1e-3},
}


class ConfigError(ValueError):
    pass


class ResumeError(ValueError):
    pass


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    """A fully merged configuration (nested dicts, defaults applied)."""

    data: dict

    @property
    def scenario(self):
        return self.data["run"]["scenario"]

    @property
    def out(self):
        return Path(self.data["run"]["out"])

    def __getitem__(self, table):
        return self.data[table]

    def to_toml_like(self):
        return json.loads(json.dumps(self.data))

    @classmethod
    def from_dict(cls, user: dict, source="<dict>"):
        data = copy.deepcopy(DEFAULTS)
        for table, values in user.items():
            if table not in data:
                raise ConfigError(f"{source}: unknown table [{table}]")
            if not isinstance(values, dict):
                raise ConfigError(f"{source}: [{table}] must be a table")
            for key, v in values.items():
                if key not in data[table]:
                    raise ConfigError(f"{source}: unknown key {table}.{key}")
                data[table][key] = v
        cfg = cls(data)
        cfg.validate(source)
        return cfg

    @classmethod
    def load(cls, path=None, overrides=(), scenario=None, out=None):
        user = {}
        source = str(path) if path else "<defaults>"
        if path is not None:
            try:
                with open(path, "rb") as fh:
                    user = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        for item in overrides:
            _apply_override(user, item)
        if scenario is not None:
            user.setdefault("run", {})["scenario"] = scenario
        if out is not None:
            user.setdefault("run", {})["out"] = str(out)
        return cls.from_dict(user, source)

    def validate(self, source="<config>"):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"{source}: run.scenario must be one of {SCENARIOS}, "
                              f"got {self.scenario!r}")
        for table, key in (("grid", "nk"), ("grid", "neta")):
            if not isinstance(self.data[table][key], int):
                raise ConfigError(f"{source}: {table}.{key} must be an integer")
        for key in ("t_end", "dt", "tol"):
            v = self.data["time"][key]
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"{source}: time.{key} must be positive")
        if self.scenario == "fit-rates" and not self.data["fit"]["source"]:
            raise ConfigError(f"{source}: fit-rates needs fit.source")

    def workers(self):
        w = self.data["run"]["workers"]
        if w is None:
            env = os.environ.get(WORKERS_ENV)
            w = int(env) if env else 1
        return max(1, int(w))


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _apply_override(user, item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form table.key=value")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    if len(parts) != 2:
        raise ConfigError(f"override key {key!r} must be table.key")
    user.setdefault(parts[0], {})[parts[1]] = _parse_value(value.strip())


# ---------------------------------------------------------------- builders

def build_params(cfg: RunConfig) -> PhysParams:
    p = cfg["params"]
    if p["nu"] == 0 and p["kappa"] == 0:
        return PhysParams.inviscid(p["richardson"], p["epsilon"])
    return PhysParams(p["nu"], p["kappa"], p["richardson"], p["epsilon"])


def build_consts(cfg: RunConfig, params: PhysParams) -> HypoConstants:
    c = cfg["consts"]
    indices = {k: c[k] for k in ("n", "m", "J", "delta_star")}
    if c["preset"] not in PRESETS:
        raise ConfigError(f"consts.preset must be one of {tuple(PRESETS)}")
    consts = PRESETS[c["preset"]](params.richardson, params.epsilon, **indices)
    over = {k: c[k] for k in ("c_tau", "c_alpha", "c_beta") if c[k] is not None}
    if over:
        consts = consts.with_(**over)
        consts = consts.with_(admissible=check_smallness(consts, params.richardson,
                                                         params.epsilon).passed)
    if c["c"] is not None:
        consts = consts.with_(c=float(c["c"]))
    return consts


def build_field_config(cfg: RunConfig, params: PhysParams, consts: HypoConstants):
    g, i = cfg["grid"], cfg["init"]
    zeta = i["zeta"]
    if i["delta"] is not None:
        if params.mu <= 0:
            raise ConfigError("init.delta needs a viscous run (mu > 0)")
        zeta = i["delta"] * params.mu ** (0.5 + consts.delta_star)
    ratio = complex(i["theta_ratio"]) * np.exp(1j * i["theta_phase"])
    return sp.FieldConfig(
        nk=g["nk"], neta=g["neta"], dk=g["dk"], deta=g["deta"], recipe=i["recipe"],
        zeta=zeta, k0=i["k0"], eta0=i["eta0"], width_k=i["width_k"], width_eta=i["width_eta"],
        k_max=i["k_max"], eta_max=i["eta_max"], theta_ratio=ratio, amplitude=i["amplitude"],
        seed=cfg["run"]["seed"], n=consts.n, m=consts.m, taylor=i["taylor"])


def certify_grids(cfg: RunConfig):
    c = cfg["certify"]
    if c["k_spacing"] == "log":
        k = np.logspace(math.log10(c["k_min"]), math.log10(c["k_max"]), c["n_k"])
    else:
        k = np.linspace(c["k_min"], c["k_max"], c["n_k"])
    eta = np.linspace(c["eta_min"], c["eta_max"], c["n_eta"])
    return k, eta


# ---------------------------------------------------------------- manifest

@dataclass
class RunManifest:
    config: dict
    version: str
    scenario: str
    wall_clock: float
    files: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.checks.values())

    def as_dict(self):
        return {"config": self.config, "version": self.version, "scenario": self.scenario,
                "wall_clock": self.wall_clock, "files": self.files, "checks": self.checks,
                "passed": self.passed, "summary": self.summary}

    def write(self, out: Path):
        path = out / "manifest.json"
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o)}")


def file_record(path: Path, root: Path):
    data = path.read_bytes()
    return {"path": str(path.relative_to(root)), "bytes": len(data),
            "sha256": hashlib.sha256(data).hexdigest()}


# ---------------------------------------------------------------- scenarios

def run(config: RunConfig) -> RunManifest:
    """Execute ``config`` and write its outputs and manifest under ``run.out``."""
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    handler = _SCENARIO_FUNCS[config.scenario]
    files, checks, summary = handler(config, out)
    manifest = RunManifest(config.to_toml_like(), __version__, config.scenario,
                           time.perf_counter() - t0,
                           [file_record(out / f, out) for f in files], checks, summary)
    manifest.write(out)
    return manifest


def _check_constants(cfg, out):
    params = build_params(cfg)
    consts = build_consts(cfg, params)
    rep = check_smallness(consts, params.richardson, params.epsilon)
    names = ("tau", "alpha", "beta")
    margins = (rep.tau_margin, rep.alpha_margin, rep.beta_margin)
    path = out / "constants.csv"
    with open(path, "w") as fh:
        fh.write("condition,margin,passed\n")
        for n, m, ok in zip(names, margins, rep.flags):
            fh.write(f"{n},{m!r},{int(ok)}\n")
    checks = {f"smallness_{n}": bool(ok) for n, ok in zip(names, rep.flags)}
    return ["constants.csv"], checks, {"consts": consts.as_dict()}


def _certify(cfg, out):
    params = build_params(cfg)
    if not params.is_inviscid and not validate_diffusion(params):
        raise ConfigError("certify-linear needs parameters satisfying the diffusion condition")
    consts = build_consts(cfg, params)
    k, eta = certify_grids(cfg)
    c = cfg["certify"]
    sampler = lambda: lm.sample_states(c["n_random"], rng=cfg["run"]["seed"])
    rep = lm.certify_grid(params, consts, k, eta, (c["t0"], c["t1"]), sampler,
                          n_times=c["n_times"], tol=cfg["time"]["tol"],
                          workers=cfg.workers())
    consts = rep.store(consts)
    lm.write_certification_csv(rep, out / "certification.csv")
    checks = {"margins": rep.c_certified > 0 and rep.margins_ok and not rep.failures,
              "integrated": rep.integrated_ok}
    if c["min_c"] is not None:
        checks["min_c"] = rep.c_certified >= c["min_c"]
    summary = {"c_certified": rep.c_certified, "c1_max": rep.c1_max, "c0_max": rep.c0_max,
               "min_coercivity": rep.min_coercivity,
               "max_integrated_ratio": float(rep.integrated_ratio.max()),
               "failures": rep.failures, "consts": consts.as_dict()}
    return ["certification.csv"], checks, summary


def _sweep(cfg, out):
    params = build_params(cfg)
    consts = build_consts(cfg, params)
    s = cfg["sweep"]
    res = lm.sweep_rates(params, s["k"], s["eta0"], s["t_end"], consts=consts,
                         n_samples=s["n_samples"], tol=cfg["time"]["tol"], tau=s["tau"])
    path = out / "rates.csv"
    with open(path, "w") as fh:
        fh.write("k,eta,c_certified,worst_margin,fitted_rate,rate_over_lambda\n")
        for r in res:
            fh.write(f"{r.k!r},{float(s['eta0'])!r},,,{r.rate!r},{r.ratio!r}\n")
    checks = {"fits": all(r.ok for r in res)}
    return ["rates.csv"], checks, {"ratios": [r.ratio for r in res]}


def _fit(cfg, out):
    f = cfg["fit"]
    src = Path(f["source"])
    data = np.genfromtxt(src, delimiter=",", names=True)
    t = data["t"]
    fitter = norms.fit_power if f["kind"] == "power" else norms.fit_exponential
    fits = {q: fitter(t, data[q], window=tuple(f["window"])) for q in f["quantities"]}
    norms.write_rate_csv(fits, out / "fits.csv")
    return ["fits.csv"], {}, {q: (v.exponent if f["kind"] == "power" else v.rate)
                              for q, v in fits.items()}


# ---------------------------------------------------------------- simulate

NORM_COLUMNS = ("t", "growth", "dxu1", "u2", "dxu2", "int_dxu2")


def _norm_spec(params, consts):
    return norms.NormSpec("V", n=consts.n, m=consts.m, J=consts.J, c=consts.c,
                          mu=params.mu, nu=params.nu)


class _Recorder:
    """Ledger and norm series for one simulation, with CSV writers."""

    def __init__(self, params, consts, zeta, ledger=None, norm_rows=None):
        self.params, self.consts = params, consts
        self.spec = _norm_spec(params, consts)
        self.ledger = ledger or sp.EnergyLedger(c=consts.c, zeta=zeta)
        self.norm_rows = norm_rows or []

    def record(self, fld):
        self.ledger.append(sp.ledger_update(fld, self.consts))
        q = norms.theorem_quantities(fld.omega_hat, fld.theta_hat, fld.grid.k, fld.grid.eta,
                                     fld.t, self.spec, self.params.richardson)
        integrand = math.sqrt(1.0 + fld.t ** 2) * q["dxu2"] ** 2
        if self.norm_rows:
            prev = self.norm_rows[-1]
            acc = prev["int_dxu2"] + 0.5 * (fld.t - prev["t"]) * (integrand + prev["_integrand"])
        else:
            acc = 0.0
        self.norm_rows.append({"t": fld.t, **q, "int_dxu2": acc, "_integrand": integrand})

    def write(self, out):
        self.ledger.write_csv(out / "ledger.csv")
        with open(out / "norms.csv", "w") as fh:
            fh.write(",".join(NORM_COLUMNS) + "\n")
            for r in self.norm_rows:
                fh.write(",".join(repr(float(r[c])) for c in NORM_COLUMNS) + "\n")


def _read_norm_rows(path):
    rows = []
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    for vals in data:
        r = dict(zip(NORM_COLUMNS, map(float, vals)))
        r["_integrand"] = math.sqrt(1.0 + r["t"] ** 2) * r["dxu2"] ** 2
        rows.append(r)
    return rows


def _advance(fld, cfg, rec, t_end, out, workers):
    tm = cfg["time"]
    dt = tm["dt"]
    n_steps = int(round((t_end - fld.t) / dt))
    snap_every = tm["snapshot_every"]
    led_every = max(1, tm["ledger_every"])
    guard = tm["max_edge_fraction"]
    snaps = []
    if tm["exact_linear"]:
        times = fld.t + dt * np.arange(1, n_steps + 1)
        for i, g in enumerate(sp.linear_evolution(fld, times, tol=tm["tol"]), start=1):
            if i % led_every == 0 or i == n_steps:
                rec.record(g)
            fld = g
        return fld, snaps
    for i in range(1, n_steps + 1):
        fld = sp.step(fld, dt, nonlinear=tm["nonlinear"], h_lin=tm["h_lin"],
                      workers=workers, cfl_max=tm["cfl_max"])
        if guard is not None:
            sp.check_resolution(fld, guard)
        if i % led_every == 0 or i == n_steps:
            rec.record(fld)
        if snap_every and i % snap_every == 0 and i != n_steps:
            name = f"snapshot_{int(round(fld.t / dt)):06d}.bin"
            sp.save_snapshot(fld, out / name, extra={"config": _snapshot_config(cfg)})
            snaps.append(name)
    return fld, snaps


def _simulate(cfg, out):
    params = build_params(cfg)
    if not params.is_inviscid and not validate_diffusion(params):
        raise ConfigError("simulate needs parameters satisfying the diffusion condition")
    consts = build_consts(cfg, params)
    fcfg = build_field_config(cfg, params, consts)
    fld = sp.init_field(fcfg, params, consts)
    zeta = fcfg.zeta if fcfg.zeta is not None else sp.data_size(
        fld.omega_hat, fld.theta_hat, fld.grid, 0.0, sp.initial_norm_spec(fcfg, params),
        params.richardson)
    rec = _Recorder(params, consts, zeta)
    rec.record(fld)
    fld, snaps = _advance(fld, cfg, rec, cfg["time"]["t_end"], out, cfg.workers())
    return _finish_sim(cfg, out, fld, rec, snaps)


def _snapshot_config(cfg):
    # the output directory is left out so snapshots are byte-identical across locations
    data = cfg.to_toml_like()
    data["run"].pop("out")
    return data


def _finish_sim(cfg, out, fld, rec, snaps):
    rec.write(out)
    sp.save_snapshot(fld, out / "final.bin", extra={"config": _snapshot_config(cfg)})
    mon = sp.bootstrap_monitor(rec.ledger, slack=cfg["checks"]["slack"])
    checks = {"monotone": mon.passed} if cfg["checks"]["monotone"] else {}
    summary = {"t": fld.t, "zeta": rec.ledger.zeta, "E_final": rec.ledger.rows[-1]["E"],
               "monotone": mon.passed, "first_violation": mon.first_violation,
               "max_excess": mon.max_excess,
               "largest_monotone_c": sp.largest_monotone_c(rec.ledger, cfg["checks"]["slack"])}
    return ["ledger.csv", "norms.csv", "final.bin", *snaps], checks, summary


_SCENARIO_FUNCS = {
    "check-constants": _check_constants,
    "certify-linear": _certify,
    "sweep-modes": _sweep,
    "simulate": _simulate,
    "fit-rates": _fit,
}


def resume(snapshot_path, t_end, overrides=None, out=None) -> RunManifest:
    """Continue a simulation from a snapshot to ``t_end``.

    The ledger and norm CSVs next to the snapshot are extended.  ``overrides``
    (dotted keys) may change stepping options but not physical parameters or
    the lattice.

    Raises
    ------
    ResumeError
        On a checksum, parameter or grid mismatch, or a ``t_end`` before the
        snapshot time.
    """
    snapshot_path = Path(snapshot_path)
    try:
        fld, head = sp.load_snapshot(snapshot_path)
    except sp.SnapshotError as exc:
        raise ResumeError(str(exc)) from None
    base = head.get("extra", {}).get("config")
    if base is None:
        raise ResumeError("snapshot carries no run configuration")
    cfg0 = RunConfig.from_dict({k: v for k, v in base.items()}, str(snapshot_path))
    user = copy.deepcopy(cfg0.data)
    for item in overrides or ():
        _apply_override(user, item)
    user["run"]["out"] = str(out if out is not None else snapshot_path.parent)
    cfg = RunConfig.from_dict(user, str(snapshot_path))
    for table in ("params", "grid"):
        if cfg[table] != cfg0[table]:
            raise ResumeError(f"[{table}] differs from the snapshot")
    if build_params(cfg) != fld.params:
        raise ResumeError("physical parameters differ from the snapshot")
    if t_end < fld.t:
        raise ResumeError(f"t_end {t_end} precedes snapshot time {fld.t}")
    out_dir = cfg.out
    out_dir.mkdir(parents=True, exist_ok=True)
    src_dir = snapshot_path.parent
    t0 = time.perf_counter()
    mon_c = fld.consts.c
    ledger = sp.EnergyLedger.read_csv(src_dir / "ledger.csv", c=mon_c)
    ledger.rows = [r for r in ledger.rows if r["t"] <= fld.t + 1e-12]
    norm_rows = [r for r in _read_norm_rows(src_dir / "norms.csv") if r["t"] <= fld.t + 1e-12]
    rec = _Recorder(fld.params, fld.consts, 0.0, ledger, norm_rows)
    cfg.data["time"]["t_end"] = float(t_end)
    if math.isclose(t_end, fld.t, rel_tol=0, abs_tol=1e-12):
        files = []
        checks, summary = {}, {"t": fld.t, "noop": True}
    else:
        fld, snaps = _advance(fld, cfg, rec, t_end, out_dir, cfg.workers())
        files, checks, summary = _finish_sim(cfg, out_dir, fld, rec, snaps)
    manifest = RunManifest(cfg.to_toml_like(), __version__, "resume",
                           time.perf_counter() - t0,
                           [file_record(out_dir / f, out_dir) for f in files], checks, summary)
    manifest.write(out_dir)
    return manifest

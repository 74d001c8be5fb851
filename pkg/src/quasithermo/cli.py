"""Scenario runner: ``quasithermo run|validate|list-scenarios``.

Each scenario reads a YAML (or JSON) config::

    scenario: ou-transport
    seed: 0
    output: my-run          # directory under $QUASITHERMO_OUTPUT_ROOT
    params:
      gamma: 1.0
      D0: 0.5

writes CSV data, ``manifest.json`` and ``summary.txt``, and exits with
0 (all checks pass), 1 (a property check failed), 2 (bad config) or
3 (numerical failure).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, NumericalFailure
from .fields import Grid, StateField, format_float

__all__ = ["SCENARIOS", "ScenarioConfig", "load_config", "validate_config", "run_scenario", "main"]

OUTPUT_ROOT_ENV = "QUASITHERMO_OUTPUT_ROOT"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclass(frozen=True)
class Param:
    default: Any
    kind: str = "pos"  # pos | nonneg | real | int | bool | choice | optional_pos
    choices: tuple = ()
    help: str = ""


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    params: dict[str, Param]
    runner: Callable[["ScenarioConfig", "Artifacts"], None]
    step_check: Callable[["ScenarioConfig"], list[str]] | None = None


@dataclass
class ScenarioConfig:
    scenario: str
    params: dict[str, Any]
    seed: int = 0
    output: str | None = None
    source: str | None = None

    def __getitem__(self, key: str) -> Any:
        return self.params[key]

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "seed": self.seed, "output": self.output, "params": dict(self.params)}


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    relation: str  # "<=", ">=" or ">"

    @property
    def passed(self) -> bool:
        v = self.value
        if not math.isfinite(v):
            return False
        if self.relation == "<=":
            return v <= self.threshold
        if self.relation == ">=":
            return v >= self.threshold
        return v > self.threshold

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "relation": self.relation, "threshold": self.threshold, "passed": self.passed}


@dataclass
class Artifacts:
    """Collects files, diagnostics and checks produced by a scenario."""

    directory: Path
    files: dict[str, str] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)

    def write(self, name: str, text: str) -> None:
        self.files[name] = text

    def write_table(self, name: str, header: list[str], rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) for v in row])
        self.files[name] = buf.getvalue()

    def check(self, name: str, value: float, relation: str, threshold: float) -> None:
        self.checks.append(Check(name, float(value), float(threshold), relation))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# ---------------------------------------------------------------- scenarios


def _ideal_gas(cfg: ScenarioConfig, out: Artifacts) -> None:
    from .manifold import Box, check_cocycle_L, glue_map, ideal_gas_manifold

    f = ideal_gas_manifold(cfg["c_v"], 2, R=cfg["R"])
    lo, hi = cfg["sample_lo"], cfg["sample_hi"]
    if not hi > lo:
        raise ConfigError("sample_hi must exceed sample_lo", field="params.sample_hi")
    rng = np.random.default_rng(cfg.seed)
    pts = Box([lo] * 3, [hi] * 3).sample(int(cfg["samples"]), rng)
    rows, worst = [], 0.0
    for p in pts:
        res = check_cocycle_L(f, set(), {1}, {1, 3}, p[None, :])
        y1 = glue_map(f, set(), {1}, p)
        y13 = glue_map(f, set(), {1, 3}, p)
        rows.append([*p, *y1, *y13, res])
        worst = max(worst, res)
    out.write_table(
        "charts.csv",
        ["E [1]", "V [1]", "nu [1]", "beta_1 [1]", "V_1 [1]", "nu_1 [1]", "beta_13 [1]", "V_13 [1]", "mu_13 [1]", "cocycle_residual [1]"],
        rows,
    )
    out.diagnostics["max_cocycle_residual"] = worst
    out.check("cocycle residual over the chart loop", worst, "<=", 1e-7)


def _heat_relaxation(cfg: ScenarioConfig, out: Artifacts) -> None:
    from .evolution import heat_exchange_model, integrate_onsager

    E_tot, E1 = cfg["E_tot"], cfg["E1_initial"]
    if not E1 < E_tot:
        raise ConfigError("E1_initial must be below E_tot", field="params.E1_initial")
    model = heat_exchange_model(cfg["c_v"], cfg["conductance"], R=cfg["R"])
    traj = integrate_onsager(model, [E1, E_tot - E1], (0.0, cfg["t_end"]), cfg["dt"])
    out.write("trajectory.csv", traj.to_csv())
    total = traj.states.sum(axis=1)
    drift = float(np.max(np.abs(total - total[0])))
    gap = float(abs(traj.states[-1, 0] - traj.states[-1, 1]))
    dS = float(traj.diagnostics.get("min_entropy_increment", 0.0))
    out.diagnostics.update({"energy_drift": drift, "final_gap": gap, "min_entropy_increment": dS, "steps": traj.diagnostics["steps"]})
    out.check("total energy drift", drift, "<=", 1e-10)
    out.check("final |E1 - E2|", gap, "<=", 1e-6)
    out.check("smallest entropy increment per step", dS, ">=", -1e-10)


def _ou_spec(cfg: ScenarioConfig):
    from .evolution import DriftDiffusionSpec

    gamma, D0 = cfg["gamma"], cfg["D0"]
    grid = Grid([-cfg["half_width"]], [cfg["half_width"]], int(cfg["cells"]))
    spec = DriftDiffusionSpec(lambda a: [-gamma * a], np.array([[D0]]))
    return grid, spec


def _ou_step_check(cfg: ScenarioConfig) -> list[str]:
    from .evolution import cfl_limit

    grid, spec = _ou_spec(cfg)
    limit = cfl_limit(grid, spec)
    dt = cfg["dt"]
    if dt is not None and dt > limit:
        return [f"dt={dt:.6g} exceeds the stability limit; suggested dt <= {limit:.6g}"]
    return []


def _ou_transport(cfg: ScenarioConfig, out: Artifacts) -> None:
    from .evolution import cfl_limit, fp_evolve

    grid, spec = _ou_spec(cfg)
    x = grid.axes[0]
    f0 = np.exp(-((x - cfg["x0"]) ** 2) / (2 * cfg["variance0"]))
    f0 /= f0.sum() * grid.cell_volume
    limit = cfl_limit(grid, spec)
    dt = limit if cfg["dt"] is None else cfg["dt"]
    n_steps = max(int(math.ceil(cfg["t_end"] / dt - 1e-9)), 1)
    save_every = max(n_steps // int(cfg["snapshots"]), 1)
    traj = fp_evolve(StateField(grid, f0, labels=("a",)), spec, (0.0, cfg["t_end"]), dt, save_every=save_every)
    rows = []
    for s in traj.states:
        m = s.mean()[0]
        rows.append([s.time, m, s.covariance()[0, 0], s.mass()])
    out.write_table("variance.csv", ["t [1]", "mean [1]", "variance [1]", "mass [1]"], rows)
    out.write("final_density.csv", traj.final.to_csv())
    fin = traj.final
    c = x - fin.mean()[0]
    w = fin.density() * grid.cell_volume
    m2, m4 = float(np.sum(w * c**2)), float(np.sum(w * c**4))
    target = cfg["D0"] / cfg["gamma"]
    rel = abs(m2 / target - 1.0)
    kurt = abs(m4 / m2**2 - 3.0)
    out.diagnostics.update(
        {"terminal_variance": m2, "stationary_variance": target, "excess_kurtosis": m4 / m2**2 - 3.0,
         "max_step_mass_change": traj.max_step_mass_change, "dt": traj.diagnostics["dt"], "cfl_limit": limit,
         "clip_events": traj.diagnostics["clip_events"]}
    )
    out.check("terminal variance relative error", rel, "<=", 1e-3)
    out.check("max per-step mass change", traj.max_step_mass_change, "<=", 1e-12)
    out.check("|excess kurtosis|", kurt, "<=", 1e-3)


def _phase_model(cfg: ScenarioConfig):
    from .evolution import PhaseSpaceModel

    L = cfg["half_width"]
    grid = Grid([-L, -L], [L, L], int(cfg["cells"]), periodic=True)
    w2 = cfg["omega"] ** 2
    D = cfg["diffusion"] * np.eye(2)
    model = PhaseSpaceModel(1, lambda X: 0.5 * w2 * X**2, diffusion=D, potential_grad=lambda X: [w2 * X])
    return grid, model


def _phase_step_check(cfg: ScenarioConfig) -> list[str]:
    from .evolution import phase_space_cfl_limit

    grid, model = _phase_model(cfg)
    limit = phase_space_cfl_limit(grid, model)
    dt = cfg["dt"]
    if dt is not None and dt > limit:
        return [f"dt={dt:.6g} exceeds the spectral stability limit; suggested dt <= {limit:.6g}"]
    return []


def _phase_space_fp(cfg: ScenarioConfig, out: Artifacts) -> None:
    from .evolution import fp_phase_space_evolve, phase_space_cfl_limit
    from .wigner import h_functional

    grid, model = _phase_model(cfg)
    X, J = grid.mesh()
    s2 = cfg["sigma"] ** 2
    F0 = np.exp(-((X - cfg["X0"]) ** 2 + J**2) / (2 * s2))
    F0 /= F0.sum() * grid.cell_volume
    limit = phase_space_cfl_limit(grid, model)
    dt = limit if cfg["dt"] is None else cfg["dt"]
    t_end = cfg["periods"] * 2 * np.pi / cfg["omega"]
    monitor = None
    hb = None
    if cfg["track_h_functional"]:
        # the momentum axis must be the Weyl dual of the position axis
        hb = cfg["half_width"] * grid.spacing[0] / np.pi
        monitor = lambda s: h_functional(s.values, grid, hb)  # noqa: E731
    state = StateField(grid, F0, labels=("X", "J"))
    traj = fp_phase_space_evolve(state, model, (0.0, t_end), dt, monitor=monitor)
    d = traj.diagnostics
    energy, entropy = np.asarray(d["energy"]), np.asarray(d["entropy"])
    cols = [traj.step_times, traj.mass, energy, entropy]
    header = ["t [1]", "mass [1]", "mean_H [1]", "entropy [1]"]
    if monitor is not None:
        cols.append(np.asarray(d["monitor"]))
        header.append("h_functional [1]")
    out.write_table("history.csv", header, zip(*cols))
    out.write("final_density.csv", traj.final.to_csv())
    mass_err = float(np.max(np.abs(traj.mass - traj.mass[0])))
    out.diagnostics.update({"dt": d["dt"], "cfl_limit": limit, "steps": d["steps"], "max_mass_error": mass_err, "clip_events": d["clip_events"]})
    out.check("mass conservation", mass_err, "<=", 1e-3)
    if cfg["diffusion"] == 0.0:
        drift = float(np.max(np.abs(energy - energy[0])) / abs(energy[0]))
        out.diagnostics["relative_energy_drift"] = drift
        out.check("relative <H> drift", drift, "<=", 1e-3)
    else:
        dS = float(np.min(np.diff(entropy)))
        out.diagnostics["min_entropy_increment"] = dS
        out.check("smallest entropy increment", dS, ">=", -1e-6)
    if monitor is not None:
        dH = float(np.max(np.diff(np.asarray(d["monitor"]))))
        out.diagnostics["max_h_functional_increment"] = dH
        out.diagnostics["hbar"] = hb
        out.check("largest h-functional increment", dH, "<=", 1e-6)


def _wigner_bell(cfg: ScenarioConfig, out: Artifacts) -> None:
    from .wigner import (
        PAIR_STATE_COEFFS,
        WavePacket,
        chsh_scan,
        hermite_function,
        pair_correlated_packet,
        pair_state_correlator,
        wigner_transform,
    )

    L, n = cfg["half_width"], int(cfg["cells"])
    grid = Grid([-L] * 4, [L] * 4, n)
    W = wigner_transform(pair_correlated_packet(PAIR_STATE_COEFFS, cfg["hbar"]), grid)
    scan = chsh_scan(W, int(cfg["angles"]))
    out.write("chsh_scan.json", scan.to_json() + "\n")
    ang = scan.angles
    rows = [[a, b, scan.correlators[i, j]] for i, a in enumerate(ang) for j, b in enumerate(ang)]
    out.write_table("correlators.csv", ["theta_1 [rad]", "theta_2 [rad]", "E [1]"], rows)
    a, a2, b, b2 = scan.best_settings
    oracle = [pair_state_correlator(PAIR_STATE_COEFFS, s, t) for s, t in ((a, b), (a, b2), (a2, b), (a2, b2))]
    S_oracle = abs(oracle[0] + oracle[1] + oracle[2] - oracle[3])
    gauss = hermite_function(0, cfg["hbar"])
    product = WavePacket(2, cfg["hbar"], None, [(1.0, gauss, gauss)])
    S_prod = chsh_scan(wigner_transform(product, grid), int(cfg["angles"])).max_S
    out.diagnostics.update(
        {"max_S": scan.max_S, "best_settings": list(scan.best_settings), "operator_S_at_best": S_oracle,
         "product_state_max_S": S_prod, "grid_mass": W.mass()}
    )
    out.check("entangled-state max S", scan.max_S, ">", 2.0)
    out.check("entangled-state max S below the quantum bound", scan.max_S, "<=", 2 * math.sqrt(2) + 1e-3)
    out.check("product-state max S", S_prod, "<=", 2.0 + 1e-6)


def _fock_setup(cfg: ScenarioConfig):
    from .thermofock import FockModel, PhaseCellBasis, free_transport_preset, harmonic_preset, quartic_coupling_preset

    L = cfg["half_width"]
    grid = Grid([-L, -L], [L, L], int(cfg["cells"]), periodic=True)
    basis = PhaseCellBasis(grid)
    preset = cfg["preset"]
    if preset == "free":
        H = free_transport_preset(1)
    elif preset == "harmonic":
        H = harmonic_preset(1, cfg["omega"])
    else:
        H = quartic_coupling_preset(1, cfg["omega"], cfg["coupling"])
    model = FockModel(basis, H, N_max=int(cfg["n_max"]), kappa=cfg["kappa"], epsilon=cfg["epsilon"])
    return grid, basis, model


def _fock_step_check(cfg: ScenarioConfig) -> list[str]:
    from .evolution import spectral_derivative_matrix

    # conservative |K| estimate: max|w| times the 1-norm of the spectral derivative per axis
    L, n = cfg["half_width"], int(cfg["cells"])
    h = 2 * L / n
    dnorm = float(np.abs(spectral_derivative_matrix(n, h)).sum(axis=0).max())
    vmax = L if cfg["preset"] == "free" else L * max(1.0, cfg["omega"] ** 2)
    bound = 2 * vmax * dnorm * max(1, int(cfg["n_max"]))
    if cfg["preset"] == "quartic":
        bound *= 1 + abs(cfg["kappa"] * cfg["coupling"]) * (2 * L) ** 3 * (2 * L) ** 2
    dt = cfg["dt"]
    if dt is not None and dt * bound > 0.1:
        return [f"dt={dt:.6g} may exceed dt*|K| <= 0.1; suggested dt <= {0.1 / bound:.6g}"]
    return []


def _thermofock(cfg: ScenarioConfig, out: Artifacts) -> None:
    from .evolution import PhaseSpaceModel, fp_phase_space_evolve, phase_space_cfl_limit
    from .thermofock import build_kinetic_generator, generator_norm_bound, density_F, evolve_R, one_particle_state

    grid, basis, model = _fock_setup(cfg)
    K = build_kinetic_generator(model)
    bound = generator_norm_bound(K)
    dt = cfg["dt"] if cfg["dt"] is not None else (0.1 / bound if bound > 0 else cfg["t_end"])
    X, J = grid.mesh()
    F0 = np.exp(-((X - cfg["X0"]) ** 2 + J**2) / (2 * cfg["sigma"] ** 2))
    F0 /= F0.sum() * grid.cell_volume
    R0 = one_particle_state(model.space, np.sqrt(F0), basis.delta)
    traj = evolve_R(K, R0, (0.0, cfg["t_end"]), dt, epsilon=cfg["epsilon"], save_every=None)
    steps = traj.diagnostics["steps"]
    t_grid = np.linspace(0.0, cfg["t_end"], steps + 1)
    out.write_table("number.csv", ["t [1]", "norm [1]", "particle_number [1]"], zip(t_grid, traj.norms, traj.numbers))
    F = density_F(traj.final, basis)
    F.units = ("1", "1")
    out.write("final_density.csv", F.to_csv())
    number_drift = float(np.max(np.abs(traj.numbers - traj.numbers[0] * np.exp(-2 * cfg["epsilon"] * t_grid))))
    out.diagnostics.update({"fock_dim": model.space.dim, "norm_bound": bound, "dt": traj.diagnostics["dt"], "steps": steps, "number_drift": number_drift})
    out.check("particle-number drift from exp(-2 eps t)", number_drift, "<=", 1e-8)
    if cfg["preset"] == "harmonic" and cfg["epsilon"] == 0.0 and cfg["kappa"] == 0.0:
        w2 = cfg["omega"] ** 2
        pm = PhaseSpaceModel(1, lambda x: 0.5 * w2 * x**2, potential_grad=lambda x: [w2 * x])
        ref = fp_phase_space_evolve(StateField(grid, F0), pm, (0.0, cfg["t_end"]), phase_space_cfl_limit(grid, pm)).final
        l2 = float(np.linalg.norm(F.values - ref.values) / np.linalg.norm(ref.values))
        out.diagnostics["liouville_l2_relative"] = l2
        out.check("relative L2 distance to the Liouville solver", l2, "<=", 5e-2)


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in [
        Scenario(
            "ideal-gas-charts",
            "Legendre transforms of the ideal-gas entropy around the chart loop {} -> {1} -> {1,3} -> {}",
            {
                "c_v": Param(1.5),
                "R": Param(1.0),
                "samples": Param(50, "int"),
                "sample_lo": Param(0.5),
                "sample_hi": Param(2.0),
            },
            _ideal_gas,
        ),
        Scenario(
            "heat-relaxation",
            "Two ideal-gas bodies exchanging energy through a linear conductance",
            {
                "c_v": Param(1.5),
                "R": Param(1.0),
                "E_tot": Param(2.0),
                "E1_initial": Param(0.5),
                "conductance": Param(0.1),
                "t_end": Param(400.0),
                "dt": Param(0.05),
            },
            _heat_relaxation,
        ),
        Scenario(
            "ou-transport",
            "Ornstein-Uhlenbeck density relaxing on a finite-volume grid",
            {
                "gamma": Param(1.0),
                "D0": Param(0.5),
                "half_width": Param(6.0),
                "cells": Param(256, "int"),
                "x0": Param(1.0, "real"),
                "variance0": Param(0.2),
                "t_end": Param(5.0),
                "dt": Param(None, "optional_pos"),
                "snapshots": Param(50, "int"),
            },
            _ou_transport,
            _ou_step_check,
        ),
        Scenario(
            "phase-space-fp",
            "Harmonic phase-space transport with optional isotropic diffusion",
            {
                "omega": Param(1.0),
                "diffusion": Param(0.0, "nonneg"),
                "half_width": Param(5.0),
                "cells": Param(32, "int"),
                "X0": Param(1.0, "real"),
                "sigma": Param(1.0),
                "periods": Param(1.0),
                "dt": Param(None, "optional_pos"),
                "track_h_functional": Param(False, "bool"),
            },
            _phase_space_fp,
            _phase_step_check,
        ),
        Scenario(
            "wigner-bell",
            "CHSH scan over sign-binned quadratures of a pair-correlated two-mode state",
            {
                "hbar": Param(1.0),
                "half_width": Param(5.0),
                "cells": Param(24, "int"),
                "angles": Param(20, "int"),
            },
            _wigner_bell,
        ),
        Scenario(
            "thermofock-kinetics",
            "Single-quantum Fock evolution on phase-space cells compared with the Liouville solver",
            {
                "preset": Param("harmonic", "choice", ("free", "harmonic", "quartic")),
                "omega": Param(1.0),
                "coupling": Param(1.0),
                "kappa": Param(0.0, "nonneg"),
                "epsilon": Param(0.0, "nonneg"),
                "n_max": Param(1, "int"),
                "half_width": Param(5.0),
                "cells": Param(16, "int"),
                "X0": Param(1.0, "real"),
                "sigma": Param(1.0),
                "t_end": Param(1.0),
                "dt": Param(None, "optional_pos"),
            },
            _thermofock,
            _fock_step_check,
        ),
    ]
}


# ---------------------------------------------------------------- config


def _key_lines(text: str) -> dict[str, int]:
    """Map dotted keys to 1-based source lines, for error messages."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines: dict[str, int] = {}

    def walk(n, prefix):
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                key = f"{prefix}{k.value}"
                lines[key] = k.start_mark.line + 1
                walk(v, key + ".")

    walk(node, "")
    return lines


def _coerce(name: str, p: Param, value: Any, line: int | None) -> Any:
    field_ = f"params.{name}"

    def bad(msg):
        return ConfigError(f"{name} {msg}", field=field_, line=line)

    if p.kind == "bool":
        if not isinstance(value, bool):
            raise bad("must be true or false")
        return value
    if p.kind == "choice":
        if value not in p.choices:
            raise bad(f"must be one of {', '.join(p.choices)}")
        return value
    if p.kind == "optional_pos" and value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise bad("must be a number")
    if p.kind == "int":
        if int(value) != value or value < 1:
            raise bad("must be a positive integer")
        return int(value)
    v = float(value)
    if not math.isfinite(v):
        raise bad("must be finite")
    if p.kind in ("pos", "optional_pos") and not v > 0:
        raise bad("must be strictly positive")
    if p.kind == "nonneg" and v < 0:
        raise bad("must be non-negative")
    return v


def parse_config(text: str, source: str | None = None) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"cannot parse config: {getattr(exc, 'problem', exc)}", line=None if mark is None else mark.line + 1) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping with a 'scenario' key")
    lines = _key_lines(text)
    unknown = set(data) - {"scenario", "seed", "output", "params"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError("unknown top-level key", field=key, line=lines.get(key))
    name = data.get("scenario")
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; see list-scenarios", field="scenario", line=lines.get("scenario"))
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer", field="seed", line=lines.get("seed"))
    output = data.get("output")
    if output is not None and (not isinstance(output, str) or not output or Path(output).is_absolute() or ".." in Path(output).parts):
        raise ConfigError("output must be a relative directory name", field="output", line=lines.get("output"))
    raw = data.get("params") or {}
    if not isinstance(raw, dict):
        raise ConfigError("params must be a mapping", field="params", line=lines.get("params"))
    spec = SCENARIOS[name].params
    for key in raw:
        if key not in spec:
            raise ConfigError(f"unknown parameter for {name}", field=f"params.{key}", line=lines.get(f"params.{key}"))
    params = {}
    for key, p in spec.items():
        value = raw.get(key, p.default)
        params[key] = _coerce(key, p, value, lines.get(f"params.{key}"))
    return ScenarioConfig(name, params, seed, output, source)


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), str(p))


@dataclass
class ValidationReport:
    config: ScenarioConfig
    warnings: list[str]

    def render(self) -> str:
        lines = [f"OK {self.config.scenario}"]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def validate_config(path: str | os.PathLike) -> ValidationReport:
    """Schema and step-size feasibility; no simulation is run."""
    cfg = load_config(path)
    checker = SCENARIOS[cfg.scenario].step_check
    warnings_ = checker(cfg) if checker else []
    return ValidationReport(cfg, warnings_)


# ---------------------------------------------------------------- running


def _output_dir(cfg: ScenarioConfig, override: str | None) -> Path:
    if override:
        return Path(override)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "quasithermo-output"))
    return root / (cfg.output or cfg.scenario)


def _summary(cfg: ScenarioConfig, out: Artifacts, error: dict | None) -> str:
    lines = [f"scenario: {cfg.scenario}", f"quasithermo {__version__}", ""]
    if error:
        lines.append(f"FAILED with {error['type']}: {error['message']}")
    for c in out.checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(f"[{status}] {c.name}: {c.value:.6g} {c.relation} {c.threshold:.6g}")
    return "\n".join(lines) + "\n"


def run_scenario(cfg: ScenarioConfig, output_dir: str | None = None) -> tuple[int, Path]:
    directory = _output_dir(cfg, output_dir)
    out = Artifacts(directory)
    error = None
    status = EXIT_OK
    try:
        SCENARIOS[cfg.scenario].runner(cfg, out)
    except NumericalFailure as exc:
        error = {"type": type(exc).__name__, "module": type(exc).__module__, "message": str(exc)}
        status = EXIT_NUMERICAL
    if status == EXIT_OK and not all(c.passed for c in out.checks):
        status = EXIT_CHECK_FAILED
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(out.files.items()):
        (directory / name).write_text(text)
    manifest = {
        "library": {"name": "quasithermo", "version": __version__},
        "inputs": cfg.to_dict(),
        "files": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(out.files.items())},
        "diagnostics": out.diagnostics,
        "checks": [c.to_dict() for c in out.checks],
        "error": error,
        "exit_status": status,
    }
    (directory / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    (directory / "summary.txt").write_text(_summary(cfg, out, error))
    return status, directory


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    status, directory = run_scenario(cfg, args.output_dir)
    print((directory / "summary.txt").read_text(), end="")
    print(f"artifacts: {directory}")
    return status


def _cmd_validate(args) -> int:
    print(validate_config(args.config).render())
    return EXIT_OK


def _cmd_list(args) -> int:
    for s in SCENARIOS.values():
        print(f"{s.name:22s} {s.description}")
        if args.verbose:
            for k, p in s.params.items():
                print(f"    {k} = {p.default!r} ({p.kind})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasithermo", description="Run reproducible quasithermodynamics scenarios.")
    parser.add_argument("--version", action="version", version=f"quasithermo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario config and write artifacts")
    run.add_argument("config")
    run.add_argument("--output-dir", help=f"write here instead of ${OUTPUT_ROOT_ENV}/<output>")
    run.set_defaults(func=_cmd_run)
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.set_defaults(func=_cmd_validate)
    ls = sub.add_parser("list-scenarios", help="list shipped scenarios")
    ls.add_argument("-v", "--verbose", action="store_true", help="show parameters and defaults")
    ls.set_defaults(func=_cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

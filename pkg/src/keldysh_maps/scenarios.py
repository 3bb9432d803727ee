"""Scenario configs: JSON schema, model/spectrum builders, and runners.

A scenario file describes a driven system, a noise spectrum, and one
analysis (filter-strengths, map, time-sweep, optimize). Runners write
plot-ready CSV/JSON artifacts plus a manifest echoing all inputs.
"""

from __future__ import annotations

import csv
import json
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import filters, linalg, maps, spectra
from .control import (ControlProblem, GateObjective, PulseParams,
                      StateTransferObjective, cost, optimize,
                      repeat_gate_fidelity)
from .propagation import (Carrier, Constant, DriveEnvelope, DriveTerm, EchoPi,
                          HyperbolicWindow, PiecewiseConstant, Sinusoid,
                          SwitchOff, SystemModel, interaction_coupling,
                          propagate, static_qubit)

# ---------------------------------------------------------------------------
# Config schema

_ENVELOPE_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"enum": ["constant", "sinusoid", "hyperbolic-window",
                          "switch-off", "piecewise-constant", "echo-pi"]},
        "amplitude": {"type": "number"},
        "omega": {"type": "number"},
        "phase": {"type": "number"},
        "t_mid": {"type": "number"},
        "t_mid1": {"type": "number"},
        "t_mid2": {"type": "number"},
        "t_ramp": {"type": "number"},
        "amplitudes": {"type": "array", "items": {"type": "number"},
                       "minItems": 1},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "center": {"type": "number"},
        "width": {"type": "number"},
        "sigma": {"type": "number"},
        "angle": {"type": "number"},
        "inner": {"$ref": "#/$defs/envelope"},
    },
    "required": ["type"],
}

_SPECTRUM_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"enum": ["white", "ohmic", "one-over-f", "tls", "sum",
                          "tabulated"]},
        "gamma": {"type": "number", "minimum": 0},
        "strength": {"type": "number", "minimum": 0},
        "cutoff": {"type": "number", "exclusiveMinimum": 0},
        "amplitude": {"type": "number", "minimum": 0},
        "omega_ir": {"type": "number", "exclusiveMinimum": 0},
        "omega_uv": {"type": "number", "exclusiveMinimum": 0},
        "weight": {"type": "number", "minimum": 0},
        "omega_t": {"type": "number"},
        "relaxation_time": {"type": "number", "exclusiveMinimum": 0},
        "parts": {"type": "array", "items": {"$ref": "#/$defs/spectrum"}},
        "omegas": {"type": "array", "items": {"type": "number"}},
        "values": {"type": "array", "items": {"type": "number", "minimum": 0}},
    },
    "required": ["type"],
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"envelope": _ENVELOPE_SCHEMA, "spectrum": _SPECTRUM_SCHEMA},
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "n_time_samples": {"type": "integer", "minimum": 16},
        "substeps": {"type": "integer", "minimum": 1},
        "strength_tol": {"type": "number", "exclusiveMinimum": 0},
        "model": {
            "type": "object",
            "properties": {
                "template": {"enum": ["qubit", "floquet-fluxonium-2level",
                                      "oscillator"]},
                "omega_q": {"type": "number"},
                "delta": {"type": "number"},
                "b": {"type": "number"},
                "a": {"type": "number"},
                "omega_d": {"type": "number"},
                "drive_envelope": {"$ref": "#/$defs/envelope"},
                "dim": {"type": "integer", "minimum": 2},
                "omega_r": {"type": "number"},
            },
            "required": ["template"],
        },
        "drives": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "operator": {"type": "string"},
                    "envelope": {"$ref": "#/$defs/envelope"},
                    "carrier": {
                        "type": ["object", "null"],
                        "properties": {
                            "kind": {"enum": ["cos", "rwa"]},
                            "omega": {"type": "number"},
                            "phase": {"type": "number"},
                        },
                        "required": ["kind", "omega"],
                    },
                },
                "required": ["operator", "envelope"],
            },
        },
        "coupling": {"type": "string"},
        "spectrum": {"$ref": "#/$defs/spectrum"},
        "analysis": {
            "type": "object",
            "properties": {
                "type": {"enum": ["filter-strengths", "map", "time-sweep",
                                  "optimize", "repeat-gates"]},
                "mode": {"enum": ["secular", "fullwave"]},
                "k_cut": {"type": "integer", "minimum": 0},
                "lamb_shift": {"type": "boolean"},
                "taus": {
                    "type": "object",
                    "properties": {
                        "start": {"type": "number", "exclusiveMinimum": 0},
                        "stop": {"type": "number", "exclusiveMinimum": 0},
                        "count": {"type": "integer", "minimum": 2},
                    },
                    "required": ["start", "stop", "count"],
                },
                "modes": {"type": "array", "items": {"enum": ["secular",
                                                              "fullwave"]}},
                "initial_state": {"enum": ["g", "e", "plus"]},
                "objective": {
                    "type": "object",
                    "properties": {
                        "type": {"enum": ["state-transfer", "gate"]},
                        "initial": {"enum": ["g", "e"]},
                        "target": {"type": "string"},
                    },
                    "required": ["type"],
                },
                "segments": {"type": "integer", "minimum": 2},
                "bounds": {"type": "array", "items": {"type": "number"},
                           "minItems": 2, "maxItems": 2},
                "iterations": {"type": "integer", "minimum": 1},
                "restarts": {"type": "integer", "minimum": 1},
                "carrier": {
                    "type": ["object", "null"],
                    "properties": {
                        "kind": {"enum": ["cos", "rwa"]},
                        "omega": {"type": "number"},
                        "phase": {"type": "number"},
                    },
                },
                "drive_operator": {"type": "string"},
                "n_reps": {"type": "integer", "minimum": 1},
            },
            "required": ["type"],
        },
    },
    "required": ["name", "tau", "model", "coupling", "spectrum", "analysis"],
}


class ConfigError(ValueError):
    """Scenario config failed validation."""


def validate_config(config: dict) -> None:
    import jsonschema

    try:
        jsonschema.validate(config, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path}: {exc.message}") from exc
    _named_operator_table(config)  # raises on unknown operator names


# ---------------------------------------------------------------------------
# Builders

def build_envelope(spec: dict) -> DriveEnvelope:
    kind = spec["type"]
    if kind == "constant":
        return Constant(spec["amplitude"])
    if kind == "sinusoid":
        return Sinusoid(spec["amplitude"], spec["omega"], spec.get("phase", 0.0))
    if kind == "hyperbolic-window":
        inner = build_envelope(spec["inner"]) if "inner" in spec else Constant(1.0)
        return HyperbolicWindow(spec["t_mid1"], spec["t_mid2"], spec["t_ramp"], inner)
    if kind == "switch-off":
        inner = build_envelope(spec["inner"]) if "inner" in spec else Constant(1.0)
        return SwitchOff(spec["t_mid"], spec["t_ramp"], inner)
    if kind == "piecewise-constant":
        return PiecewiseConstant(tuple(spec["amplitudes"]), spec["tau"])
    if kind == "echo-pi":
        return EchoPi(spec["center"], spec["width"], spec["sigma"],
                      spec.get("angle", np.pi))
    raise ConfigError(f"unknown envelope type {kind!r}")


def build_carrier(spec: dict | None) -> Carrier | None:
    if spec is None:
        return None
    return Carrier(spec["kind"], spec["omega"], spec.get("phase", 0.0))


def build_spectrum(spec: dict) -> spectra.NoiseSpectrum:
    kind = spec["type"]
    if kind == "white":
        return spectra.WhiteNoise(spec["gamma"])
    if kind == "ohmic":
        return spectra.OhmicNoise(spec["strength"], spec.get("cutoff", 100.0))
    if kind == "one-over-f":
        return spectra.OneOverFNoise(spec["amplitude"], spec["omega_ir"],
                                     spec["omega_uv"])
    if kind == "tls":
        return spectra.TLSNoise(spec["weight"], spec["omega_t"],
                                spec["relaxation_time"])
    if kind == "sum":
        return spectra.SumSpectrum(tuple(build_spectrum(p) for p in spec["parts"]))
    if kind == "tabulated":
        return spectra.TabulatedSpectrum(tuple(spec["omegas"]), tuple(spec["values"]))
    raise ConfigError(f"unknown spectrum type {kind!r}")


def _qubit_operators() -> dict:
    return {
        "sigma_x": linalg.SIGMA_X, "sigma_y": linalg.SIGMA_Y,
        "sigma_z": linalg.SIGMA_Z, "sigma_plus": linalg.SIGMA_PLUS,
        "sigma_minus": linalg.SIGMA_MINUS, "identity": linalg.IDENTITY_2,
    }


def _oscillator_operators(dim: int) -> dict:
    a = linalg.destroy(dim)
    return {"annihilate": a, "create": linalg.dag(a),
            "position": a + linalg.dag(a), "number": linalg.dag(a) @ a,
            "identity": np.eye(dim, dtype=complex)}


def _named_operator_table(config: dict) -> dict:
    model = config["model"]
    template = model["template"]
    if template == "oscillator":
        ops = _oscillator_operators(int(model.get("dim", 12)))
    else:
        ops = _qubit_operators()
    names = [config["coupling"]]
    names += [d["operator"] for d in config.get("drives", [])]
    analysis = config.get("analysis", {})
    if "drive_operator" in analysis:
        names.append(analysis["drive_operator"])
    for name in names:
        if name not in ops:
            raise ConfigError(f"unknown operator name {name!r} for template "
                              f"{template!r}")
    return ops


def build_model(config: dict) -> SystemModel:
    model = config["model"]
    template = model["template"]
    ops = _named_operator_table(config)
    drive_terms = []
    if template == "qubit":
        h_static = static_qubit(model.get("omega_q", 1.0))
    elif template == "floquet-fluxonium-2level":
        delta = model.get("delta", 1.0)
        b = model["b"] * delta
        a = model["a"] * delta
        omega_d = model["omega_d"] * delta
        h_static = 0.5 * (delta * linalg.SIGMA_X + b * linalg.SIGMA_Z)
        if "drive_envelope" in model:
            env = build_envelope(model["drive_envelope"])
        else:
            env = Constant(1.0)
        # 2A cos(w_d t) sigma_z / 2, optionally windowed
        drive_terms.append(DriveTerm(a * linalg.SIGMA_Z, env,
                                     Carrier("cos", omega_d)))
    elif template == "oscillator":
        dim = int(model.get("dim", 12))
        omega_r = model.get("omega_r", 1.0)
        h_static = omega_r * (ops["number"]).astype(complex)
    else:
        raise ConfigError(f"unknown model template {template!r}")

    for d in config.get("drives", []):
        drive_terms.append(DriveTerm(ops[d["operator"]],
                                     build_envelope(d["envelope"]),
                                     build_carrier(d.get("carrier"))))
    return SystemModel(h_static, tuple(drive_terms), ops[config["coupling"]])


def decompose_scenario(config: dict, tau: float | None = None
                       ) -> filters.FilterDecomposition:
    """Propagate and Fourier-decompose the scenario coupling over [0, tau]."""
    tau = float(config["tau"] if tau is None else tau)
    model = build_model(config)
    n_t = int(config.get("n_time_samples", 4096))
    substeps = int(config.get("substeps", 2))
    t_grid = np.linspace(0.0, tau, n_t + 1)
    us = propagate(model, t_grid, substeps_per_interval=substeps)
    xt = interaction_coupling(model, us)[:-1]
    return filters.fourier_decompose(xt, tau,
                                     strength_tol=config.get("strength_tol", 1e-8))


# ---------------------------------------------------------------------------
# Analysis runners


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _run_filter_strengths(config: dict, out: Path) -> dict:
    decomp = decompose_scenario(config)
    rows = [(int(k), float(k * decomp.omega_p), float(m))
            for k, m in zip(decomp.ks, decomp.strengths())]
    _write_csv(out / "filter_strengths.csv", ["k", "omega_k", "M_k"], rows)
    return {"modes": int(decomp.ks.size),
            "total_strength": float(decomp.total_strength()),
            "artifacts": ["filter_strengths.csv"]}


def _run_map(config: dict, out: Path, mode: str, k_cut: int) -> dict:
    analysis = config["analysis"]
    decomp = decompose_scenario(config)
    result = maps.build_keldysh_map(
        decomp, build_spectrum(config["spectrum"]), mode=mode, k_cut=k_cut,
        lamb_shift=analysis.get("lamb_shift", True))
    with open(out / "map.json", "w") as fh:
        json.dump(result.to_json(), fh, indent=1)
    return {"cptp_report": result.cptp_report.to_dict(),
            "artifacts": ["map.json"]}


_STATES = {
    "g": np.outer(linalg.KET_G, linalg.KET_G.conj()),
    "e": np.outer(linalg.KET_E, linalg.KET_E.conj()),
    "plus": 0.5 * np.array([[1, 1], [1, 1]], dtype=complex),
}


def _run_time_sweep(config: dict, out: Path, mode_override: str | None,
                    k_cut: int) -> dict:
    analysis = config["analysis"]
    spec = build_spectrum(config["spectrum"])
    taus_cfg = analysis["taus"]
    taus = np.linspace(taus_cfg["start"], taus_cfg["stop"], taus_cfg["count"])
    modes = [mode_override] if mode_override else analysis.get(
        "modes", ["secular", "fullwave"])
    rho0 = _STATES[analysis.get("initial_state", "plus")]
    if rho0.shape[0] != build_model(config).dim:
        raise ConfigError("time-sweep initial states are qubit-only")

    rows = []
    reports = []
    for tau in taus:
        decomp = decompose_scenario(config, tau=tau)
        ks = sorted(set(decomp.ks.tolist()) | {-int(k) for k in decomp.ks})
        table = filters.overlap_table(spec, tau, ks, k_cut)
        row = [float(tau)]
        for mode in modes:
            result = maps.build_keldysh_map(decomp, spec, mode=mode,
                                            k_cut=k_cut, phi_table=table)
            rho = result.apply(rho0)
            row.append(abs(rho[0, 1]))
            reports.append({"tau": float(tau), "mode": mode,
                            **result.cptp_report.to_dict()})
        rows.append(row)
    header = ["tau"] + [f"abs_rho_eg_{m}" for m in modes]
    _write_csv(out / "time_sweep.csv", header, rows)
    return {"modes": modes, "k_cut": k_cut, "cptp_reports": reports,
            "artifacts": ["time_sweep.csv"]}


def _gate_target(name: str, dim: int) -> np.ndarray:
    if name == "identity":
        return np.eye(dim, dtype=complex)
    if name == "x" and dim == 2:
        return linalg.SIGMA_X.copy()
    raise ConfigError(f"unknown gate target {name!r}")


def _control_problem(config: dict, noise_aware: bool) -> ControlProblem:
    analysis = config["analysis"]
    obj_cfg = analysis["objective"]
    ops = _named_operator_table(config)
    model = build_model(config)
    if obj_cfg["type"] == "state-transfer":
        objective = StateTransferObjective(
            _STATES[obj_cfg.get("initial", "g")],
            _STATES[obj_cfg.get("target", "e")])
    else:
        objective = GateObjective(_gate_target(obj_cfg.get("target", "identity"),
                                               model.dim))
    return ControlProblem(
        h_static=model.h_static,
        drive_operator=ops[analysis.get("drive_operator", "sigma_x")],
        coupling=model.coupling,
        tau=float(config["tau"]),
        spectrum=build_spectrum(config["spectrum"]),
        objective=objective,
        carrier=build_carrier(analysis.get("carrier")),
        noise_aware=noise_aware,
        n_time_samples=int(config.get("n_time_samples", 1024)),
        substeps=int(config.get("substeps", 2)),
        strength_tol=float(config.get("strength_tol", 1e-6)),
        iterations=int(analysis.get("iterations", 500)),
        restarts=int(analysis.get("restarts", 8)),
        seed=int(config.get("seed", 0)),
    )


def _run_optimize(config: dict, out: Path) -> dict:
    analysis = config["analysis"]
    tau = float(config["tau"])
    a_min, a_max = analysis.get("bounds", [-0.3, 0.3])
    n_seg = int(analysis.get("segments", 64))
    idle = PulseParams(tuple(np.zeros(n_seg)), a_min, a_max)

    problem = _control_problem(config, noise_aware=True)
    result = optimize(problem, initial=idle)

    baseline_problem = _control_problem(config, noise_aware=False)
    baseline = optimize(baseline_problem, initial=idle)

    idle_cost = cost(problem, idle)
    baseline_noisy = cost(problem, baseline.best_params)

    edges = np.linspace(0.0, tau, n_seg + 1)
    _write_csv(out / "pulse.csv", ["t_start", "t_end", "amplitude"],
               [(edges[i], edges[i + 1], result.best_params.amplitudes[i])
                for i in range(n_seg)])
    _write_csv(out / "cost_trace.csv", ["iteration", "best_cost"],
               list(enumerate(result.cost_trace.tolist())))

    summary = {
        "optimized_cost": result.best_cost,
        "idle_cost": float(idle_cost),
        "noise_unaware_cost_closed": baseline.best_cost,
        "noise_unaware_cost_noisy": float(baseline_noisy),
        "improvement_over_idle": float(idle_cost / result.best_cost),
        "improvement_over_unaware": float(baseline_noisy / result.best_cost),
        "restart_costs": result.restart_costs.tolist(),
        "converged": result.converged,
    }

    if isinstance(problem.objective, GateObjective):
        n_reps = int(analysis.get("n_reps", 10))
        _, u_opt, pi_opt = cost(problem, result.best_params, return_parts=True)
        _, u_idle, pi_idle = cost(problem, idle, return_parts=True)
        tgt = problem.objective.u_target
        fid_opt = repeat_gate_fidelity(pi_opt, u_opt, tgt, n_reps)
        fid_idle = repeat_gate_fidelity(pi_idle, u_idle, tgt, n_reps)
        _write_csv(out / "repeat_fidelity.csv",
                   ["n", "fidelity_optimized", "fidelity_idle"],
                   [(n + 1, fid_opt[n], fid_idle[n]) for n in range(n_reps)])
        summary["artifacts"] = ["pulse.csv", "cost_trace.csv",
                                "repeat_fidelity.csv", "summary.json"]
    else:
        summary["artifacts"] = ["pulse.csv", "cost_trace.csv", "summary.json"]

    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary


def _run_repeat_gates(config: dict, out: Path) -> dict:
    """Repeat-fidelity of the idle (zero-pulse) gate under the scenario bath."""
    analysis = config["analysis"]
    n_reps = int(analysis.get("n_reps", 10))
    n_seg = int(analysis.get("segments", 64))
    a_min, a_max = analysis.get("bounds", [-0.3, 0.3])
    problem = _control_problem(config, noise_aware=True)
    idle = PulseParams(tuple(np.zeros(n_seg)), a_min, a_max)
    value, u_tau, pi = cost(problem, idle, return_parts=True)
    tgt = problem.objective.u_target if isinstance(problem.objective, GateObjective) \
        else np.eye(problem.h_static.shape[0], dtype=complex)
    fid = repeat_gate_fidelity(pi, u_tau, tgt, n_reps)
    _write_csv(out / "repeat_fidelity.csv", ["n", "fidelity"],
               [(n + 1, fid[n]) for n in range(n_reps)])
    return {"single_cost": float(value), "artifacts": ["repeat_fidelity.csv"]}


def run_scenario(config: dict, out_dir: str | Path,
                 mode_override: str | None = None,
                 k_cut_override: int | None = None,
                 seed_override: int | None = None) -> dict:
    """Validate, run the configured analysis, and write a manifest."""
    validate_config(config)
    config = dict(config)
    if seed_override is not None:
        config["seed"] = int(seed_override)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    analysis = config["analysis"]
    kind = analysis["type"]
    k_cut = k_cut_override if k_cut_override is not None \
        else int(analysis.get("k_cut", 0))

    started = time.time()
    if kind == "filter-strengths":
        details = _run_filter_strengths(config, out)
    elif kind == "map":
        mode = mode_override or analysis.get("mode", "secular")
        details = _run_map(config, out, mode, k_cut)
    elif kind == "time-sweep":
        details = _run_time_sweep(config, out, mode_override, k_cut)
    elif kind == "optimize":
        details = _run_optimize(config, out)
    elif kind == "repeat-gates":
        details = _run_repeat_gates(config, out)
    else:
        raise ConfigError(f"unknown analysis type {kind!r}")

    from . import __version__
    manifest = {
        "name": config["name"],
        "config": config,
        "version": __version__,
        "elapsed_seconds": time.time() - started,
        "details": details,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


# ---------------------------------------------------------------------------
# Bundled gallery


def list_scenarios() -> list[str]:
    root = resources.files("keldysh_maps").joinpath("data")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(name: str) -> dict:
    path = resources.files("keldysh_maps").joinpath("data", f"{name}.json")
    if not path.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}; "
                          f"available: {', '.join(list_scenarios())}")
    return json.loads(path.read_text())

"""Experiment catalog: config in, outcomes and report trees out.

Each experiment maps an :class:`ExperimentConfig` to an
:class:`ExperimentResult`. ``outcomes`` holds short categorical results
(verdicts, pass/fail, multiplier classifications) that configs can state
expectations about; ``results`` holds the full JSON trees for report.json.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import functionals as fn
from . import hilbert as hb
from . import paths as pth
from . import phase as ph
from . import variation as var
from .config import ENGINE_TOLERANCES, EXPERIMENTS, ExperimentConfig
from .errors import ConfigError
from .systems import build, probe_points

ANCHORS = {
    "quantum_stationarity": "Schrodinger flow makes the projective time functional stationary",
    "quantum_residuals": "pointwise Euler-Lagrange residuals of the projective time functional",
    "aa_length": "Fubini-Study length equals the time integral of the energy uncertainty",
    "nonlinear_flow": "norm-preserving nonlinear flow solves the same stationarity condition",
    "classical_stationarity": "Hamiltonian flow makes the phase-space time functional stationary on the energy shell",
    "lambda_consistency": "shell multiplier agrees across all coordinate Euler-Lagrange equations",
    "isoperimetric": "a constant fixed-time multiplier does not reproduce Hamiltonian flow",
    "shell_geodesic": "Hamiltonian flow is a length geodesic of the energy shell",
    "config_space": "Jacobi action is stationary while the inverse-Jacobi time candidate is not",
    "spin_hypothesis": "spin pair in canonical (z, phi) coordinates behaves like a mechanical system",
}

STATIONARITY_KINDS = ("quantum_stationarity", "classical_stationarity", "shell_geodesic", "config_space",
                      "spin_hypothesis")


@dataclass
class ExperimentResult:
    experiment: str
    outcomes: dict
    results: dict
    reports: dict = field(default_factory=dict)  # name -> StationarityReport
    traces: dict = field(default_factory=dict)  # name -> MultiplierTrace
    path: object | None = None
    metrics: dict = field(default_factory=dict)  # scalars used by sweeps

    def check(self, expect: dict) -> dict:
        """Compare outcomes with expectations; unknown outcome names are config errors."""
        out = {}
        for key, wanted in sorted(expect.items()):
            if key not in self.outcomes:
                raise ConfigError(f"expect names unknown outcome {key!r} for {self.experiment}; "
                                  f"available: {', '.join(sorted(self.outcomes))}")
            got = self.outcomes[key]
            out[key] = {"expected": wanted, "observed": got, "met": got == wanted}
        return out


def default_config(name: str) -> dict:
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}")
    text = resources.files("fermatlab").joinpath("configs", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


# ------------------------------------------------------------------ helpers


def _thresholds(cfg):
    return {k: cfg.tolerances[k] for k in ENGINE_TOLERANCES}


def _grids(cfg):
    return cfg.path.get("grids", list(var.DEFAULT_GRIDS))


def _epsilons(cfg):
    return cfg.variation.get("epsilons", list(var.DEFAULT_EPSILONS))


def _directions(cfg, **kw):
    v = cfg.variation
    return var.seeded_directions(v.get("n_directions", 4), v.get("modes", [1, 2]), v.get("seed", 0), **kw)


def _quantum(cfg, static=True):
    qs = build(cfg.system)
    if not cfg.system.is_quantum:
        raise ConfigError(f"{cfg.experiment} needs a quantum system, got {cfg.system.kind!r}")
    if static and isinstance(qs.hamiltonian, hb.TimeDependentHamiltonian):
        raise ConfigError(f"{cfg.experiment} needs a time-independent Hamiltonian")
    init = cfg.path.get("initial_state")
    if init is None:
        psi0 = hb.random_state(qs.dim, np.random.default_rng(cfg.path.get("state_seed", 0)))
    else:
        amps = [complex(a[0], a[1]) if isinstance(a, list) else complex(a) for a in init]
        psi0 = hb.as_state(amps, normalize=True)
    if psi0.shape[0] != qs.dim:
        raise ConfigError(f"initial_state has {psi0.shape[0]} amplitudes, system dimension is {qs.dim}")
    return qs, psi0


def _classical(cfg):
    if cfg.system.is_quantum:
        raise ConfigError(f"{cfg.experiment} needs a classical system, got {cfg.system.kind!r}")
    sys = build(cfg.system)
    x0 = cfg.path.get("initial_state")
    if x0 is None:
        x0 = probe_points(sys, 1, cfg.path.get("state_seed", 0))[0]
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.dim,):
        raise ConfigError(f"initial_state needs {sys.dim} phase coordinates, got {x0.shape[0]}")
    return sys, x0


def _pass(ok: bool) -> str:
    return "pass" if ok else "fail"


def classify_spread(spread: float, tol: dict) -> str:
    if spread < tol["spread"]:
        return "consistent"
    if spread > tol["counter_spread"]:
        return "inconsistent"
    return "ambiguous"


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def _stationarity_result(report, extra_outcomes=None, extra_results=None, prefix=""):
    outcomes = {f"{prefix}verdict": report.verdict,
                f"{prefix}baseline_verdict": report.baseline.verdict if report.baseline else "none"}
    outcomes.update(extra_outcomes or {})
    results = {f"{prefix}stationarity": report.to_dict()}
    results.update(extra_results or {})
    return outcomes, results


def _report_metrics(report, prefix=""):
    m = {f"{prefix}T": report.base_value}
    for j, rec in enumerate(report.records):
        m[f"{prefix}slope_{j}"] = rec.slopes[-1]
    if report.baseline is not None:
        for j, rec in enumerate(report.baseline.records):
            m[f"{prefix}baseline_slope_{j}"] = rec.slopes[-1]
    return m


# ------------------------------------------------------------------ experiments


def quantum_stationarity(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    qs, psi0 = _quantum(cfg)
    H = qs.hamiltonian
    t = cfg.path.get("t_final", 1.0)
    sign = cfg.path.get("sign", 1)
    src = pth.schrodinger_source(psi0, H, t, sign)
    psi_T = src(1).states[-1]
    report = var.stationarity_test(lambda p: fn.quantum_time_functional(p, H), src, _directions(cfg),
                                   _epsilons(cfg), _grids(cfg), pth.geodesic_source(psi0, psi_T),
                                   "quantum_time", executor, _thresholds(cfg))
    outcomes, results = _stationarity_result(report)
    path = src(max(_grids(cfg)))
    return ExperimentResult(cfg.experiment, outcomes, results, {"quantum_time": report}, path=path,
                            metrics=_report_metrics(report))


def quantum_residuals(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    qs, psi0 = _quantum(cfg, static=False)
    t = cfg.path.get("t_final", 5.0)
    n = cfg.path.get("n_steps", 1000)
    tol = cfg.tolerances
    if isinstance(qs.hamiltonian, hb.TimeDependentHamiltonian):
        Ht = qs.hamiltonian
        traj = hb.propagate_schrodinger_td(psi0, Ht, t, n)
        r = np.array([hb.extended_metric_residual(s, -1j * (Ht(tk) @ s), Ht(tk))
                      for tk, s in zip(traj.times, traj.states)])
        worst = float(np.max(np.abs(r)))
        outcomes = {"extended_residual": _pass(worst < tol["extended_residual"])}
        results = {"extended_residual_max": worst, "n_nodes": len(traj), "norm_drift": traj.norm_drift}
        return ExperimentResult(cfg.experiment, outcomes, results, path=pth.QuantumPath(traj.states),
                                metrics={"extended_residual_max": worst})
    H = qs.hamiltonian
    traj = hb.propagate_schrodinger(psi0, H, t, n)
    nl = hb.propagate_nonlinear(psi0, H, t, n)
    r_s = np.abs(hb.projective_residual(traj.states, hb.schrodinger_velocity(traj.states, H), H))
    r_n = np.abs(hb.projective_residual(nl.states, hb.nonlinear_velocity(nl.states, H), H))
    rng = np.random.default_rng(cfg.variation.get("seed", 0))
    k = cfg.variation.get("n_directions", 20)
    picks = rng.integers(0, len(traj), size=k)
    vel = rng.standard_normal((k, qs.dim)) + 1j * rng.standard_normal((k, qs.dim))
    r_r = np.abs(hb.projective_residual(traj.states[picks], vel, H))
    outcomes = {
        "schrodinger_residual": _pass(float(np.max(r_s)) < tol["residual"]),
        "nonlinear_residual": _pass(float(np.max(r_n)) < tol["residual"]),
        "random_rejected": _pass(float(np.min(r_r)) > tol["random_residual"]),
    }
    results = {"schrodinger_residual_max": float(np.max(r_s)), "nonlinear_residual_max": float(np.max(r_n)),
               "random_residual_min": float(np.min(r_r)), "random_residuals": r_r.tolist(), "n_nodes": len(traj)}
    return ExperimentResult(cfg.experiment, outcomes, results, path=pth.QuantumPath(traj.states),
                            metrics={"schrodinger_residual_max": float(np.max(r_s))})


def aa_length(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    qs, psi0 = _quantum(cfg)
    H = qs.hamiltonian
    t = cfg.path.get("t_final", 1.0)
    n = cfg.path.get("n_steps", 2000)
    traj = hb.propagate_schrodinger(psi0, H, t, n)
    length, integral = hb.uncertainty_length_check(traj, H)
    T = fn.quantum_time_functional(pth.QuantumPath(traj.states), H).value
    rel_len, rel_time = _rel(length, integral), _rel(T, t)
    outcomes = {"length_identity": _pass(rel_len < cfg.tolerances["length_rel"]),
                "time_identity": _pass(rel_time < cfg.tolerances["time_rel"])}
    results = {"fs_length": length, "uncertainty_integral": integral, "length_rel_error": rel_len,
               "time_functional": T, "elapsed": t, "time_rel_error": rel_time, "n_nodes": len(traj)}
    return ExperimentResult(cfg.experiment, outcomes, results, path=pth.QuantumPath(traj.states),
                            metrics={"length_rel_error": rel_len, "time_rel_error": rel_time, "T": T})


def nonlinear_flow(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    qs, psi0 = _quantum(cfg)
    H = qs.hamiltonian
    t = cfg.path.get("t_final", 10.0)
    n = cfg.path.get("n_steps", 10000)
    sign = cfg.path.get("sign", 1)
    traj = hb.propagate_nonlinear(psi0, H, t, n, sign)
    v = hb.nonlinear_velocity(traj.states, H, sign)
    r7 = float(np.max(np.abs(hb.projective_residual(traj.states, v, H))))
    r9 = float(np.max(np.abs(hb.extended_metric_residual(traj.states, v, H))))
    tol = cfg.tolerances
    outcomes = {"norm": _pass(traj.norm_drift < tol["norm"]),
                "projective_residual": _pass(r7 < tol["residual"]),
                "extended_residual": _pass(r9 < tol["residual"])}
    results = {"norm_drift": traj.norm_drift, "projective_residual_max": r7, "extended_residual_max": r9,
               "n_nodes": len(traj), "t_final": t}
    return ExperimentResult(cfg.experiment, outcomes, results, path=pth.QuantumPath(traj.states),
                            metrics={"norm_drift": traj.norm_drift})


def _classical_stationarity(cfg, sys, x0, executor, functional_id="classical_time"):
    t = cfg.path.get("t_final", 2.0)
    sign = cfg.path.get("sign", 1)
    src = pth.flow_source(x0, sys, t, sign)
    base = pth.distorted_classical_source(src, sys, cfg.path.get("baseline_amplitude", 0.1),
                                          cfg.path.get("baseline_seed", 11))
    report = var.stationarity_test(lambda p: fn.classical_time_functional(p, sys), src,
                                   _directions(cfg, system=sys), _epsilons(cfg), _grids(cfg), base,
                                   functional_id, executor, _thresholds(cfg))
    rel_time = _rel(report.base_value, t)
    return report, src, rel_time


def classical_stationarity(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    sys, x0 = _classical(cfg)
    report, src, rel_time = _classical_stationarity(cfg, sys, x0, executor)
    outcomes, results = _stationarity_result(
        report, {"time_identity": _pass(rel_time < cfg.tolerances["time_rel"])},
        {"time_rel_error": rel_time, "shell_energy": float(sys.hamiltonian(x0))})
    return ExperimentResult(cfg.experiment, outcomes, results, {"classical_time": report},
                            path=src(max(_grids(cfg))), metrics=_report_metrics(report))


def _traces(cfg, sys, x0):
    t = cfg.path.get("t_final", 2.0)
    n = cfg.path.get("n_steps", 2000)
    E = float(sys.hamiltonian(x0))
    fwd = ph.hamilton_flow(x0, sys, t, n, 1)
    rev = ph.hamilton_flow(x0, sys, t, n, -1)
    return fwd, {"forward": var.lambda_consistency(fwd, sys, E), "reverse": var.lambda_consistency(rev, sys, E)}


def lambda_consistency(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    sys, x0 = _classical(cfg)
    fwd, traces = _traces(cfg, sys, x0)
    grad = ph.gradient_flow(x0, sys, cfg.path.get("counter_t_final", 1.0), cfg.path.get("n_steps", 2000))
    traces["gradient_flow"] = var.lambda_consistency(grad, sys)
    outcomes = {k: classify_spread(tr.spread, cfg.tolerances) for k, tr in traces.items()}
    results = {k: tr.to_dict() for k, tr in traces.items()}
    return ExperimentResult(cfg.experiment, outcomes, results, traces=traces,
                            path=pth.ClassicalPath(fwd.points), metrics={k: tr.spread for k, tr in traces.items()})


def isoperimetric(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    sys, x0 = _classical(cfg)
    t = cfg.path.get("t_final", 2 * math.pi)
    grids = _grids(cfg)
    traces = {}
    for n in sorted(grids):
        traj = ph.hamilton_flow(x0, sys, t, n)
        traces[f"grid_{n}"] = var.isoperimetric_time_test(traj, sys)
    spreads = [tr.spread for tr in traces.values()]
    finest = traces[f"grid_{max(grids)}"]
    outcomes = {"multiplier": classify_spread(finest.spread, cfg.tolerances),
                "refinement": "non-decreasing" if all(b >= a for a, b in zip(spreads, spreads[1:])) else "decreasing"}
    results = {"spreads": dict(zip(traces, spreads)), "grids": sorted(grids),
               "finest": finest.to_dict(include_nodes=False),
               "traces": {k: tr.to_dict() for k, tr in traces.items()}}
    return ExperimentResult(cfg.experiment, outcomes, results, traces={"finest": finest},
                            path=pth.ClassicalPath(ph.hamilton_flow(x0, sys, t, max(grids)).points),
                            metrics={"spread": finest.spread})


def shell_geodesic(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    sys, x0 = _classical(cfg)
    t = cfg.path.get("t_final", 2.0)
    src = pth.flow_source(x0, sys, t, cfg.path.get("sign", 1))
    base = pth.distorted_classical_source(src, sys, cfg.path.get("baseline_amplitude", 0.1),
                                          cfg.path.get("baseline_seed", 11))
    report = var.shell_geodesic_test(src, sys, _directions(cfg), _epsilons(cfg), _grids(cfg), base, executor,
                                     _thresholds(cfg))
    outcomes, results = _stationarity_result(report)
    return ExperimentResult(cfg.experiment, outcomes, results, {"phase_length": report},
                            path=src(max(_grids(cfg))), metrics=_report_metrics(report))


def config_space(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    sys, x0 = _classical(cfg)
    if sys.potential is None:
        raise ConfigError(f"system {sys.name!r} has no kinetic + potential split")
    E = float(sys.hamiltonian(x0))
    eq = bool(cfg.path.get("equipotential", False))
    try:
        src = pth.config_flow_source(x0, sys, cfg.path.get("t_final", 2.0), equipotential=eq)
        src(min(_grids(cfg)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    base = pth.distorted_config_source(src, sys, cfg.path.get("baseline_amplitude", 0.1),
                                       cfg.path.get("baseline_seed", 11))
    dirs = _directions(cfg, policy="project_to_level" if eq else None)
    jac, inv = var.config_space_suite(sys, E, src, dirs, _epsilons(cfg), _grids(cfg), base, executor,
                                      _thresholds(cfg))
    outcomes = {"jacobi_verdict": jac.verdict, "jacobi_baseline_verdict": jac.baseline.verdict,
                "inverse_verdict": inv.verdict, "inverse_baseline_verdict": inv.baseline.verdict}
    results = {"energy": E, "equipotential": eq, "jacobi": jac.to_dict(), "inverse_jacobi": inv.to_dict()}
    metrics = {**_report_metrics(jac, "jacobi_"), **_report_metrics(inv, "inverse_")}
    return ExperimentResult(cfg.experiment, outcomes, results, {"jacobi": jac, "inverse_jacobi": inv},
                            path=src(max(_grids(cfg))), metrics=metrics)


def spin_hypothesis(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    if cfg.system.kind != "classical_spin_pair":
        raise ConfigError("spin_hypothesis runs on the classical_spin_pair system")
    sys, x0 = _classical(cfg)
    _, traces = _traces(cfg, sys, x0)
    report, src, rel_time = _classical_stationarity(cfg, sys, x0, executor, "spin_time")
    outcomes, results = _stationarity_result(
        report,
        {"multiplier": classify_spread(max(tr.spread for tr in traces.values()), cfg.tolerances),
         "time_identity": _pass(rel_time < cfg.tolerances["time_rel"])},
        {k: tr.to_dict() for k, tr in traces.items()})
    results["time_rel_error"] = rel_time
    return ExperimentResult(cfg.experiment, outcomes, results, {"spin_time": report}, traces,
                            path=src(max(_grids(cfg))), metrics=_report_metrics(report))


RUNNERS = {
    "quantum_stationarity": quantum_stationarity,
    "quantum_residuals": quantum_residuals,
    "aa_length": aa_length,
    "nonlinear_flow": nonlinear_flow,
    "classical_stationarity": classical_stationarity,
    "lambda_consistency": lambda_consistency,
    "isoperimetric": isoperimetric,
    "shell_geodesic": shell_geodesic,
    "config_space": config_space,
    "spin_hypothesis": spin_hypothesis,
}


def run_experiment(cfg: ExperimentConfig, executor=None) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg, executor)

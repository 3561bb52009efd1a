"""Perturbation families, numerical first variations and stationarity verdicts.

A stationarity test evaluates dT/deps for endpoint-fixed deformations of a
path on a ladder of grid sizes. Along a genuinely stationary path the
extrapolated slope is pure discretization bias and falls off at the
quadrature order; along a non-stationary path it converges to a non-zero
constant. Each physical path is judged against a baseline path between the
same endpoints run through the identical pipeline.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateSpeed, FermatError
from .paths import ClassicalPath, ConfigPath, QuantumPath, horizontal_tangents
from .phase import (
    DEGENERACY_FLOOR,
    ClassicalSystem,
    ClassicalTrajectory,
    project_to_level,
    project_to_shell,
)

DEFAULT_EPSILONS = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
DEFAULT_GRIDS = (250, 500, 1000, 2000)
RATIO_THRESHOLD = 1e-3
ORDER_THRESHOLD = 2.0
# fitted orders of an O(h^2) bias scatter around 2 by fit error; accept 2 - ORDER_TOL
ORDER_TOL = 0.05
CONVERGENCE_TOL = 0.05
# slopes below this fraction of |T| count as round-off zero
ZERO_FLOOR = 1e-11
EXCLUSION = 1e-8


class DegenerateGeometry(FermatError, ValueError):
    """Every coordinate equation is excluded at some node."""


# ------------------------------------------------------------ perturbations


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


def _chord_tangents(nodes):
    idx = np.arange(nodes.shape[0])
    return nodes[np.minimum(idx + 1, idx[-1])] - nodes[np.maximum(idx - 1, 0)]


def _remove(d, u):
    """Remove the (real) component of d along the unit vectors u, row-wise."""
    return d - np.sum(d * u, axis=-1, keepdims=True) * u


@dataclass(frozen=True)
class PerturbationField:
    """Endpoint-vanishing deformation sin(m pi tau) * direction_k.

    The direction at each node is one seeded random vector with the
    components along the path tangent removed (pure reparametrizations) and,
    where a constraint applies, the components normal to the constraint
    surface removed as well. The result depends only on (seed, mode, path
    geometry). ``direction_fn`` (path -> per-node array) replaces the seeded
    draw when an explicit direction is wanted.
    """

    mode: int = 1
    seed: int = 0
    policy: str | None = None
    system: ClassicalSystem | None = None
    direction_fn: Callable | None = None

    def resolved_policy(self, path) -> str:
        if self.policy is not None:
            return self.policy
        if isinstance(path, QuantumPath):
            return "renormalize"
        if isinstance(path, ClassicalPath) and path.shell_energy is not None:
            return "project_to_shell"
        if isinstance(path, ConfigPath) and path.equipotential is not None:
            return "project_to_level"
        return "none"

    def shape(self, path) -> np.ndarray:
        s = np.sin(self.mode * np.pi * path.params)
        s[0] = s[-1] = 0.0
        return s

    def directions(self, path) -> np.ndarray:
        if self.direction_fn is not None:
            return np.asarray(self.direction_fn(path))
        nodes = path.nodes
        rng = np.random.default_rng([self.seed, self.mode])
        dim = nodes.shape[1]
        if isinstance(path, QuantumPath):
            v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            v = v / np.linalg.norm(v)
            d = v - np.sum(np.conj(nodes) * v, axis=1)[:, None] * nodes
            t = horizontal_tangents(nodes)
            return d - np.real(np.sum(np.conj(t) * d, axis=1))[:, None] * t
        v = rng.standard_normal(dim)
        d = np.tile(v / np.linalg.norm(v), (nodes.shape[0], 1))
        t = _chord_tangents(nodes)
        normal = None
        policy = self.resolved_policy(path)
        if policy == "project_to_shell":
            normal = _unit(self._require_system().gradient(nodes))
        elif policy == "project_to_level":
            normal = _unit(self._require_system().potential_gradient(nodes))
        if normal is not None:
            d = _remove(d, normal)
            t = _remove(t, normal)
        return _remove(d, _unit(t))

    def _require_system(self) -> ClassicalSystem:
        if self.system is None:
            raise ValueError("this constraint policy needs the field's system")
        return self.system

    def describe(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, "policy": self.policy,
                "explicit_direction": self.direction_fn is not None}


def _apply(path, field_, shape, d, eps):
    nodes = path.nodes
    new = nodes.copy()
    new[1:-1] = nodes[1:-1] + eps * shape[1:-1, None] * d[1:-1]
    policy = field_.resolved_policy(path)
    if policy == "renormalize":
        new[1:-1] /= np.linalg.norm(new[1:-1], axis=1)[:, None]
    elif policy == "project_to_shell":
        new[1:-1] = project_to_shell(new[1:-1], field_.system, path.shell_energy)
    elif policy == "project_to_level":
        sys = field_.system
        new[1:-1] = project_to_level(new[1:-1], sys.potential, sys.potential_gradient, path.equipotential)
    elif policy != "none":
        raise ValueError(f"unknown constraint policy {policy!r}")
    return path.with_nodes(new)


def perturb(path, field_: PerturbationField, eps: float):
    """Deform a path by eps along the field and restore its constraint.

    Endpoints are never touched; eps = 0 returns the path itself.
    """
    if eps == 0:
        return path
    return _apply(path, field_, field_.shape(path), field_.directions(path), eps)


@dataclass(frozen=True)
class VariationEstimate:
    eps: float
    values: tuple  # T(-2eps), T(-eps), T(eps), T(2eps)
    d2: float
    d4: float

    @property
    def value(self) -> float:
        return self.d4


def first_variation(functional, path, field_: PerturbationField, eps: float) -> VariationEstimate:
    """dT/deps at eps = 0 by the 4-point central stencil (2-point kept as a cross-check)."""
    shape = field_.shape(path)
    d = field_.directions(path)
    tm2, tm1, tp1, tp2 = (functional(_apply(path, field_, shape, d, s * eps)).value for s in (-2, -1, 1, 2))
    d2 = (tp1 - tm1) / (2 * eps)
    d4 = (-tp2 + 8 * tp1 - 8 * tm1 + tm2) / (12 * eps)
    return VariationEstimate(eps, (tm2, tm1, tp1, tp2), d2, d4)


def extrapolate_slope(estimates: Sequence[VariationEstimate]) -> float:
    """Extrapolate 4-point estimates to eps -> 0.

    The 4-point stencil has bias c4 eps^4 + c6 eps^6 + ...; with m amplitudes
    the intercept of a fit on {1, eps^4, eps^6, ...} (m terms) removes the
    first m - 1 bias orders (Richardson elimination).
    """
    if len(estimates) == 1:
        return estimates[0].d4
    eps = np.array([e.eps for e in estimates])
    y = np.array([e.d4 for e in estimates])
    x = eps / eps.max()
    powers = [0] + [2 * k + 2 for k in range(1, len(eps))]
    A = np.column_stack([x**p for p in powers])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def fitted_order(grids, slopes) -> float:
    """Observed decay order p in |slope| ~ n^-p by a log-log least-squares fit."""
    grids = np.asarray(grids, dtype=float)
    mag = np.abs(np.asarray(slopes, dtype=float))
    if len(grids) < 2 or np.any(mag == 0) or not np.all(np.isfinite(mag)):
        return float("nan")
    return float(-np.polyfit(np.log(grids), np.log(mag), 1)[0])


# ------------------------------------------------------------ reports


@dataclass
class GridRecord:
    grid: int
    T: float
    estimates: list
    slope: float


@dataclass
class DirectionRecord:
    mode: int
    seed: int
    grids: list
    order: float = float("nan")
    pairwise_orders: list = field(default_factory=list)
    monotone: bool = False
    converged: bool = False
    round_off: bool = False
    baseline_ratio: float = float("nan")

    @property
    def slopes(self):
        return [g.slope for g in self.grids]


@dataclass
class StationarityReport:
    functional_id: str
    base_value: float
    records: list
    grid_sizes: list
    epsilons: list
    verdict: str
    thresholds: dict
    baseline: "StationarityReport | None" = None
    label: str = "path"

    def to_dict(self) -> dict:
        return jsonable(asdict(self))

    def cells(self):
        """Flat (direction, eps, grid) rows for CSV export."""
        rows = []
        for j, rec in enumerate(self.records):
            for g in rec.grids:
                for est in g.estimates:
                    rows.append({"direction": j, "mode": rec.mode, "seed": rec.seed, "epsilon": est.eps,
                                 "grid": g.grid, "T": g.T, "dTde_2pt": est.d2, "dTde_4pt": est.d4})
        return rows


def jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return jsonable(obj.item())
    return obj


def _classify(rec: DirectionRecord, scale: float, thresholds: dict):
    slopes = np.array(rec.slopes)
    mags = np.abs(slopes)
    floor = thresholds["zero_floor"] * max(scale, 1.0)
    rec.round_off = bool(np.all(mags <= floor))
    rec.order = fitted_order([g.grid for g in rec.grids], slopes)
    rec.pairwise_orders = [
        float(math.log(mags[i] / mags[i + 1]) / math.log(rec.grids[i + 1].grid / rec.grids[i].grid))
        if mags[i] > 0 and mags[i + 1] > 0 else float("nan")
        for i in range(len(mags) - 1)
    ]
    rec.monotone = bool(np.all(np.diff(mags) < 0)) if len(mags) > 1 else False
    if len(slopes) > 1:
        last, prev = slopes[-1], slopes[-2]
        rec.converged = bool(abs(last) > floor and abs(last - prev) <= thresholds["convergence_tol"] * abs(last))
    else:
        rec.converged = False


def _verdict(records, thresholds, with_baseline: bool) -> str:
    def refined(r):
        return r.round_off or (r.monotone and r.order >= thresholds["order"] - thresholds["order_tol"])

    if with_baseline and all(refined(r) and r.baseline_ratio < thresholds["ratio"] for r in records):
        return "stationary"
    if any(r.converged for r in records):
        return "non-stationary"
    return "inconclusive"


def _run_cells(functional, paths, directions, epsilons, executor):
    jobs = [(j, n) for j in range(len(directions)) for n in paths]

    def work(job):
        j, n = job
        path = paths[n]
        ests = [first_variation(functional, path, directions[j], e) for e in epsilons]
        return GridRecord(n, functional(path).value, ests, extrapolate_slope(ests))

    results = list(executor.map(work, jobs)) if executor is not None else [work(job) for job in jobs]
    by_dir = [[] for _ in directions]
    for (j, _), res in zip(jobs, results):
        by_dir[j].append(res)
    return by_dir


def _evaluate(functional, source, directions, epsilons, grids, executor):
    grids = sorted(int(n) for n in grids)
    paths = {n: source(n) for n in grids}
    by_dir = _run_cells(functional, paths, directions, epsilons, executor)
    return [DirectionRecord(f.mode, f.seed, recs) for f, recs in zip(directions, by_dir)], grids


def stationarity_test(functional, source, directions: Sequence[PerturbationField],
                      epsilons: Sequence[float] = DEFAULT_EPSILONS, grids: Sequence[int] = DEFAULT_GRIDS,
                      baseline_source=None, functional_id: str = "", executor: Executor | None = None,
                      thresholds: dict | None = None, label: str = "physical") -> StationarityReport:
    """Run the first-variation ladder on a path source and issue a verdict.

    Parameters
    ----------
    functional : callable
        Path -> FunctionalValue.
    source, baseline_source : callable
        Grid size n -> path with n + 1 nodes. The baseline shares the
        endpoints and is run through the same directions, sweep and ladder.
    directions : sequence of PerturbationField
    epsilons, grids : sequences
        Deformation amplitudes and grid ladder.
    executor : concurrent.futures.Executor, optional
        Used to map over (direction, grid) cells; results are reduced in a
        fixed order so reports do not depend on the worker count.

    Returns
    -------
    StationarityReport
        Verdict ``stationary`` needs every direction to decay monotonically
        at fitted order >= ``order`` (or sit at round-off) and end below
        ``ratio`` times the baseline slope. ``non-stationary`` needs one
        direction whose slope converges to a non-zero constant. Anything
        else is ``inconclusive``.
    """
    th = {"ratio": RATIO_THRESHOLD, "order": ORDER_THRESHOLD, "order_tol": ORDER_TOL,
          "convergence_tol": CONVERGENCE_TOL, "zero_floor": ZERO_FLOOR}
    th.update(thresholds or {})
    directions = list(directions)
    records, grids = _evaluate(functional, source, directions, epsilons, grids, executor)
    base_value = records[0].grids[-1].T if records else float("nan")
    for rec in records:
        _classify(rec, abs(base_value), th)

    baseline = None
    if baseline_source is not None:
        brecords, _ = _evaluate(functional, baseline_source, directions, epsilons, grids, executor)
        bvalue = brecords[0].grids[-1].T
        for rec in brecords:
            _classify(rec, abs(bvalue), th)
        baseline = StationarityReport(functional_id, bvalue, brecords, grids, list(epsilons),
                                      _verdict(brecords, th, False), th, None, "baseline")
        for rec, brec in zip(records, brecords):
            b = abs(brec.slopes[-1])
            rec.baseline_ratio = abs(rec.slopes[-1]) / b if b > 0 else float("inf")

    verdict = _verdict(records, th, baseline is not None)
    return StationarityReport(functional_id, base_value, records, grids, list(epsilons), verdict, th,
                              baseline, label)


def seeded_directions(n_directions: int, modes: Sequence[int], seed: int, **kwargs):
    """Deterministic family: direction j uses modes[j % len(modes)] and seed + j."""
    return [PerturbationField(mode=int(modes[j % len(modes)]), seed=int(seed) + j, **kwargs)
            for j in range(n_directions)]


# ------------------------------------------------------------ multipliers


@dataclass
class MultiplierTrace:
    lambdas: np.ndarray
    excluded: np.ndarray
    node_spread: np.ndarray
    spread: float
    kind: str
    metadata: dict = field(default_factory=dict)

    def to_dict(self, include_nodes: bool = True) -> dict:
        out = {"kind": self.kind, "spread": self.spread, "n_nodes": int(self.lambdas.shape[0]),
               "n_excluded": int(np.sum(self.excluded)), "metadata": self.metadata}
        if include_nodes:
            out["lambdas"] = self.lambdas.tolist()
            out["excluded"] = self.excluded.astype(int).tolist()
            out["node_spread"] = self.node_spread.tolist()
        return jsonable(out)


def _speed_terms(traj: ClassicalTrajectory, sys: ClassicalSystem):
    x, xd, xdd = traj.points, traj.velocities, traj.accelerations
    g = sys.gradient(x)
    gn = np.linalg.norm(g, axis=1)
    if np.any(gn < DEGENERACY_FLOOR):
        raise DegenerateSpeed("trajectory touches a fixed point of the flow")
    F = 1.0 / gn
    dF = -np.einsum("nij,nj->ni", sys.hessian(x), g) / gn[:, None] ** 3
    G = np.linalg.norm(xd, axis=1)
    return g, gn, F, dF, G, xd, xdd


def lambda_consistency(traj: ClassicalTrajectory, sys: ClassicalSystem, E: float | None = None) -> MultiplierTrace:
    """Solve the shell-constrained Euler-Lagrange equations for the multiplier.

    With L = lambda (H - E) + F G, F = 1/|grad H| and G = |xdot|, every
    coordinate equation gives its own lambda_i at each node. Coordinates with
    |dH/dx_i| < 1e-8 |grad H| are excluded. The node spread is the range of
    the included lambda_i divided by max(|mean lambda|, s) where
    s = G^2 |grad F| / (G |grad H|) is the natural size of a multiplier term;
    the trace spread is the maximum node spread.
    """
    g, gn, F, dF, G, xd, xdd = _speed_terms(traj, sys)
    G2 = (G * G)[:, None]
    bracket = (G2 * (xdd * F[:, None] + xd * np.sum(dF * xd, axis=1)[:, None])
               - xd * F[:, None] * np.sum(xd * xdd, axis=1)[:, None]) / G2
    numer = bracket - G2 * dF
    excluded = np.abs(g) < EXCLUSION * gn[:, None]
    if np.any(np.all(excluded, axis=1)):
        raise DegenerateGeometry("all coordinate equations excluded at some node")
    denom = np.where(excluded, 1.0, G[:, None] * g)
    lambdas = np.where(excluded, np.nan, numer / denom)
    scale = np.linalg.norm(G2 * dF, axis=1) / (G * gn)
    hi = np.nanmax(lambdas, axis=1)
    lo = np.nanmin(lambdas, axis=1)
    mean = np.nanmean(lambdas, axis=1)
    size = np.maximum(np.abs(mean), scale)
    # identical multipliers agree exactly, even when every term vanishes
    node_spread = np.where(hi == lo, 0.0, (hi - lo) / np.where(size > 0, size, 1.0))
    meta = {"trajectory": traj.kind, "sign": traj.sign, "energy_drift": traj.energy_drift}
    if E is not None:
        meta["max_shell_residual"] = float(np.max(np.abs(sys.hamiltonian(traj.points) - E)))
    return MultiplierTrace(lambdas, excluded, node_spread, float(np.max(node_spread)), "shell", meta)


def isoperimetric_time_test(traj: ClassicalTrajectory, sys: ClassicalSystem, zero_tol: float = 1e-10) -> MultiplierTrace:
    """Length extremization under a fixed-time (isoperimetric) constraint.

    For L = G + lambda G F with constant lambda each coordinate equation is
    linear, lambda * B_i = kappa_i, with kappa the curvature term
    (xddot - xdot (xdot.xddot)/G^2)/G and B_i = G dF_i - (gradF.xdot) xdot_i/G
    - F kappa_i. Entries of B or kappa below ``zero_tol`` times their term
    magnitudes are treated as exact zeros. The spread is the relative residual
    ||kappa - lambda* B|| / ||kappa|| of the best single constant over all
    nodes and coordinates: 0 means one constant multiplier satisfies every
    equation, 1 means no constant helps at all.
    """
    g, gn, F, dF, G, xd, xdd = _speed_terms(traj, sys)
    along = np.sum(xd * xdd, axis=1)
    kappa = (xdd - xd * (along / (G * G))[:, None]) / G[:, None]
    kscale = (np.linalg.norm(xdd, axis=1) + np.abs(along) / G) / G
    kappa = np.where(np.abs(kappa) <= zero_tol * kscale[:, None], 0.0, kappa)
    t1 = G[:, None] * dF
    t2 = xd * (np.sum(dF * xd, axis=1) / G)[:, None]
    t3 = F[:, None] * kappa
    B = t1 - t2 - t3
    bscale = np.linalg.norm(t1, axis=1) + np.linalg.norm(t2, axis=1) + np.linalg.norm(t3, axis=1)
    B = np.where(np.abs(B) <= zero_tol * bscale[:, None], 0.0, B)
    with np.errstate(divide="ignore", invalid="ignore"):
        lambdas = np.where(B != 0, kappa / np.where(B != 0, B, 1.0), np.nan)
    knorm = math.sqrt(math.fsum((kappa * kappa).ravel()))
    bb = math.fsum((B * B).ravel())
    lam = math.fsum((B * kappa).ravel()) / bb if bb > 0 else 0.0
    resid = kappa - lam * B
    spread = math.sqrt(math.fsum((resid * resid).ravel())) / knorm if knorm > 0 else 0.0
    node_k = np.linalg.norm(kappa, axis=1)
    node_spread = np.where(node_k > 0, np.linalg.norm(resid, axis=1) / np.where(node_k > 0, node_k, 1.0), 0.0)
    meta = {"lambda_fit": lam, "kappa_norm": knorm, "B_norm": math.sqrt(bb), "undetermined": knorm == 0.0,
            "trajectory": traj.kind, "sign": traj.sign}
    return MultiplierTrace(lambdas, B == 0, node_spread, float(spread), "isoperimetric", meta)


# ------------------------------------------------------------ composite tests


def shell_geodesic_test(source, sys: ClassicalSystem, directions, epsilons=DEFAULT_EPSILONS, grids=DEFAULT_GRIDS,
                        baseline_source=None, executor=None, thresholds=None) -> StationarityReport:
    """Stationarity of bare phase-space length under shell-preserving variations."""
    from .functionals import path_length

    fields = [PerturbationField(f.mode, f.seed, "project_to_shell", sys, f.direction_fn) for f in directions]
    return stationarity_test(path_length, source, fields, epsilons, grids, baseline_source,
                             "phase_length", executor, thresholds)


def config_space_suite(sys: ClassicalSystem, E: float, source, directions, epsilons=DEFAULT_EPSILONS,
                       grids=DEFAULT_GRIDS, baseline_source=None, executor=None, thresholds=None):
    """Jacobi and inverse-Jacobi stationarity on the same configuration path.

    Returns ``(jacobi_report, inverse_report)``.
    """
    from .functionals import inverse_jacobi_action, jacobi_action

    fields = [PerturbationField(f.mode, f.seed, f.policy, sys, f.direction_fn) for f in directions]
    jac = stationarity_test(lambda p: jacobi_action(p, sys, E), source, fields, epsilons, grids,
                            baseline_source, "jacobi", executor, thresholds)
    inv = stationarity_test(lambda p: inverse_jacobi_action(p, sys, E), source, fields, epsilons, grids,
                            baseline_source, "inverse_jacobi", executor, thresholds)
    return jac, inv

"""Discrete evaluators for time functionals, lengths and Jacobi-type actions.

Every evaluator sums segment contributions ``ds_k * w_k`` where ``ds_k`` is a
chord (Euclidean, mass-weighted, or Fubini-Study closed form) and ``w_k`` a
segment weight: ``1/speed`` for time functionals, ``sqrt(E - V)`` for the
Jacobi action. Node speeds are averaged onto segments; potentials are
evaluated at chord midpoints. Sums use ``math.fsum`` so values are independent
of summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpeed, ForbiddenRegion
from .hilbert import DEGENERACY_FLOOR, fs_segment_length, uncertainty
from .paths import ClassicalPath, ConfigPath, QuantumPath
from .phase import ClassicalSystem, mass_arc_element


@dataclass(frozen=True)
class FunctionalValue:
    value: float
    ds: np.ndarray
    weights: np.ndarray
    contributions: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def grid_size(self) -> int:
        return self.ds.shape[0]

    @classmethod
    def from_segments(cls, ds, weights, **metadata):
        contributions = ds * weights
        return cls(math.fsum(contributions), ds, weights, contributions, metadata)


def quantum_time_functional(path: QuantumPath, H) -> FunctionalValue:
    """Sum of FS segment lengths divided by the segment-averaged energy uncertainty."""
    H = np.asarray(H, dtype=complex)
    dE = uncertainty(path.states, H)
    if np.any(dE <= DEGENERACY_FLOOR):
        k = int(np.argmin(dE))
        raise DegenerateSpeed(f"energy uncertainty {dE[k]:.3e} at node {k} is at or below the floor")
    ds = fs_segment_length(path.states[:-1], path.states[1:])
    speed = 0.5 * (dE[:-1] + dE[1:])
    return FunctionalValue.from_segments(ds, 1.0 / speed, kind="quantum_time")


def classical_time_functional(path: ClassicalPath, sys: ClassicalSystem) -> FunctionalValue:
    """Sum of Euclidean chords divided by the segment-averaged |grad H|."""
    nu = np.linalg.norm(sys.gradient(path.points), axis=1)
    if np.any(nu < DEGENERACY_FLOOR):
        k = int(np.argmin(nu))
        raise DegenerateSpeed(f"|grad H| = {nu[k]:.3e} at node {k} (fixed point of the flow)")
    ds = np.linalg.norm(np.diff(path.points, axis=0), axis=1)
    speed = 0.5 * (nu[:-1] + nu[1:])
    return FunctionalValue.from_segments(ds, 1.0 / speed, kind="classical_time")


def path_length(path) -> FunctionalValue:
    """Euclidean chord sum (phase or configuration space) or FS segment sum."""
    if isinstance(path, QuantumPath):
        ds = fs_segment_length(path.states[:-1], path.states[1:])
    else:
        ds = np.linalg.norm(np.diff(path.nodes, axis=0), axis=1)
    return FunctionalValue.from_segments(ds, np.ones_like(ds), kind="length")


def _kinetic_budget(path: ConfigPath, sys: ClassicalSystem, E: float):
    if sys.potential is None or sys.mass_matrix is None:
        raise ValueError(f"system {sys.name!r} has no potential/mass split")
    q = path.positions
    V_nodes = sys.potential(q)
    if np.any(V_nodes > E):
        k = int(np.argmax(V_nodes))
        raise ForbiddenRegion(f"V = {V_nodes[k]:.6g} > E = {E:.6g} at node {k}")
    V_mid = sys.potential(0.5 * (q[:-1] + q[1:]))
    ds = mass_arc_element(np.diff(q, axis=0), sys)
    return E - V_nodes, E - V_mid, ds


def jacobi_action(path: ConfigPath, sys: ClassicalSystem, E: float) -> FunctionalValue:
    """sum_k sqrt(E - V(q_mid,k)) ds_k with the mass-weighted arc element."""
    _, budget_mid, ds = _kinetic_budget(path, sys, E)
    if np.any(budget_mid < 0):
        raise ForbiddenRegion("a chord midpoint lies in the region V > E")
    return FunctionalValue.from_segments(ds, np.sqrt(budget_mid), kind="jacobi", energy=E)


def inverse_jacobi_action(path: ConfigPath, sys: ClassicalSystem, E: float) -> FunctionalValue:
    """sum_k ds_k / sqrt(E - V(q_mid,k)).

    Along a physical flow the configuration speed is sqrt(2T), so the value
    is sqrt(2) times the elapsed time; ``metadata['time_factor']`` holds the
    1/sqrt(2) that converts it.
    """
    budget_nodes, budget_mid, ds = _kinetic_budget(path, sys, E)
    low = min(float(np.min(budget_nodes)), float(np.min(budget_mid)))
    if low <= DEGENERACY_FLOOR:
        raise DegenerateSpeed(f"E - V = {low:.3e} reaches a turning point")
    return FunctionalValue.from_segments(ds, 1.0 / np.sqrt(budget_mid), kind="inverse_jacobi", energy=E,
                                         time_factor=1.0 / math.sqrt(2.0))

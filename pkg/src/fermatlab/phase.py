"""Classical phase-space flows, speeds and energy-shell projection.

Phase points are real arrays ordered ``(q_1..q_N, p_1..p_N)``. All system
callables are vectorized over leading axes, so a whole discretized path can be
evaluated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateSpeed, DimensionMismatch, NonFiniteState, ProjectionError

DEGENERACY_FLOOR = 1e-12
SHELL_TOL = 1e-12
MAX_NEWTON = 50


@dataclass(frozen=True)
class ClassicalSystem:
    """Hamiltonian with analytic gradient and Hessian.

    ``potential`` and ``mass_matrix`` are only set for systems with a
    kinetic + potential split; configuration-space functionals need both.
    """

    name: str
    n_dof: int
    hamiltonian: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    potential: Callable[[np.ndarray], np.ndarray] | None = None
    potential_gradient: Callable[[np.ndarray], np.ndarray] | None = None
    mass_matrix: np.ndarray | None = None
    energy_reference: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return 2 * self.n_dof

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., : self.n_dof], x[..., self.n_dof :]


def symplectic_matrix(n_dof: int) -> np.ndarray:
    """J with xdot = J grad H, i.e. qdot = dH/dp and pdot = -dH/dq."""
    eye = np.eye(n_dof)
    zero = np.zeros((n_dof, n_dof))
    return np.block([[zero, eye], [-eye, zero]])


def _as_points(x, sys):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != sys.dim:
        raise DimensionMismatch(f"phase point has dimension {x.shape[-1]}, system expects {sys.dim}")
    return x


def phase_speed(x, sys: ClassicalSystem):
    """|grad H(x)|; raises DegenerateSpeed at (or near) fixed points."""
    x = _as_points(x, sys)
    speed = np.linalg.norm(sys.gradient(x), axis=-1)
    if np.any(speed < DEGENERACY_FLOOR):
        raise DegenerateSpeed(f"|grad H| = {np.min(speed):.3e} below floor {DEGENERACY_FLOOR}")
    return speed if speed.ndim else float(speed)


@dataclass(frozen=True)
class ClassicalTrajectory:
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    energy_drift: float
    sign: int = 1
    kind: str = "hamiltonian"

    def __len__(self):
        return self.times.shape[0]

    def subsample(self, stride: int) -> "ClassicalTrajectory":
        s = slice(None, None, stride)
        return ClassicalTrajectory(
            self.times[s], self.points[s], self.velocities[s], self.accelerations[s],
            self.energy_drift, self.sign, self.kind,
        )


def _rk4(rhs, x0, dt, n_steps):
    xs = np.empty((n_steps + 1, x0.shape[0]))
    xs[0] = x0
    x = x0
    # overflow is reported as NonFiniteState below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            k1 = rhs(x)
            k2 = rhs(x + dt / 2 * k1)
            k3 = rhs(x + dt / 2 * k2)
            k4 = rhs(x + dt * k3)
            x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise NonFiniteState(f"phase point became non-finite at step {k + 1} (t = {(k + 1) * dt:.6g})")
            xs[k + 1] = x
    return xs


def hamiltonian_velocity(x, sys: ClassicalSystem, sign: int = 1):
    J = symplectic_matrix(sys.n_dof)
    return sign * sys.gradient(x) @ J.T


def hamiltonian_acceleration(x, sys: ClassicalSystem):
    """xddot = J Hess(H) J grad H; independent of the time direction."""
    J = symplectic_matrix(sys.n_dof)
    xdot = sys.gradient(x) @ J.T
    return np.einsum("ij,...jk,...k->...i", J, sys.hessian(x), xdot)


def hamilton_flow(x0, sys: ClassicalSystem, t_final: float, n_steps: int, sign: int = 1) -> ClassicalTrajectory:
    """Classical RK4 integration of xdot = sign * J grad H.

    Velocities and accelerations at the nodes are evaluated analytically from
    the node positions. ``energy_drift`` is max |H(x_k) - H(x_0)|.
    """
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps}")
    x0 = _as_points(x0, sys)
    J = symplectic_matrix(sys.n_dof)

    def rhs(x):
        return sign * (J @ sys.gradient(x))

    dt = t_final / n_steps
    xs = _rk4(rhs, x0, dt, n_steps)
    energies = sys.hamiltonian(xs)
    drift = float(np.max(np.abs(energies - energies[0])))
    return ClassicalTrajectory(
        times=np.linspace(0.0, t_final, n_steps + 1),
        points=xs,
        velocities=hamiltonian_velocity(xs, sys, sign),
        accelerations=hamiltonian_acceleration(xs, sys),
        energy_drift=drift,
        sign=sign,
    )


def gradient_flow(x0, sys: ClassicalSystem, t_final: float, n_steps: int) -> ClassicalTrajectory:
    """Steepest-descent path xdot = -grad H, used as a non-Hamiltonian comparison."""
    x0 = _as_points(x0, sys)
    dt = t_final / n_steps
    xs = _rk4(lambda x: -sys.gradient(x), x0, dt, n_steps)
    g = sys.gradient(xs)
    acc = np.einsum("...ij,...j->...i", sys.hessian(xs), g)
    energies = sys.hamiltonian(xs)
    return ClassicalTrajectory(
        times=np.linspace(0.0, t_final, n_steps + 1),
        points=xs,
        velocities=-g,
        accelerations=acc,
        energy_drift=float(np.max(np.abs(energies - energies[0]))),
        sign=1,
        kind="gradient",
    )


def project_to_level(x, func, grad, level: float, tol: float = SHELL_TOL, max_iter: int = MAX_NEWTON,
                     return_iterations: bool = False):
    """Newton projection of points onto the level set func = level.

    Each point moves along its local gradient,
    x <- x - ((f(x) - level) / |grad f|^2) grad f. Points already within
    ``tol`` are returned untouched; points that needed iterations get one extra
    polishing step so the residual ends at round-off level.

    Raises
    ------
    DegenerateSpeed
        If an iterate reaches a critical point of ``func``.
    ProjectionError
        If some point has not converged after ``max_iter`` iterations.
    """
    x = np.array(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    iterations = np.zeros(x.shape[0], dtype=int)
    active = np.abs(func(x) - level) >= tol
    touched = active.copy()
    while np.any(active):
        if np.any(iterations[active] >= max_iter):
            raise ProjectionError(f"no convergence to level {level} within {max_iter} iterations")
        xa = x[active]
        g = grad(xa)
        g2 = np.sum(g * g, axis=-1)
        if np.any(np.sqrt(g2) < DEGENERACY_FLOOR):
            raise DegenerateSpeed("projection iterate reached a critical point")
        x[active] = xa - ((func(xa) - level) / g2)[:, None] * g
        iterations[active] += 1
        if not np.all(np.isfinite(x[active])):
            raise ProjectionError("projection produced non-finite coordinates")
        active = np.abs(func(x) - level) >= tol
    if np.any(touched):
        xt = x[touched]
        g = grad(xt)
        x[touched] = xt - ((func(xt) - level) / np.sum(g * g, axis=-1))[:, None] * g
    out = x[0] if single else x
    if return_iterations:
        return out, (iterations[0] if single else iterations)
    return out


def project_to_shell(x, sys: ClassicalSystem, E: float, tol: float = SHELL_TOL, max_iter: int = MAX_NEWTON,
                     return_iterations: bool = False):
    """Project phase points onto the energy shell H = E (see project_to_level)."""
    x = _as_points(x, sys)
    return project_to_level(x, sys.hamiltonian, sys.gradient, E, tol, max_iter, return_iterations)


def kinetic_energy(qdot, sys: ClassicalSystem):
    """T = 1/2 qdot . M . qdot."""
    M = _mass(sys)
    qdot = np.asarray(qdot, dtype=float)
    return 0.5 * np.einsum("...i,ij,...j->...", qdot, M, qdot)


def config_kinetic_speed(qdot, sys: ClassicalSystem):
    """sqrt(2T), the configuration-space speed in the mass-weighted metric."""
    return np.sqrt(2.0 * kinetic_energy(qdot, sys))


def mass_arc_element(dq, sys: ClassicalSystem):
    """ds = sqrt(dq . M . dq)."""
    M = _mass(sys)
    dq = np.asarray(dq, dtype=float)
    return np.sqrt(np.einsum("...i,ij,...j->...", dq, M, dq))


def _mass(sys):
    if sys.mass_matrix is None:
        raise ValueError(f"system {sys.name!r} has no mass matrix")
    return sys.mass_matrix


def check_derivatives(sys: ClassicalSystem, points, step: float = 1e-6) -> dict:
    """Cross-validate analytic gradient and Hessian against central differences.

    Returns the worst relative gradient error, the worst Hessian asymmetry and
    the worst relative Hessian error over ``points`` (shape (n, 2N)).
    """
    points = np.atleast_2d(_as_points(points, sys))
    n = sys.dim
    grad_err = hess_err = asym = 0.0
    for x in points:
        g = sys.gradient(x)
        Hs = sys.hessian(x)
        fd_g = np.empty(n)
        fd_H = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = step * max(1.0, abs(x[i]))
            fd_g[i] = (sys.hamiltonian(x + e) - sys.hamiltonian(x - e)) / (2 * e[i])
            fd_H[:, i] = (sys.gradient(x + e) - sys.gradient(x - e)) / (2 * e[i])
        gscale = max(1.0, np.max(np.abs(g)))
        hscale = max(1.0, np.max(np.abs(Hs)))
        grad_err = max(grad_err, np.max(np.abs(fd_g - g)) / gscale)
        hess_err = max(hess_err, np.max(np.abs(fd_H - Hs)) / hscale)
        asym = max(asym, np.max(np.abs(Hs - Hs.T)))
    return {"gradient": float(grad_err), "hessian": float(hess_err), "asymmetry": float(asym)}

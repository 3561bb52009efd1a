"""Endpoint-fixed discretized paths, path sources and the CSV node layout.

A path holds ``n + 1`` nodes on the uniform grid tau_k = k/n. A *source* is a
callable ``n -> path`` that samples one continuous curve at any grid size; the
variation engine uses sources to re-evaluate the same curve under refinement.

CSV layout (one row per node, header line first):

* quantum: ``tau,re_0,im_0,re_1,im_1,...``
* classical: ``tau,q1..qN,p1..pN`` plus a ``# shell_energy=<E>`` comment line
  when the path is on-shell
* configuration: ``tau,q1..qN``
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch
from .hilbert import fs_segment_length, inner, propagate_schrodinger
from .phase import ClassicalSystem, hamilton_flow, project_to_level, project_to_shell

SHELL_PATH_TOL = 1e-10
EQUIPOTENTIAL_TOL = 1e-8


def tau_grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n + 1)


@dataclass(frozen=True)
class QuantumPath:
    states: np.ndarray

    def __post_init__(self):
        norms = np.linalg.norm(self.states, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ValueError("every node of a quantum path must be normalized")

    @property
    def n(self) -> int:
        return self.states.shape[0] - 1

    @property
    def params(self) -> np.ndarray:
        return tau_grid(self.n)

    @property
    def nodes(self) -> np.ndarray:
        return self.states

    def with_nodes(self, nodes) -> "QuantumPath":
        return QuantumPath(nodes)

    def split(self, k: int):
        return QuantumPath(self.states[: k + 1]), QuantumPath(self.states[k:])


@dataclass(frozen=True)
class ClassicalPath:
    points: np.ndarray
    shell_energy: float | None = None

    @property
    def n(self) -> int:
        return self.points.shape[0] - 1

    @property
    def params(self) -> np.ndarray:
        return tau_grid(self.n)

    @property
    def nodes(self) -> np.ndarray:
        return self.points

    def with_nodes(self, nodes) -> "ClassicalPath":
        return ClassicalPath(nodes, self.shell_energy)

    def check_shell(self, sys: ClassicalSystem, tol: float = SHELL_PATH_TOL) -> float:
        """Max |H - E| over nodes; raises ValueError above ``tol``."""
        if self.shell_energy is None:
            return 0.0
        dev = float(np.max(np.abs(sys.hamiltonian(self.points) - self.shell_energy)))
        if dev >= tol:
            raise ValueError(f"path leaves the energy shell by {dev:.3e}")
        return dev

    def split(self, k: int):
        return (ClassicalPath(self.points[: k + 1], self.shell_energy),
                ClassicalPath(self.points[k:], self.shell_energy))


@dataclass(frozen=True)
class ConfigPath:
    positions: np.ndarray
    # level of V the path is confined to, when variations must stay on it
    equipotential: float | None = None

    @property
    def n(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def params(self) -> np.ndarray:
        return tau_grid(self.n)

    @property
    def nodes(self) -> np.ndarray:
        return self.positions

    def with_nodes(self, nodes) -> "ConfigPath":
        return ConfigPath(nodes, self.equipotential)

    def split(self, k: int):
        return (ConfigPath(self.positions[: k + 1], self.equipotential),
                ConfigPath(self.positions[k:], self.equipotential))


# ------------------------------------------------------------------ sources

PathSource = Callable[[int], object]


def schrodinger_source(psi0, H, t_final: float, sign: int = 1) -> PathSource:
    """Nodes of the exact Schrödinger flow over [0, t_final]."""

    def source(n):
        return QuantumPath(propagate_schrodinger(psi0, H, t_final, n, sign).states)

    return source


def fs_geodesic(psi_a, psi_b, n: int) -> QuantumPath:
    """Great-circle interpolation between the rays of two states.

    ``psi_b`` is phase-aligned to ``psi_a`` first; the returned endpoints are
    ``psi_a`` and the aligned ``psi_b`` (same ray as the input).
    """
    psi_a = np.asarray(psi_a, dtype=complex)
    psi_b = np.asarray(psi_b, dtype=complex)
    ov = np.vdot(psi_a, psi_b)
    if abs(ov) > 0:
        psi_b = psi_b * np.conj(ov) / abs(ov)
    theta = float(fs_segment_length(psi_a, psi_b))
    tau = tau_grid(n)
    if theta == 0.0:
        return QuantumPath(np.tile(psi_a, (n + 1, 1)))
    perp = psi_b - np.vdot(psi_a, psi_b) * psi_a
    perp = perp / np.linalg.norm(perp)
    states = np.cos(tau * theta)[:, None] * psi_a + np.sin(tau * theta)[:, None] * perp
    states /= np.linalg.norm(states, axis=1)[:, None]
    states[-1] = psi_b / np.linalg.norm(psi_b)
    return QuantumPath(states)


def geodesic_source(psi_a, psi_b) -> PathSource:
    return lambda n: fs_geodesic(psi_a, psi_b, n)


def _bump_vector(dim, seed, complex_valued):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(dim)
    if complex_valued:
        w = w + 1j * rng.standard_normal(dim)
    return w / np.linalg.norm(w)


def distorted_quantum_source(base: PathSource, amplitude: float, seed: int) -> PathSource:
    """Base path plus a seeded smooth bump amplitude*sin(pi tau)*w, renormalized."""

    def source(n):
        path = base(n)
        states = path.states.copy()
        w = _bump_vector(states.shape[1], seed, True)
        shape = np.sin(np.pi * path.params)
        shape[0] = shape[-1] = 0.0
        states[1:-1] = states[1:-1] + amplitude * shape[1:-1, None] * w
        states[1:-1] /= np.linalg.norm(states[1:-1], axis=1)[:, None]
        return QuantumPath(states)

    return source


def flow_points(x0, sys: ClassicalSystem, t_final: float, n: int, sign: int = 1, fine_steps: int = 8000):
    """Hamiltonian-flow nodes at n + 1 uniform times, integrated with a fine substep."""
    stride = max(1, -(-fine_steps // n))
    traj = hamilton_flow(x0, sys, t_final, n * stride, sign)
    return traj.points[::stride], traj


def flow_source(x0, sys: ClassicalSystem, t_final: float, sign: int = 1, on_shell: bool = True,
                fine_steps: int = 8000) -> PathSource:
    """Phase-space path sampled from the Hamiltonian flow.

    With ``on_shell`` the path carries the shell energy H(x0) and the nodes are
    polished onto the shell (integrator drift is far below the projection
    tolerance, so this only removes round-off).
    """
    E = float(sys.hamiltonian(np.asarray(x0, dtype=float)))
    cache = {}

    def source(n):
        if n not in cache:
            pts, _ = flow_points(x0, sys, t_final, n, sign, fine_steps)
            if on_shell:
                pts = pts.copy()
                pts[1:-1] = project_to_shell(pts[1:-1], sys, E)
            cache[n] = pts
        return ClassicalPath(cache[n].copy(), E if on_shell else None)

    return source


def distorted_classical_source(base: PathSource, sys: ClassicalSystem, amplitude: float, seed: int) -> PathSource:
    """Base path plus amplitude*sin(pi tau)*w, projected back onto its shell."""

    def source(n):
        path = base(n)
        pts = path.points.copy()
        w = _bump_vector(pts.shape[1], seed, False)
        shape = np.sin(np.pi * path.params)
        pts[1:-1] = pts[1:-1] + amplitude * shape[1:-1, None] * w
        if path.shell_energy is not None:
            pts[1:-1] = project_to_shell(pts[1:-1], sys, path.shell_energy)
        return ClassicalPath(pts, path.shell_energy)

    return source


def linear_shell_source(xa, xb, sys: ClassicalSystem, E: float) -> PathSource:
    """Straight chord between two on-shell points, projected onto the shell."""
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)

    def source(n):
        tau = tau_grid(n)[:, None]
        pts = (1 - tau) * xa + tau * xb
        pts[1:-1] = project_to_shell(pts[1:-1], sys, E)
        return ClassicalPath(pts, E)

    return source


def config_flow_source(x0, sys: ClassicalSystem, t_final: float, equipotential: bool = False,
                       fine_steps: int = 8000) -> PathSource:
    """Configuration-space projection q(t) of a Hamiltonian flow."""
    cache = {}
    level = None
    if equipotential:
        level = float(sys.potential(np.asarray(x0, dtype=float)[: sys.n_dof]))

    def source(n):
        if n not in cache:
            pts, _ = flow_points(x0, sys, t_final, n, 1, fine_steps)
            q = pts[:, : sys.n_dof].copy()
            if level is not None:
                off = float(np.max(np.abs(sys.potential(q) - level)))
                if off > EQUIPOTENTIAL_TOL:
                    raise ValueError(f"flow leaves the equipotential V = {level:.6g} by {off:.3e}")
            cache[n] = q
        return ConfigPath(cache[n].copy(), level)

    return source


def distorted_config_source(base: PathSource, sys: ClassicalSystem, amplitude: float, seed: int) -> PathSource:
    """Base configuration path plus a seeded bump; kept on the equipotential if the base is."""

    def source(n):
        path = base(n)
        pos = path.positions.copy()
        w = _bump_vector(pos.shape[1], seed, False)
        shape = np.sin(np.pi * path.params)
        pos[1:-1] = pos[1:-1] + amplitude * shape[1:-1, None] * w
        if path.equipotential is not None:
            pos[1:-1] = project_to_level(pos[1:-1], sys.potential, sys.potential_gradient, path.equipotential)
        return ConfigPath(pos, path.equipotential)

    return source


# ------------------------------------------------------------------ CSV


def path_to_csv(path) -> str:
    """Serialize a path to the documented CSV layout (full float precision)."""
    buf = io.StringIO()
    tau = path.params
    if isinstance(path, QuantumPath):
        d = path.states.shape[1]
        header = ["tau"] + [f"{part}_{i}" for i in range(d) for part in ("re", "im")]
        body = np.empty((path.n + 1, 2 * d))
        body[:, 0::2] = path.states.real
        body[:, 1::2] = path.states.imag
    elif isinstance(path, ClassicalPath):
        N = path.points.shape[1] // 2
        header = ["tau"] + [f"q{i + 1}" for i in range(N)] + [f"p{i + 1}" for i in range(N)]
        body = path.points
        if path.shell_energy is not None:
            buf.write(f"# shell_energy={path.shell_energy!r}\n")
    elif isinstance(path, ConfigPath):
        header = ["tau"] + [f"q{i + 1}" for i in range(path.positions.shape[1])]
        body = path.positions
        if path.equipotential is not None:
            buf.write(f"# equipotential={path.equipotential!r}\n")
    else:
        raise TypeError(f"not a path: {type(path).__name__}")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for t, row in zip(tau, body):
        writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    return buf.getvalue()


def path_from_csv(text: str):
    """Inverse of :func:`path_to_csv`; the path type is read from the header."""
    meta = {}
    lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = float(value)
        elif line.strip():
            lines.append(line)
    rows = list(csv.reader(lines))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    body = data[:, 1:]
    if header[1].startswith("re_"):
        return QuantumPath(body[:, 0::2] + 1j * body[:, 1::2])
    if any(h.startswith("p") for h in header[1:]):
        return ClassicalPath(body, meta.get("shell_energy"))
    return ConfigPath(body, meta.get("equipotential"))


def node_count_check(path, expected_dim: int):
    if path.nodes.shape[1] != expected_dim:
        raise DimensionMismatch(f"path nodes have dimension {path.nodes.shape[1]}, expected {expected_dim}")


def horizontal_tangents(states: np.ndarray) -> np.ndarray:
    """Unit projective tangents at every node from phase-aligned neighbours."""
    def lift(k_from, k_to):
        ov = inner(states[k_from], states[k_to])
        aligned = states[k_to] * (np.conj(ov) / np.maximum(np.abs(ov), 1e-300))[:, None]
        return aligned - inner(states[k_from], aligned)[:, None] * states[k_from]

    idx = np.arange(states.shape[0])
    fwd = np.minimum(idx + 1, idx[-1])
    bwd = np.maximum(idx - 1, 0)
    u = lift(idx, fwd) - lift(idx, bwd)
    norms = np.linalg.norm(u, axis=1)
    return u / np.where(norms > 0, norms, 1.0)[:, None]

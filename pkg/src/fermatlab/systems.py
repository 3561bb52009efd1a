"""Catalog of quantum and classical test systems.

Every classical system carries an analytic gradient and Hessian. Shipped
kinetic terms use the p^2/2m normalization.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch
from .hilbert import MAX_DIM, TimeDependentHamiltonian, as_hermitian
from .phase import ClassicalSystem

QUANTUM_KINDS = ("qubit_field", "driven_qubit", "heisenberg_chain", "random_hermitian")
CLASSICAL_KINDS = (
    "oscillator_nd",
    "pendulum",
    "double_well",
    "henon_heiles_like",
    "classical_spin_pair",
    "free_particle",
)
MAX_SITES = 6
MAX_CLASSICAL_DOF = 6

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# defaults double as the list of accepted parameter names
DEFAULTS = {
    "qubit_field": {"field": [1.0, 0.0, 0.0]},
    "driven_qubit": {"omega0": 1.0, "amplitude": 0.5, "drive_frequency": 1.0},
    "heisenberg_chain": {"n_sites": 3, "coupling": 1.0, "field_z": 0.0, "periodic": False},
    "random_hermitian": {"dim": 8, "scale": 1.0},
    "oscillator_nd": {"n_dof": 1, "omega": 1.0, "mass": 1.0},
    "pendulum": {"n_dof": 1, "strength": 1.0, "mass": 1.0},
    "double_well": {"a": 1.0, "mass": 1.0},
    "henon_heiles_like": {"lam": 1.0},
    "classical_spin_pair": {"n_spins": 2, "coupling": 1.0, "field": 0.5},
    "free_particle": {"n_dof": 1, "mass": 1.0},
}


@dataclass(frozen=True)
class SystemSpec:
    kind: str
    parameters: dict = field(default_factory=dict)
    seed: int | None = None

    def resolved(self) -> dict:
        """Parameters with defaults filled in; unknown names raise ConfigError."""
        if self.kind not in DEFAULTS:
            raise ConfigError(f"unknown system kind {self.kind!r}; expected one of {sorted(DEFAULTS)}")
        unknown = set(self.parameters) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown parameter(s) {sorted(unknown)} for system kind {self.kind!r}")
        return {**DEFAULTS[self.kind], **self.parameters}

    @property
    def is_quantum(self) -> bool:
        return self.kind in QUANTUM_KINDS

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemSpec":
        unknown = set(data) - {"kind", "parameters", "seed"}
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)} in system spec")
        if "kind" not in data:
            raise ConfigError("system spec needs a 'kind'")
        return cls(data["kind"], dict(data.get("parameters", {})), data.get("seed"))


@dataclass(frozen=True)
class QuantumSystem:
    name: str
    dim: int
    hamiltonian: np.ndarray | TimeDependentHamiltonian
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------- quantum


def spin_operators(n_sites: int, site: int):
    """(Sx, Sy, Sz) with S = sigma/2 acting on one site of a chain."""
    ops = []
    for s in (SIGMA_X, SIGMA_Y, SIGMA_Z):
        m = np.array([[1.0]], dtype=complex)
        for k in range(n_sites):
            m = np.kron(m, s / 2 if k == site else np.eye(2))
        ops.append(m)
    return ops


def heisenberg_chain(n_sites: int, coupling: float = 1.0, field_z: float = 0.0, periodic: bool = False):
    if not 2 <= n_sites <= MAX_SITES:
        raise DimensionMismatch(f"n_sites must be in [2, {MAX_SITES}], got {n_sites}")
    spins = [spin_operators(n_sites, i) for i in range(n_sites)]
    d = 2**n_sites
    H = np.zeros((d, d), dtype=complex)
    bonds = [(i, i + 1) for i in range(n_sites - 1)]
    if periodic and n_sites > 2:
        bonds.append((n_sites - 1, 0))
    for i, j in bonds:
        for a in range(3):
            H += coupling * spins[i][a] @ spins[j][a]
    for i in range(n_sites):
        H += field_z * spins[i][2]
    return H


def total_sz(n_sites: int):
    return sum(spin_operators(n_sites, i)[2] for i in range(n_sites))


def random_hermitian(dim: int, seed, scale: float = 1.0):
    """Gaussian unitary ensemble draw, normalized so the spectrum is O(scale)."""
    if not 2 <= dim <= MAX_DIM:
        raise DimensionMismatch(f"dim must be in [2, {MAX_DIM}], got {dim}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    H = scale * (A + A.conj().T) / (2.0 * np.sqrt(dim))
    return 0.5 * (H + H.conj().T)


def driven_qubit(omega0: float = 1.0, amplitude: float = 0.5, drive_frequency: float = 1.0):
    """H(t) = omega0/2 sigma_z + amplitude cos(drive_frequency t) sigma_x."""

    def H(t):
        return 0.5 * omega0 * SIGMA_Z + amplitude * np.cos(drive_frequency * t) * SIGMA_X

    bound = abs(omega0) + 2 * abs(amplitude) + abs(drive_frequency)
    return TimeDependentHamiltonian(H, 2, max_frequency=bound)


def build_quantum(spec: SystemSpec) -> QuantumSystem:
    if spec.kind not in QUANTUM_KINDS:
        raise ConfigError(f"{spec.kind!r} is not a quantum system kind")
    p = spec.resolved()
    if spec.kind == "qubit_field":
        b = np.asarray(p["field"], dtype=float)
        if b.shape != (3,):
            raise ConfigError("qubit_field 'field' must have three components")
        H = b[0] * SIGMA_X + b[1] * SIGMA_Y + b[2] * SIGMA_Z
        return QuantumSystem("qubit_field", 2, as_hermitian(H), {"field": b.tolist()})
    if spec.kind == "driven_qubit":
        Ht = driven_qubit(p["omega0"], p["amplitude"], p["drive_frequency"])
        return QuantumSystem("driven_qubit", 2, Ht, dict(p))
    if spec.kind == "heisenberg_chain":
        n = int(p["n_sites"])
        H = heisenberg_chain(n, p["coupling"], p["field_z"], bool(p["periodic"]))
        return QuantumSystem("heisenberg_chain", 2**n, as_hermitian(H), dict(p))
    dim = int(p["dim"])
    if spec.seed is None:
        raise ConfigError("random_hermitian needs a seed")
    H = random_hermitian(dim, spec.seed, p["scale"])
    return QuantumSystem("random_hermitian", dim, as_hermitian(H), {**p, "seed": spec.seed})


# ---------------------------------------------------------------- classical


def _vector_param(value, n, name, positive=True):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    if positive and np.any(arr <= 0):
        raise ConfigError(f"parameter {name!r} must be positive, got {value}")
    return arr


def _check_dof(n):
    n = int(n)
    if not 1 <= n <= MAX_CLASSICAL_DOF:
        raise DimensionMismatch(f"n_dof must be in [1, {MAX_CLASSICAL_DOF}], got {n}")
    return n


def _separable(name, n, m, V, dV, d2V, params, convention="p^2/2m"):
    """System with H = sum p^2/2m + V(q) from V, grad V and diagonal-or-full Hessian of V."""

    def H(x):
        x = np.asarray(x, dtype=float)
        q, p = x[..., :n], x[..., n:]
        return np.sum(p * p / (2 * m), axis=-1) + V(q)

    def grad(x):
        x = np.asarray(x, dtype=float)
        q, p = x[..., :n], x[..., n:]
        return np.concatenate([dV(q), p / m], axis=-1)

    def hess(x):
        x = np.asarray(x, dtype=float)
        q = x[..., :n]
        out = np.zeros(x.shape[:-1] + (2 * n, 2 * n))
        out[..., :n, :n] = d2V(q)
        out[..., n:, n:] = np.diag(1.0 / m)
        return out

    return ClassicalSystem(
        name=name, n_dof=n, hamiltonian=H, gradient=grad, hessian=hess,
        potential=V, potential_gradient=dV, mass_matrix=np.diag(m),
        metadata={**params, "kinetic": convention},
    )


def _diag_hessian(d2):
    def f(q):
        vals = d2(q)
        return vals[..., :, None] * np.eye(vals.shape[-1])

    return f


def oscillator(n_dof=1, omega=1.0, mass=1.0):
    n = _check_dof(n_dof)
    w = _vector_param(omega, n, "omega")
    m = _vector_param(mass, n, "mass")
    k = m * w * w
    return _separable(
        "oscillator_nd", n, m,
        lambda q: 0.5 * np.sum(k * q * q, axis=-1),
        lambda q: k * q,
        _diag_hessian(lambda q: np.broadcast_to(k, q.shape)),
        {"n_dof": n, "omega": w.tolist(), "mass": m.tolist()},
    )


def pendulum(n_dof=1, strength=1.0, mass=1.0):
    """Uncoupled pendula, H = sum p^2/2m - strength cos q."""
    n = _check_dof(n_dof)
    m = _vector_param(mass, n, "mass")
    g = _vector_param(strength, n, "strength")
    return _separable(
        "pendulum", n, m,
        lambda q: -np.sum(g * np.cos(q), axis=-1),
        lambda q: g * np.sin(q),
        _diag_hessian(lambda q: g * np.cos(q)),
        {"n_dof": n, "strength": g.tolist(), "mass": m.tolist()},
    )


def double_well(a=1.0, mass=1.0):
    """V = a (q^2 - 1)^2, minima at q = ±1."""
    if a <= 0:
        raise ConfigError(f"double_well 'a' must be positive, got {a}")
    m = _vector_param(mass, 1, "mass")
    return _separable(
        "double_well", 1, m,
        lambda q: a * np.sum((q * q - 1) ** 2, axis=-1),
        lambda q: 4 * a * q * (q * q - 1),
        _diag_hessian(lambda q: a * (12 * q * q - 4)),
        {"a": a, "mass": m.tolist()},
    )


def henon_heiles(lam=1.0):
    """V = (q1^2 + q2^2)/2 + lam (q1^2 q2 - q2^3/3)."""
    if lam == 0:
        raise ConfigError("henon_heiles_like needs a non-zero coupling 'lam'")
    m = np.ones(2)

    def V(q):
        q1, q2 = q[..., 0], q[..., 1]
        return 0.5 * (q1 * q1 + q2 * q2) + lam * (q1 * q1 * q2 - q2**3 / 3)

    def dV(q):
        q1, q2 = q[..., 0], q[..., 1]
        return np.stack([q1 + 2 * lam * q1 * q2, q2 + lam * (q1 * q1 - q2 * q2)], axis=-1)

    def d2V(q):
        q1, q2 = q[..., 0], q[..., 1]
        a = 1 + 2 * lam * q2
        b = 2 * lam * q1
        c = 1 - 2 * lam * q2
        return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)

    return _separable("henon_heiles_like", 2, m, V, dV, d2V, {"lam": lam})


def free_particle(n_dof=1, mass=1.0):
    n = _check_dof(n_dof)
    m = _vector_param(mass, n, "mass")
    return _separable(
        "free_particle", n, m,
        lambda q: np.zeros(q.shape[:-1]),
        lambda q: np.zeros_like(q),
        lambda q: np.zeros(q.shape[:-1] + (n, n)),
        {"n_dof": n, "mass": m.tolist()},
    )


def spin_pair(n_spins=2, coupling=1.0, field=0.5):
    """Classical spins in canonical coordinates q_i = cos(theta_i), p_i = phi_i.

    H = coupling * S1.S2 + field * (S1z + S2z) for unit spins, which in these
    coordinates reads coupling*(s1 s2 cos(phi1 - phi2) + z1 z2) + field*(z1 + z2)
    with s_i = sqrt(1 - z_i^2). With ``n_spins = 1`` only the Zeeman term
    remains. The form is an artifact choice: no Hamiltonian is prescribed for
    the spin hypothesis being tested.
    """
    if n_spins not in (1, 2):
        raise ConfigError(f"classical_spin_pair supports 1 or 2 spins, got {n_spins}")
    if n_spins == 2 and coupling == 0:
        raise ConfigError("classical_spin_pair needs a non-zero exchange coupling")
    J, B = float(coupling), float(field)
    params = {"n_spins": n_spins, "coupling": J, "field": B,
              "form": "J*S1.S2 + B*(S1z+S2z) in (cos theta, phi) coordinates"}

    if n_spins == 1:
        def H1(x):
            return B * np.asarray(x, dtype=float)[..., 0]

        def g1(x):
            x = np.asarray(x, dtype=float)
            return np.stack([np.full(x.shape[:-1], B), np.zeros(x.shape[:-1])], axis=-1)

        def h1(x):
            return np.zeros(np.shape(x)[:-1] + (2, 2))

        return ClassicalSystem("classical_spin_pair", 1, H1, g1, h1, metadata=params)

    def parts(x):
        x = np.asarray(x, dtype=float)
        z1, z2, f1, f2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        s1, s2 = np.sqrt(1 - z1 * z1), np.sqrt(1 - z2 * z2)
        return z1, z2, s1, s2, np.cos(f1 - f2), np.sin(f1 - f2)

    def H(x):
        z1, z2, s1, s2, c, _ = parts(x)
        return J * (s1 * s2 * c + z1 * z2) + B * (z1 + z2)

    def grad(x):
        z1, z2, s1, s2, c, sn = parts(x)
        return np.stack([
            J * (-z1 / s1 * s2 * c + z2) + B,
            J * (-z2 / s2 * s1 * c + z1) + B,
            -J * s1 * s2 * sn,
            J * s1 * s2 * sn,
        ], axis=-1)

    def hess(x):
        z1, z2, s1, s2, c, sn = parts(x)
        h = np.zeros(np.shape(x)[:-1] + (4, 4))
        h[..., 0, 0] = -J * s2 * c / s1**3
        h[..., 1, 1] = -J * s1 * c / s2**3
        h[..., 0, 1] = h[..., 1, 0] = J * (z1 * z2 / (s1 * s2) * c + 1)
        a = J * z1 * s2 * sn / s1
        b = J * z2 * s1 * sn / s2
        h[..., 0, 2] = h[..., 2, 0] = a
        h[..., 0, 3] = h[..., 3, 0] = -a
        h[..., 1, 2] = h[..., 2, 1] = b
        h[..., 1, 3] = h[..., 3, 1] = -b
        k = J * s1 * s2 * c
        h[..., 2, 2] = h[..., 3, 3] = -k
        h[..., 2, 3] = h[..., 3, 2] = k
        return h

    return ClassicalSystem("classical_spin_pair", 2, H, grad, hess, metadata=params)


def build_classical(spec: SystemSpec) -> ClassicalSystem:
    if spec.kind not in CLASSICAL_KINDS:
        raise ConfigError(f"{spec.kind!r} is not a classical system kind")
    p = spec.resolved()
    builders = {
        "oscillator_nd": oscillator,
        "pendulum": pendulum,
        "double_well": double_well,
        "henon_heiles_like": henon_heiles,
        "classical_spin_pair": spin_pair,
        "free_particle": free_particle,
    }
    return builders[spec.kind](**p)


def build(spec: SystemSpec):
    return build_quantum(spec) if spec.is_quantum else build_classical(spec)


def probe_points(sys: ClassicalSystem, n: int, seed: int = 0) -> np.ndarray:
    """Seeded random phase points inside each system's regular domain."""
    rng = np.random.default_rng(seed)
    if sys.name == "classical_spin_pair":
        z = rng.uniform(-0.9, 0.9, (n, sys.n_dof))
        phi = rng.uniform(-np.pi, np.pi, (n, sys.n_dof))
        return np.concatenate([z, phi], axis=1)
    return rng.uniform(-1.5, 1.5, (n, sys.dim))
